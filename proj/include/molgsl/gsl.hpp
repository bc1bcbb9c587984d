#pragma once

#include <random>
#include <vector>

#include "molgsl/fingerprint.hpp"
#include "molgsl/tensor.hpp"

namespace molgsl::gsl {

// Thresholded pairwise Tanimoto adjacency with unit diagonal. Entries below
// eps_tc are dropped; the result is symmetric and non-negative.
SparseSym build_msg(const std::vector<fp::Fingerprint>& fps, double eps_tc);

enum class AdjNorm { None, Row, Sym };
AdjNorm adj_norm_from_string(const std::string& s);
std::string to_string(AdjNorm n);

struct GslConfig {
  int iterations = 2;       // T
  int gnn_layers = 2;       // L
  std::size_t hidden = 64;  // inter-molecule GCN width
  int perspectives = 2;     // m
  double eps_gsl = 0.0;
  double lambda = 0.8;      // share of the initial graph in the fusion
  double eta = 0.8;         // share of the t-th learned graph
  AdjNorm norm = AdjNorm::Row;
  double dropout = 0.0;
};

struct GslParams {
  // one perspective bank per embedding width: X_r at t = 1, hidden for t > 1
  Tensor w_bank_in;   // m x d_mol
  Tensor w_bank_hid;  // m x hidden
  std::vector<Tensor> gcn_w;  // L layers: d_mol->h then h->h

  static GslParams init(const GslConfig& cfg, std::size_t d_mol, std::mt19937_64& rng);
};

// Mean weighted-cosine similarity over perspectives, entries below eps_gsl
// zeroed. Output is symmetric with entries in [-1,1] pre-threshold; with
// eps_gsl >= 0 the result is non-negative.
Tensor metric_similarity(const Tensor& h, const Tensor& w_bank, double eps_gsl);

// lambda*A0 + (1-lambda)*(eta*A_t + (1-eta)*A_1)
Tensor combine_adjacency(const Tensor& a0, const Tensor& a_t, const Tensor& a_1,
                         double lambda, double eta);

Tensor normalize_adjacency(const Tensor& a, AdjNorm norm);

// L-layer GCN: H <- ReLU(N(A)·H·W_l), final layer linear; H starts from x_r.
Tensor gcn_forward(const Tensor& a_tilde, const Tensor& x_r, const std::vector<Tensor>& w,
                   AdjNorm norm, double dropout = 0.0, std::mt19937_64* rng = nullptr,
                   bool training = false);

struct GslOutput {
  Tensor h;        // H^(T)
  Tensor a_tilde;  // fused adjacency of the final iteration (pre-normalization)
};

// Alternating refinement: A^(t) from H^(t-1) (H^(0) = X_r), fuse with A0 and
// the cached A^(1), then rebuild H from X_r through the GCN.
GslOutput gsl_iterate(const Tensor& x_r, const Tensor& a0_dense, const GslParams& p,
                      const GslConfig& cfg, std::mt19937_64* rng = nullptr,
                      bool training = false);

// ---- anchor path (no NxN allocation anywhere) -------------------------------

struct AnchorSet {
  std::vector<std::size_t> anchor_indices;
  std::size_t size() const { return anchor_indices.size(); }
};

// Uniform sample without replacement from training-set rows.
AnchorSet sample_anchors(const std::vector<std::size_t>& train_rows, std::size_t count,
                         std::mt19937_64& rng);

// N x s node-anchor weighted-cosine similarity, thresholded at eps_gsl.
Tensor anchor_similarity(const Tensor& h, const AnchorSet& anchors, const Tensor& w_bank,
                         double eps_gsl);

// Node -> anchor -> node propagation: each layer computes
// H <- ReLU(Dn^-1 R (Da^-1 R^T H) W), the two-step transition of a random
// walk through the anchors. Zero-degree rows keep their self term (degree
// clamped to 1 in the normalizations).
Tensor anchor_message_passing(const Tensor& r, const Tensor& x_r,
                              const std::vector<Tensor>& w, double dropout = 0.0,
                              std::mt19937_64* rng = nullptr, bool training = false);

struct AnchorOutput {
  Tensor h;  // H^(T)
  Tensor r;  // node-anchor similarity of the final iteration
};

AnchorOutput gsl_iterate_anchored(const Tensor& x_r, const AnchorSet& anchors,
                                  const GslParams& p, const GslConfig& cfg,
                                  std::mt19937_64* rng = nullptr, bool training = false);

}  // namespace molgsl::gsl
