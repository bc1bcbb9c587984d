#pragma once

#include <random>
#include <vector>

#include "molgsl/chem.hpp"
#include "molgsl/tensor.hpp"

namespace molgsl::encoder {

struct GinConfig {
  int layers = 3;            // K
  std::size_t hidden = 64;   // per-layer width
  bool sum_pool = false;     // readout pooling: mean (default) or sum
};

struct GinLayerParams {
  Tensor w1, b1, w2, b2;  // 2-layer MLP, ReLU inside
  Tensor eps;             // learnable self-weight, 1x1
};

struct GinParams {
  Tensor proj_w, proj_b;  // input projection d_atom -> hidden
  std::vector<GinLayerParams> layers;
  std::size_t hidden = 0;

  std::size_t out_dim() const { return (layers.size() + 1) * hidden; }
  static GinParams init(const GinConfig& cfg, std::size_t d_atom, std::mt19937_64& rng);
};

// Constant per-molecule inputs for the encoder.
struct PreparedMol {
  Tensor features;  // n_atoms x d_atom
  Tensor adj;       // n_atoms x n_atoms, 1.0 at bonded pairs
};
PreparedMol prepare_molecule(const chem::MoleculeGraph& g);

// Per-layer node embeddings h^(0..K); h^(0) is the projected input and
// h^(k) = MLP_k((1+eps_k) h^(k-1) + sum_{u in N(v)} h_u^(k-1)).
std::vector<Tensor> gin_forward(const PreparedMol& mol, const GinParams& p);
std::vector<Tensor> gin_forward(const chem::MoleculeGraph& g, const Tensor& features,
                                const GinParams& p);

// Pools nodes within each layer, then concatenates the K+1 pooled vectors.
Tensor readout(const std::vector<Tensor>& layer_embeddings, bool sum_pool);

Tensor encode_molecule(const PreparedMol& mol, const GinParams& p, const GinConfig& cfg);

// Stacks readout outputs for every molecule; row order follows input order.
Tensor encode_all(const std::vector<PreparedMol>& mols, const GinParams& p,
                  const GinConfig& cfg);

}  // namespace molgsl::encoder
