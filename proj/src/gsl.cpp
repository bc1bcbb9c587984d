#include "molgsl/gsl.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace molgsl::gsl {

SparseSym build_msg(const std::vector<fp::Fingerprint>& fps, double eps_tc) {
  if (eps_tc < 0.0 || eps_tc > 1.0) throw UsageError("build_msg: eps_tc must be in [0,1]");
  const std::size_t n = fps.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].emplace_back(i, 1.0);
#ifdef _OPENMP
#pragma omp parallel
  {
    std::vector<std::vector<std::pair<std::size_t, double>>> local(n);
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < (std::ptrdiff_t)n; ++i) {
      for (std::size_t j = (std::size_t)i + 1; j < n; ++j) {
        const double t = fp::tanimoto(fps[i], fps[j]);
        if (t >= eps_tc && t > 0.0) {
          local[i].emplace_back(j, t);
          local[j].emplace_back(i, t);
        }
      }
    }
#pragma omp critical
    for (std::size_t i = 0; i < n; ++i)
      rows[i].insert(rows[i].end(), local[i].begin(), local[i].end());
  }
#else
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double t = fp::tanimoto(fps[i], fps[j]);
      if (t >= eps_tc && t > 0.0) {
        rows[i].emplace_back(j, t);
        rows[j].emplace_back(i, t);
      }
    }
  }
#endif
  SparseSym s;
  s.n = n;
  s.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    s.row_ptr[i + 1] = s.row_ptr[i] + rows[i].size();
  }
  s.col.reserve(s.row_ptr[n]);
  s.val.reserve(s.row_ptr[n]);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, v] : rows[i]) {
      s.col.push_back(j);
      s.val.push_back(v);
    }
  }
  return s;
}

AdjNorm adj_norm_from_string(const std::string& s) {
  if (s == "none") return AdjNorm::None;
  if (s == "row") return AdjNorm::Row;
  if (s == "sym") return AdjNorm::Sym;
  throw UsageError("unknown gsl_adj_norm '" + s + "' (none|row|sym)");
}

std::string to_string(AdjNorm n) {
  switch (n) {
    case AdjNorm::None: return "none";
    case AdjNorm::Row: return "row";
    default: return "sym";
  }
}

GslParams GslParams::init(const GslConfig& cfg, std::size_t d_mol, std::mt19937_64& rng) {
  GslParams p;
  p.w_bank_in = init::uniform(cfg.perspectives, d_mol, 0.0, 1.0, rng);
  p.w_bank_hid = init::uniform(cfg.perspectives, cfg.hidden, 0.0, 1.0, rng);
  std::size_t in = d_mol;
  for (int l = 0; l < cfg.gnn_layers; ++l) {
    p.gcn_w.push_back(init::glorot(in, cfg.hidden, rng));
    in = cfg.hidden;
  }
  return p;
}

Tensor metric_similarity(const Tensor& h, const Tensor& w_bank, double eps_gsl) {
  if (w_bank.cols() != h.cols())
    throw UsageError("metric_similarity: perspective width " + std::to_string(w_bank.cols()) +
                     " != embedding width " + std::to_string(h.cols()));
  const std::size_t m = w_bank.rows();
  Tensor acc;
  for (std::size_t p = 0; p < m; ++p) {
    Tensor w = slice_rows(w_bank, p, p + 1);
    Tensor nw = l2_norm_rows(scale_cols(h, w));
    Tensor sim = matmul(nw, transpose(nw));
    acc = (p == 0) ? sim : add(acc, sim);
  }
  return threshold_at(scalar_mul(acc, 1.0 / (double)m), eps_gsl);
}

Tensor combine_adjacency(const Tensor& a0, const Tensor& a_t, const Tensor& a_1,
                         double lambda, double eta) {
  Tensor learned = add(a_t, a_1, eta, 1.0 - eta);
  return add(a0, learned, lambda, 1.0 - lambda);
}

Tensor normalize_adjacency(const Tensor& a, AdjNorm norm) {
  switch (norm) {
    case AdjNorm::None: return a;
    case AdjNorm::Row: return scale_rows(a, safe_recip(row_sums(a)));
    case AdjNorm::Sym: {
      Tensor r = safe_rsqrt(row_sums(a));
      return scale_cols(scale_rows(a, r), transpose(r));
    }
  }
  throw UsageError("normalize_adjacency: bad mode");
}

Tensor gcn_forward(const Tensor& a_tilde, const Tensor& x_r, const std::vector<Tensor>& w,
                   AdjNorm norm, double dropout_p, std::mt19937_64* rng, bool training) {
  if (w.empty()) throw UsageError("gcn_forward: no layer weights");
  Tensor an = normalize_adjacency(a_tilde, norm);
  Tensor h = x_r;
  for (std::size_t l = 0; l < w.size(); ++l) {
    h = matmul(matmul(an, h), w[l]);
    if (l + 1 < w.size()) {
      h = relu(h);
      if (dropout_p > 0.0 && rng != nullptr) h = dropout(h, dropout_p, *rng, training);
    }
  }
  return h;
}

GslOutput gsl_iterate(const Tensor& x_r, const Tensor& a0_dense, const GslParams& p,
                      const GslConfig& cfg, std::mt19937_64* rng, bool training) {
  if (cfg.iterations < 1) throw UsageError("gsl_iterate: T must be >= 1");
  Tensor h = x_r;
  Tensor a1;
  Tensor a_tilde;
  for (int t = 1; t <= cfg.iterations; ++t) {
    const Tensor& bank = (t == 1) ? p.w_bank_in : p.w_bank_hid;
    Tensor a_t = metric_similarity(h, bank, cfg.eps_gsl);
    if (t == 1) a1 = a_t;
    a_tilde = combine_adjacency(a0_dense, a_t, a1, cfg.lambda, cfg.eta);
    h = gcn_forward(a_tilde, x_r, p.gcn_w, cfg.norm, cfg.dropout, rng, training);
  }
  return {h, a_tilde};
}

AnchorSet sample_anchors(const std::vector<std::size_t>& train_rows, std::size_t count,
                         std::mt19937_64& rng) {
  if (count == 0 || count > train_rows.size())
    throw UsageError("sample_anchors: need 1 <= count <= training rows (" +
                     std::to_string(train_rows.size()) + "), got " + std::to_string(count));
  std::vector<std::size_t> pool = train_rows;
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng() % i]);
  AnchorSet a;
  a.anchor_indices.assign(pool.begin(), pool.begin() + (std::ptrdiff_t)count);
  std::sort(a.anchor_indices.begin(), a.anchor_indices.end());
  return a;
}

Tensor anchor_similarity(const Tensor& h, const AnchorSet& anchors, const Tensor& w_bank,
                         double eps_gsl) {
  if (anchors.size() == 0 || anchors.size() > h.rows())
    throw UsageError("anchor_similarity: anchor count out of range");
  const std::size_t m = w_bank.rows();
  Tensor acc;
  for (std::size_t p = 0; p < m; ++p) {
    Tensor w = slice_rows(w_bank, p, p + 1);
    Tensor nw = l2_norm_rows(scale_cols(h, w));
    Tensor na = gather_rows(nw, anchors.anchor_indices);
    Tensor sim = matmul(nw, transpose(na));
    acc = (p == 0) ? sim : add(acc, sim);
  }
  return threshold_at(scalar_mul(acc, 1.0 / (double)m), eps_gsl);
}

Tensor anchor_message_passing(const Tensor& r, const Tensor& x_r,
                              const std::vector<Tensor>& w, double dropout_p,
                              std::mt19937_64* rng, bool training) {
  if (w.empty()) throw UsageError("anchor_message_passing: no layer weights");
  constexpr double kTiny = 1e-12;
  Tensor node_deg = row_sums(r);
  Tensor p_mat = scale_rows(r, safe_recip(node_deg));
  Tensor rt = transpose(r);
  Tensor q_mat = scale_rows(rt, safe_recip(row_sums(rt)));

  // zero-degree nodes propagate only their self term (constant indicator,
  // recomputed from the forward values)
  Tensor zero_rows = Tensor::zeros(r.rows(), 1, false);
  bool any_zero = false;
  for (std::size_t i = 0; i < r.rows(); ++i) {
    if (node_deg.data()[i] <= kTiny) {
      zero_rows.data()[i] = 1.0;
      any_zero = true;
    }
  }

  Tensor h = x_r;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Tensor mixed = matmul(p_mat, matmul(q_mat, h));
    if (any_zero) mixed = add(mixed, scale_rows(h, zero_rows));
    h = matmul(mixed, w[l]);
    if (l + 1 < w.size()) {
      h = relu(h);
      if (dropout_p > 0.0 && rng != nullptr) h = dropout(h, dropout_p, *rng, training);
    }
  }
  return h;
}

AnchorOutput gsl_iterate_anchored(const Tensor& x_r, const AnchorSet& anchors,
                                  const GslParams& p, const GslConfig& cfg,
                                  std::mt19937_64* rng, bool training) {
  if (cfg.iterations < 1) throw UsageError("gsl_iterate_anchored: T must be >= 1");
  Tensor h = x_r;
  Tensor r;
  for (int t = 1; t <= cfg.iterations; ++t) {
    const Tensor& bank = (t == 1) ? p.w_bank_in : p.w_bank_hid;
    r = anchor_similarity(h, anchors, bank, cfg.eps_gsl);
    h = anchor_message_passing(r, x_r, p.gcn_w, cfg.dropout, rng, training);
  }
  return {h, r};
}

}  // namespace molgsl::gsl
