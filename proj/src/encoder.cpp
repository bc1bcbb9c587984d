#include "molgsl/encoder.hpp"

namespace molgsl::encoder {

GinParams GinParams::init(const GinConfig& cfg, std::size_t d_atom, std::mt19937_64& rng) {
  GinParams p;
  p.hidden = cfg.hidden;
  p.proj_w = init::glorot(d_atom, cfg.hidden, rng);
  p.proj_b = Tensor::zeros(1, cfg.hidden, true);
  for (int k = 0; k < cfg.layers; ++k) {
    GinLayerParams l;
    l.w1 = init::glorot(cfg.hidden, cfg.hidden, rng);
    l.b1 = Tensor::zeros(1, cfg.hidden, true);
    l.w2 = init::glorot(cfg.hidden, cfg.hidden, rng);
    l.b2 = Tensor::zeros(1, cfg.hidden, true);
    l.eps = Tensor::scalar(0.0, true);
    p.layers.push_back(std::move(l));
  }
  return p;
}

PreparedMol prepare_molecule(const chem::MoleculeGraph& g) {
  PreparedMol m;
  m.features = chem::featurize(g);
  const std::size_t n = g.num_atoms();
  m.adj = Tensor::zeros(n, n, false);
  for (const auto& b : g.bonds) {
    m.adj.data()[(std::size_t)b.a * n + (std::size_t)b.b] = 1.0;
    m.adj.data()[(std::size_t)b.b * n + (std::size_t)b.a] = 1.0;
  }
  return m;
}

std::vector<Tensor> gin_forward(const PreparedMol& mol, const GinParams& p) {
  std::vector<Tensor> out;
  Tensor h = add(matmul(mol.features, p.proj_w), p.proj_b);
  out.push_back(h);
  for (const auto& l : p.layers) {
    Tensor pre = add(add(h, scale(h, l.eps)), matmul(mol.adj, h));
    Tensor hidden = relu(add(matmul(pre, l.w1), l.b1));
    h = add(matmul(hidden, l.w2), l.b2);
    out.push_back(h);
  }
  return out;
}

std::vector<Tensor> gin_forward(const chem::MoleculeGraph& g, const Tensor& features,
                                const GinParams& p) {
  if (features.rows() != g.num_atoms())
    throw UsageError("gin_forward: feature rows (" + std::to_string(features.rows()) +
                     ") != atom count (" + std::to_string(g.num_atoms()) + ")");
  PreparedMol m;
  m.features = features;
  const std::size_t n = g.num_atoms();
  m.adj = Tensor::zeros(n, n, false);
  for (const auto& b : g.bonds) {
    m.adj.data()[(std::size_t)b.a * n + (std::size_t)b.b] = 1.0;
    m.adj.data()[(std::size_t)b.b * n + (std::size_t)b.a] = 1.0;
  }
  return gin_forward(m, p);
}

Tensor readout(const std::vector<Tensor>& layer_embeddings, bool sum_pool) {
  if (layer_embeddings.empty()) throw UsageError("readout: no layer embeddings");
  std::vector<Tensor> pooled;
  pooled.reserve(layer_embeddings.size());
  for (const Tensor& h : layer_embeddings)
    pooled.push_back(sum_pool ? sum_rows(h) : mean_rows(h));
  return concat(pooled, 1);
}

Tensor encode_molecule(const PreparedMol& mol, const GinParams& p, const GinConfig& cfg) {
  return readout(gin_forward(mol, p), cfg.sum_pool);
}

Tensor encode_all(const std::vector<PreparedMol>& mols, const GinParams& p,
                  const GinConfig& cfg) {
  std::vector<Tensor> rows;
  rows.reserve(mols.size());
  for (const auto& m : mols) rows.push_back(encode_molecule(m, p, cfg));
  return concat(rows, 0);
}

}  // namespace molgsl::encoder
