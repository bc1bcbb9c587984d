#include "molgsl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace molgsl::train {

namespace {

constexpr char kParamMagic[9] = "MGSLPRM1";

bool is_finite(double x) { return std::isfinite(x); }

std::vector<std::size_t> positions_in(const std::vector<std::size_t>& universe,
                                      const std::vector<std::size_t>& subset) {
  // universe sorted; returns the position of each subset element
  std::vector<std::size_t> pos;
  pos.reserve(subset.size());
  for (std::size_t v : subset) {
    const auto it = std::lower_bound(universe.begin(), universe.end(), v);
    if (it == universe.end() || *it != v)
      throw UsageError("internal: row " + std::to_string(v) + " missing from subgraph");
    pos.push_back((std::size_t)(it - universe.begin()));
  }
  return pos;
}

}  // namespace

double lr_at(const ScheduleConfig& s, int epoch) {
  if (epoch < 0 || epoch >= s.max_epoch)
    throw UsageError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                     std::to_string(s.max_epoch) + ")");
  if (epoch < s.warmup_epochs)
    return s.max_lr * (double)(epoch + 1) / (double)s.warmup_epochs;
  const int denom = s.max_epoch - 1 - s.warmup_epochs;
  if (denom <= 0) return s.final_lr;
  const double frac = (double)(epoch - s.warmup_epochs) / (double)denom;
  return s.max_lr + (s.final_lr - s.max_lr) * std::pow(frac, s.power);
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "not-any") return Variant::NotAny;
  if (s == "only-a0") return Variant::OnlyA0;
  if (s == "only-gsl") return Variant::OnlyGsl;
  if (s == "no-gsl-loss") return Variant::NoGslLoss;
  throw UsageError("unknown variant '" + s +
                   "' (full|not-any|only-a0|only-gsl|no-gsl-loss)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NotAny: return "not-any";
    case Variant::OnlyA0: return "only-a0";
    case Variant::OnlyGsl: return "only-gsl";
    default: return "no-gsl-loss";
  }
}

Tensor pred_loss(const Tensor& y_hat_rows, const Tensor& y_rows, const Tensor& mask_rows,
                 data::TaskType task) {
  if (y_hat_rows.rows() == 0) throw UsageError("pred_loss: empty row selection");
  if (task == data::TaskType::Classification)
    return bce_with_logits(y_hat_rows, y_rows, mask_rows);
  double count = 0;
  for (double m : mask_rows.data()) count += (m != 0.0) ? 1.0 : 0.0;
  if (count == 0.0) throw UsageError("pred_loss: empty mask");
  Tensor diff = elementwise_mul(add(y_hat_rows, y_rows, 1.0, -1.0), mask_rows);
  return scalar_mul(sum(elementwise_mul(diff, diff)), 1.0 / count);
}

PairTargets classification_pair_targets(const std::vector<std::size_t>& rows,
                                        const std::vector<std::size_t>& cols,
                                        const std::vector<double>& labels,
                                        const std::vector<bool>& present,
                                        std::size_t n_tasks) {
  PairTargets t;
  const std::size_t nr = rows.size(), nc = cols.size();
  t.a_star = Tensor::zeros(nr, nc, false);
  t.weight = Tensor::zeros(nr, nc, false);
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      std::size_t co = 0, eq = 0;
      for (std::size_t k = 0; k < n_tasks; ++k) {
        if (present[rows[i] * n_tasks + k] && present[cols[j] * n_tasks + k]) {
          ++co;
          if (labels[rows[i] * n_tasks + k] == labels[cols[j] * n_tasks + k]) ++eq;
        }
      }
      if (co > 0) {
        t.a_star.data()[i * nc + j] = (double)eq / (double)co;
        t.weight.data()[i * nc + j] = 1.0;
        t.count += 1.0;
      }
    }
  }
  return t;
}

PairTargets regression_pair_targets(const std::vector<std::size_t>& rows,
                                    const std::vector<std::size_t>& cols,
                                    const std::vector<double>& y_std, double eps_y) {
  PairTargets t;
  const std::size_t nr = rows.size(), nc = cols.size();
  t.a_star = Tensor::zeros(nr, nc, false);
  t.weight = Tensor::zeros(nr, nc, false);
  for (std::size_t i = 0; i < nr; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      if (rows[i] == cols[j]) continue;
      if (std::fabs(y_std[rows[i]] - y_std[cols[j]]) > eps_y) {
        t.weight.data()[i * nc + j] = 1.0;
        t.count += 1.0;
      }
    }
  }
  return t;
}

Tensor gsl_structure_loss(const Tensor& sim_block, const PairTargets& targets, bool raw_sum) {
  if (sim_block.rows() != targets.a_star.rows() || sim_block.cols() != targets.a_star.cols())
    throw UsageError("gsl_structure_loss: similarity block does not match targets");
  if (targets.count == 0.0) return Tensor::scalar(0.0, false);
  Tensor diff = elementwise_mul(add(sim_block, targets.a_star, 1.0, -1.0), targets.weight);
  Tensor total = sum(elementwise_mul(diff, diff));
  return raw_sum ? total : scalar_mul(total, 1.0 / targets.count);
}

void ParamRegistry::add(const std::string& name, const Tensor& t, bool trainable) {
  items.push_back({name, t, trainable});
}

std::vector<Tensor> ParamRegistry::trainable() const {
  std::vector<Tensor> out;
  for (const auto& it : items)
    if (it.trainable) out.push_back(it.tensor);
  return out;
}

void save_params(const std::string& path, const ParamRegistry& reg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write parameter file: " + path);
  out.write(kParamMagic, 8);
  const std::uint32_t count = (std::uint32_t)reg.items.size();
  out.write((const char*)&count, 4);
  for (const auto& it : reg.items) {
    const std::uint16_t len = (std::uint16_t)it.name.size();
    out.write((const char*)&len, 2);
    out.write(it.name.data(), len);
    const std::uint32_t r = (std::uint32_t)it.tensor.rows(), c = (std::uint32_t)it.tensor.cols();
    out.write((const char*)&r, 4);
    out.write((const char*)&c, 4);
    out.write((const char*)it.tensor.data().data(),
              (std::streamsize)(it.tensor.size() * sizeof(double)));
  }
}

void load_params(const std::string& path, ParamRegistry& reg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open parameter file: " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kParamMagic, 8) != 0)
    throw DataError("bad parameter file magic in " + path);
  std::uint32_t count = 0;
  in.read((char*)&count, 4);
  if (count != reg.items.size())
    throw DataError("parameter file has " + std::to_string(count) + " entries, model has " +
                    std::to_string(reg.items.size()));
  for (auto& it : reg.items) {
    std::uint16_t len = 0;
    in.read((char*)&len, 2);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint32_t r = 0, c = 0;
    in.read((char*)&r, 4);
    in.read((char*)&c, 4);
    if (name != it.name || r != it.tensor.rows() || c != it.tensor.cols())
      throw DataError("parameter mismatch: file has " + name + "[" + std::to_string(r) + "x" +
                      std::to_string(c) + "], model expects " + it.name);
    in.read((char*)it.tensor.data().data(), (std::streamsize)(it.tensor.size() * sizeof(double)));
  }
  if (!in) throw DataError("truncated parameter file: " + path);
}

Adam::Adam(std::vector<Tensor> params, double weight_decay, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
  const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const bool has = p.has_grad();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = (has ? p.grad()[j] : 0.0) + wd_ * p.data()[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p.data()[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Model Model::init(const TrainConfig& cfg, std::size_t d_atom, std::size_t n_tasks,
                  data::TaskType task, std::mt19937_64& rng) {
  Model m;
  m.cfg = cfg;
  m.d_atom = d_atom;
  m.n_tasks = n_tasks;
  m.task = task;
  m.gin = encoder::GinParams::init(cfg.gin, d_atom, rng);
  m.gslp = gsl::GslParams::init(cfg.gsl, m.gin.out_dim(), rng);
  const std::size_t fc_in =
      cfg.variant == Variant::NotAny ? m.gin.out_dim() : cfg.gsl.hidden;
  m.fc_w = init::glorot(fc_in, n_tasks, rng);
  m.fc_b = Tensor::zeros(1, n_tasks, true);
  m.y_mean = Tensor::zeros(1, n_tasks, false);
  m.y_std = Tensor::full(1, n_tasks, 1.0, false);
  return m;
}

ParamRegistry Model::registry() const {
  ParamRegistry r;
  r.add("gin.proj.w", gin.proj_w);
  r.add("gin.proj.b", gin.proj_b);
  for (std::size_t k = 0; k < gin.layers.size(); ++k) {
    const auto& l = gin.layers[k];
    const std::string p = "gin.layer" + std::to_string(k) + ".";
    r.add(p + "w1", l.w1);
    r.add(p + "b1", l.b1);
    r.add(p + "w2", l.w2);
    r.add(p + "b2", l.b2);
    r.add(p + "eps", l.eps);
  }
  r.add("gsl.w_bank_in", gslp.w_bank_in);
  r.add("gsl.w_bank_hid", gslp.w_bank_hid);
  for (std::size_t l = 0; l < gslp.gcn_w.size(); ++l)
    r.add("gsl.gcn.w" + std::to_string(l), gslp.gcn_w[l]);
  r.add("fc.w", fc_w);
  r.add("fc.b", fc_b);
  r.add("target.mean", y_mean, /*trainable=*/false);
  r.add("target.std", y_std, /*trainable=*/false);
  return r;
}

Tensor Model::predict(const Tensor& h, std::mt19937_64* rng, bool training) const {
  Tensor in = h;
  if (cfg.gsl.dropout > 0.0 && rng != nullptr)
    in = dropout(in, cfg.gsl.dropout, *rng, training);
  return add(matmul(in, fc_w), fc_b);
}

PreparedData prepare(const data::Dataset& ds, const data::SplitMask& split,
                     const TrainConfig& cfg, Model& model, std::mt19937_64& rng) {
  PreparedData prep;
  prep.n = ds.size();
  prep.n_tasks = ds.n_tasks;
  prep.task = ds.task;
  prep.split = split;
  if (split.train.empty()) throw UsageError("prepare: empty training split");

  const bool dense = cfg.anchors == 0;
  if (dense && prep.n > kMaxDenseMolecules)
    throw UsageError("dataset has " + std::to_string(prep.n) + " molecules; dense "
                     "adjacencies are capped at " + std::to_string(kMaxDenseMolecules) +
                     ", use anchors");
  if (!dense && (cfg.variant == Variant::OnlyA0 || cfg.variant == Variant::OnlyGsl))
    throw UsageError("variant '" + to_string(cfg.variant) + "' is not defined on the "
                     "anchor path");
  if (!dense && cfg.exclude_test_from_msg)
    throw UsageError("exclude_test_from_msg is a dense-path option");

  prep.mols.reserve(prep.n);
  for (const auto& rec : ds.records) prep.mols.push_back(encoder::prepare_molecule(rec.graph));

  // labels + mask
  prep.raw_labels.assign(prep.n * prep.n_tasks, 0.0);
  prep.present.assign(prep.n * prep.n_tasks, false);
  for (std::size_t i = 0; i < prep.n; ++i) {
    for (std::size_t t = 0; t < prep.n_tasks; ++t) {
      prep.raw_labels[i * prep.n_tasks + t] = ds.records[i].labels[t];
      prep.present[i * prep.n_tasks + t] = ds.records[i].present[t];
    }
  }
  prep.std_labels = prep.raw_labels;
  if (ds.task == data::TaskType::Regression) {
    // standardize per task on the training split
    for (std::size_t t = 0; t < prep.n_tasks; ++t) {
      double mean = 0, count = 0;
      for (std::size_t i : split.train) {
        if (prep.present[i * prep.n_tasks + t]) {
          mean += prep.raw_labels[i * prep.n_tasks + t];
          count += 1;
        }
      }
      if (count == 0) throw UsageError("prepare: no training labels for task " +
                                       std::to_string(t));
      mean /= count;
      double var = 0;
      for (std::size_t i : split.train) {
        if (prep.present[i * prep.n_tasks + t]) {
          const double d = prep.raw_labels[i * prep.n_tasks + t] - mean;
          var += d * d;
        }
      }
      const double sd = std::sqrt(var / count);
      model.y_mean.data()[t] = mean;
      model.y_std.data()[t] = sd > 1e-12 ? sd : 1.0;
      for (std::size_t i = 0; i < prep.n; ++i)
        prep.std_labels[i * prep.n_tasks + t] =
            (prep.raw_labels[i * prep.n_tasks + t] - model.y_mean.data()[t]) /
            model.y_std.data()[t];
    }
  }
  prep.labels = Tensor::from(prep.n, prep.n_tasks, prep.std_labels);
  {
    std::vector<double> m(prep.n * prep.n_tasks, 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = prep.present[i] ? 1.0 : 0.0;
    prep.lmask = Tensor::from(prep.n, prep.n_tasks, std::move(m));
  }

  // fingerprints + initial similarity graph
  const bool needs_msg = cfg.variant != Variant::NotAny;
  if (needs_msg) {
    prep.fps.reserve(prep.n);
    for (const auto& rec : ds.records) prep.fps.push_back(fp::ecfp(rec.graph, 2, 2048));
  }
  if (needs_msg && dense) {
    if (cfg.variant == Variant::OnlyGsl) {
      prep.a0_dense = Tensor::zeros(prep.n, prep.n, false);
      for (std::size_t i = 0; i < prep.n; ++i) prep.a0_dense.data()[i * prep.n + i] = 1.0;
    } else {
      prep.a0 = gsl::build_msg(prep.fps, cfg.tc_epsilon);
      prep.a0_dense = prep.a0.to_dense();
    }
  }
  if (!dense) {
    prep.anchors = gsl::sample_anchors(split.train, cfg.anchors, rng);
  }

  // exclude-test subgraph machinery
  if (cfg.exclude_test_from_msg) {
    prep.tv_rows = split.train;
    prep.tv_rows.insert(prep.tv_rows.end(), split.valid.begin(), split.valid.end());
    std::sort(prep.tv_rows.begin(), prep.tv_rows.end());
    for (std::size_t v : prep.tv_rows) prep.mols_tv.push_back(prep.mols[v]);
    if (needs_msg) {
      std::vector<fp::Fingerprint> fps_tv;
      for (std::size_t v : prep.tv_rows) fps_tv.push_back(prep.fps[v]);
      if (cfg.variant == Variant::OnlyGsl) {
        prep.a0_dense_tv = Tensor::zeros(prep.tv_rows.size(), prep.tv_rows.size(), false);
        for (std::size_t i = 0; i < prep.tv_rows.size(); ++i)
          prep.a0_dense_tv.data()[i * prep.tv_rows.size() + i] = 1.0;
      } else {
        prep.a0_dense_tv = gsl::build_msg(fps_tv, cfg.tc_epsilon).to_dense();
      }
      prep.learned_mask = Tensor::zeros(prep.n, prep.n, false);
      for (std::size_t a : prep.tv_rows)
        for (std::size_t b : prep.tv_rows) prep.learned_mask.data()[a * prep.n + b] = 1.0;
    }
    prep.train_pos_graph = positions_in(prep.tv_rows, split.train);
  } else {
    prep.train_pos_graph = split.train;
  }

  // GSL-loss constants
  prep.use_gsl_loss = cfg.mu > 0.0 && cfg.variant != Variant::NotAny &&
                      cfg.variant != Variant::OnlyA0 && cfg.variant != Variant::NoGslLoss;
  if (prep.use_gsl_loss) {
    const std::vector<std::size_t>& rows = split.train;
    const std::vector<std::size_t> cols = dense ? split.train : prep.anchors.anchor_indices;
    if (ds.task == data::TaskType::Classification) {
      prep.pair_targets = classification_pair_targets(rows, cols, prep.raw_labels,
                                                      prep.present, prep.n_tasks);
    } else {
      if (prep.n_tasks != 1)
        throw UsageError("the regression GSL loss is defined for single-task data");
      prep.pair_targets = regression_pair_targets(rows, cols, prep.std_labels, cfg.eps_y);
    }
    prep.pair_rows_graph = prep.train_pos_graph;
    if (dense) {
      prep.pair_cols_graph = prep.train_pos_graph;
    } else {
      prep.pair_cols_graph.clear();  // anchor columns already index R's columns
    }
  }
  return prep;
}

namespace {

// Dense refinement with learned entries confined to the train+valid block
// (inference path of exclude_test_from_msg).
gsl::GslOutput masked_gsl_iterate(const Tensor& x_r, const Tensor& a0_dense,
                                  const Tensor& learned_mask, const gsl::GslParams& p,
                                  const gsl::GslConfig& cfg) {
  Tensor h = x_r;
  Tensor a1;
  Tensor a_tilde;
  for (int t = 1; t <= cfg.iterations; ++t) {
    const Tensor& bank = (t == 1) ? p.w_bank_in : p.w_bank_hid;
    Tensor a_t = elementwise_mul(gsl::metric_similarity(h, bank, cfg.eps_gsl), learned_mask);
    if (t == 1) a1 = a_t;
    a_tilde = gsl::combine_adjacency(a0_dense, a_t, a1, cfg.lambda, cfg.eta);
    h = gsl::gcn_forward(a_tilde, x_r, p.gcn_w, cfg.norm);
  }
  return {h, a_tilde};
}

}  // namespace

Forward forward(const Model& model, const PreparedData& prep, std::mt19937_64* rng,
                bool training) {
  const TrainConfig& cfg = model.cfg;
  Forward f;
  const bool subgraph = cfg.exclude_test_from_msg && training;
  const std::vector<encoder::PreparedMol>& mols = subgraph ? prep.mols_tv : prep.mols;
  if (subgraph) {
    f.graph_rows = prep.tv_rows;
  } else {
    f.graph_rows.resize(prep.n);
    for (std::size_t i = 0; i < prep.n; ++i) f.graph_rows[i] = i;
  }

  f.x_r = encoder::encode_all(mols, model.gin, cfg.gin);
  if (cfg.freeze_encoder) f.x_r = f.x_r.detach();

  switch (cfg.variant) {
    case Variant::NotAny: {
      f.h = f.x_r;
      break;
    }
    case Variant::OnlyA0: {
      const Tensor& a0 = subgraph ? prep.a0_dense_tv : prep.a0_dense;
      f.a_tilde = a0;
      f.h = gsl::gcn_forward(a0, f.x_r, model.gslp.gcn_w, cfg.gsl.norm, cfg.gsl.dropout, rng,
                             training);
      break;
    }
    default: {
      if (cfg.anchors > 0) {
        gsl::AnchorOutput out =
            gsl::gsl_iterate_anchored(f.x_r, prep.anchors, model.gslp, cfg.gsl, rng, training);
        f.h = out.h;
        f.r = out.r;
      } else if (cfg.exclude_test_from_msg && !training) {
        gsl::GslOutput out = masked_gsl_iterate(f.x_r, prep.a0_dense, prep.learned_mask,
                                                model.gslp, cfg.gsl);
        f.h = out.h;
        f.a_tilde = out.a_tilde;
      } else {
        const Tensor& a0 = subgraph ? prep.a0_dense_tv : prep.a0_dense;
        gsl::GslOutput out = gsl::gsl_iterate(f.x_r, a0, model.gslp, cfg.gsl, rng, training);
        f.h = out.h;
        f.a_tilde = out.a_tilde;
      }
      break;
    }
  }
  f.y_hat = model.predict(f.h, rng, training);
  return f;
}

Losses compute_losses(const Model& model, const PreparedData& prep, const Forward& fwd) {
  const TrainConfig& cfg = model.cfg;
  Losses out;
  Tensor yh_tr = gather_rows(fwd.y_hat, prep.train_pos_graph);
  Tensor y_tr = gather_rows(prep.labels, prep.split.train);
  Tensor m_tr = gather_rows(prep.lmask, prep.split.train);
  out.pred = pred_loss(yh_tr, y_tr, m_tr, prep.task);
  out.total = out.pred;
  if (prep.use_gsl_loss) {
    Tensor sim_block;
    if (cfg.anchors > 0) {
      sim_block = gather_rows(fwd.r, prep.pair_rows_graph);
    } else {
      Tensor rows = gather_rows(fwd.a_tilde, prep.pair_rows_graph);
      sim_block = gather_rows(transpose(rows), prep.pair_cols_graph);
      sim_block = transpose(sim_block);
    }
    out.gsl = gsl_structure_loss(sim_block, prep.pair_targets, cfg.gsl_loss_raw_sum);
    out.gsl_value = out.gsl.item();
    out.total = add(out.pred, out.gsl, 1.0, cfg.mu);
  }
  return out;
}

std::vector<double> predict_all(const Model& model, const PreparedData& prep,
                                bool probabilities) {
  Forward f = forward(model, prep, nullptr, false);  // eval graph covers all rows
  Tensor yh = f.y_hat;
  std::vector<double> out(prep.n * prep.n_tasks, 0.0);
  for (std::size_t i = 0; i < prep.n; ++i) {
    for (std::size_t t = 0; t < prep.n_tasks; ++t) {
      double v = yh.at(i, t);
      if (prep.task == data::TaskType::Classification) {
        if (probabilities) v = 1.0 / (1.0 + std::exp(-v));
      } else {
        v = v * model.y_std.data()[t] + model.y_mean.data()[t];
      }
      out[i * prep.n_tasks + t] = v;
    }
  }
  return out;
}

double evaluate_rows(const Model& model, const PreparedData& prep,
                     const std::vector<double>& predictions,
                     const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw UsageError("evaluate_rows: empty row set");
  if (prep.task == data::TaskType::Classification) {
    std::vector<double> s, y;
    std::vector<bool> present;
    s.reserve(rows.size() * prep.n_tasks);
    for (std::size_t i : rows) {
      for (std::size_t t = 0; t < prep.n_tasks; ++t) {
        s.push_back(predictions[i * prep.n_tasks + t]);
        y.push_back(prep.raw_labels[i * prep.n_tasks + t]);
        present.push_back(prep.present[i * prep.n_tasks + t]);
      }
    }
    return data::roc_auc_multitask(s, y, present, prep.n_tasks);
  }
  std::vector<double> p, y;
  for (std::size_t i : rows) {
    for (std::size_t t = 0; t < prep.n_tasks; ++t) {
      if (prep.present[i * prep.n_tasks + t]) {
        p.push_back(predictions[i * prep.n_tasks + t]);
        y.push_back(prep.raw_labels[i * prep.n_tasks + t]);
      }
    }
  }
  (void)model;
  return data::rmse(p, y);
}

FitResult fit(Model& model, PreparedData& prep, const TrainConfig& cfg) {
  if (cfg.schedule.max_epoch < 1) throw UsageError("fit: max_epoch must be >= 1");
  FitResult result;
  result.metric_name =
      prep.task == data::TaskType::Classification ? "roc_auc" : "rmse";
  ParamRegistry reg = model.registry();
  Adam adam(reg.trainable(), cfg.weight_decay);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  const bool maximize = prep.task == data::TaskType::Classification;
  std::vector<std::vector<double>> best_snapshot;

  for (int epoch = 0; epoch < cfg.schedule.max_epoch; ++epoch) {
    const double lr = lr_at(cfg.schedule, epoch);
    double train_loss = 0, pl = 0, gl = 0;
    {
      Tape tape;
      TapeScope scope(tape);
      Forward fwd = forward(model, prep, &dropout_rng, true);
      Losses losses = compute_losses(model, prep, fwd);
      train_loss = losses.total.item();
      pl = losses.pred.item();
      gl = losses.gsl_value;
      if (!is_finite(train_loss))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      tape.backward(losses.total);
    }
    adam.step(lr);
    adam.zero_grad();

    const std::vector<double> preds = predict_all(model, prep, true);
    const double valid_metric = evaluate_rows(model, prep, preds, prep.split.valid);
    double test_metric = std::numeric_limits<double>::quiet_NaN();
    if (!prep.split.test.empty())
      test_metric = evaluate_rows(model, prep, preds, prep.split.test);

    result.history.push_back({epoch, lr, train_loss, pl, gl, valid_metric, test_metric});

    const bool better = result.best_epoch < 0 ||
                        (maximize ? valid_metric > result.best_valid
                                  : valid_metric < result.best_valid);
    if (better) {
      result.best_epoch = epoch;
      result.best_valid = valid_metric;
      result.test_at_best = test_metric;
      best_snapshot.clear();
      for (const auto& item : reg.items) best_snapshot.push_back(item.tensor.data());
    }
  }
  // restore the best-validation parameters
  for (std::size_t i = 0; i < reg.items.size(); ++i)
    reg.items[i].tensor.data() = best_snapshot[i];
  return result;
}

}  // namespace molgsl::train
