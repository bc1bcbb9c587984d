#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "molgsl/data.hpp"
#include "molgsl/encoder.hpp"
#include "molgsl/gsl.hpp"
#include "molgsl/tensor.hpp"

namespace molgsl::train {

// ---- learning-rate schedule -------------------------------------------------

struct ScheduleConfig {
  double max_lr = 1e-3;
  int warmup_epochs = 2;
  double final_lr = 1e-9;
  int max_epoch = 300;
  double power = 1.0;  // 1 = linear decay
};

// Linear warmup over warmup_epochs up to max_lr, then polynomial decay ending
// at final_lr exactly on the last epoch.
double lr_at(const ScheduleConfig& s, int epoch);

// ---- ablation variants -------------------------------------------------------

enum class Variant { Full, NotAny, OnlyA0, OnlyGsl, NoGslLoss };
Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

// ---- run configuration (the trainable parts) ---------------------------------

struct TrainConfig {
  encoder::GinConfig gin;
  gsl::GslConfig gsl;
  ScheduleConfig schedule;
  double weight_decay = 1e-5;
  double mu = 0.1;      // GSL-loss coefficient
  double eps_y = 0.01;  // regression pair-difference threshold (standardized)
  bool gsl_loss_raw_sum = false;
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  std::size_t anchors = 0;  // 0 = dense path
  double tc_epsilon = 0.5;
  bool freeze_encoder = false;
  bool exclude_test_from_msg = false;
};

// Dense adjacencies are kept up to this many molecules; beyond it the anchor
// path is required.
inline constexpr std::size_t kMaxDenseMolecules = 5000;

// ---- losses ------------------------------------------------------------------

// Mean BCE-with-logits (classification) or mean squared error (regression)
// over the given rows; mask selects the (row, task) cells with labels.
Tensor pred_loss(const Tensor& y_hat_rows, const Tensor& y_rows, const Tensor& mask_rows,
                 data::TaskType task);

// Pairwise targets between a row group and a column group of molecules.
// Classification: a_star = fraction of co-present tasks with equal labels,
// weight = 0 for pairs with no co-present task. Regression: weight = 1 only
// where |y_i - y_j| > eps_y (standardized, task 0).
struct PairTargets {
  Tensor a_star;  // |rows| x |cols|
  Tensor weight;  // |rows| x |cols|, 0/1
  double count = 0;
};
PairTargets classification_pair_targets(const std::vector<std::size_t>& rows,
                                        const std::vector<std::size_t>& cols,
                                        const std::vector<double>& labels,
                                        const std::vector<bool>& present,
                                        std::size_t n_tasks);
PairTargets regression_pair_targets(const std::vector<std::size_t>& rows,
                                    const std::vector<std::size_t>& cols,
                                    const std::vector<double>& y_std, double eps_y);

// sum of weight*(sim - a_star)^2, divided by the pair count unless raw_sum.
Tensor gsl_structure_loss(const Tensor& sim_block, const PairTargets& targets, bool raw_sum);

// ---- parameter registry and serialization ------------------------------------

struct ParamRegistry {
  struct Item {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };
  std::vector<Item> items;

  void add(const std::string& name, const Tensor& t, bool trainable = true);
  std::vector<Tensor> trainable() const;
};

// Flat little-endian binary: magic "MGSLPRM1", u32 count, then per item
// u16 name length, name bytes, u32 rows, u32 cols, rows*cols f64 values,
// in registry order.
void save_params(const std::string& path, const ParamRegistry& reg);
void load_params(const std::string& path, ParamRegistry& reg);

// ---- optimizer ----------------------------------------------------------------

class Adam {
 public:
  Adam(std::vector<Tensor> params, double weight_decay, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double wd_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// ---- model --------------------------------------------------------------------

struct Model {
  TrainConfig cfg;
  encoder::GinParams gin;
  gsl::GslParams gslp;
  Tensor fc_w, fc_b;
  Tensor y_mean, y_std;  // 1 x n_tasks standardization constants (regression)
  std::size_t d_atom = 0;
  std::size_t n_tasks = 0;
  data::TaskType task = data::TaskType::Classification;

  static Model init(const TrainConfig& cfg, std::size_t d_atom, std::size_t n_tasks,
                    data::TaskType task, std::mt19937_64& rng);
  ParamRegistry registry() const;
  Tensor predict(const Tensor& h, std::mt19937_64* rng, bool training) const;
};

// Everything a training run needs, built once per (dataset, split, config).
struct PreparedData {
  std::size_t n = 0;
  std::size_t n_tasks = 1;
  data::TaskType task = data::TaskType::Classification;
  std::vector<encoder::PreparedMol> mols;
  std::vector<fp::Fingerprint> fps;
  SparseSym a0;
  Tensor a0_dense;  // dense path; identity for the only-gsl variant
  gsl::AnchorSet anchors;
  data::SplitMask split;
  Tensor labels;  // N x n_tasks, standardized for regression
  Tensor lmask;   // N x n_tasks, 1 where present
  std::vector<double> raw_labels;
  std::vector<bool> present;
  std::vector<double> std_labels;  // standardized copy (regression) or raw
  // GSL-loss constants
  PairTargets pair_targets;
  bool use_gsl_loss = false;
  // exclude-test-from-msg machinery
  std::vector<std::size_t> tv_rows;            // train + valid, sorted
  std::vector<encoder::PreparedMol> mols_tv;   // subset view
  Tensor a0_dense_tv;
  Tensor learned_mask;                         // N x N, 1 on tv x tv
  std::vector<std::size_t> train_pos_graph;    // train row positions, training graph
  std::vector<std::size_t> pair_rows_graph;    // loss pair rows, training graph
  std::vector<std::size_t> pair_cols_graph;    // loss pair cols (anchor cols stay global)
};

PreparedData prepare(const data::Dataset& ds, const data::SplitMask& split,
                     const TrainConfig& cfg, Model& model, std::mt19937_64& rng);

struct Forward {
  Tensor x_r;
  Tensor h;
  Tensor y_hat;
  Tensor a_tilde;  // dense path, pre-normalization fusion
  Tensor r;        // anchor path
  std::vector<std::size_t> graph_rows;  // global index per graph row
};

Forward forward(const Model& model, const PreparedData& prep, std::mt19937_64* rng,
                bool training);

struct Losses {
  Tensor total, pred;
  Tensor gsl;  // undefined when the variant disables it
  double gsl_value = 0.0;
};
Losses compute_losses(const Model& model, const PreparedData& prep, const Forward& fwd);

// ---- training loop -------------------------------------------------------------

struct EpochRecord {
  int epoch;
  double lr;
  double train_loss;
  double pred_loss;
  double gsl_loss;
  double valid_metric;
  double test_metric;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_valid = 0.0;
  double test_at_best = 0.0;
  std::string metric_name;
};

// Full-batch transductive training per the alternating-refinement algorithm:
// encode, refine the similarity graph T times, predict, combine losses over
// the training rows, back-propagate, Adam step; tracks the validation metric
// and restores the best-epoch parameters.
FitResult fit(Model& model, PreparedData& prep, const TrainConfig& cfg);

// Eval-mode predictions for the whole dataset (probabilities for
// classification when `probabilities`, de-standardized values for regression).
std::vector<double> predict_all(const Model& model, const PreparedData& prep,
                                bool probabilities = true);

// Metric over the given rows: mean per-task ROC-AUC or de-standardized RMSE.
double evaluate_rows(const Model& model, const PreparedData& prep,
                     const std::vector<double>& predictions,
                     const std::vector<std::size_t>& rows);

}  // namespace molgsl::train
