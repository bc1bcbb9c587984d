#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "molgsl/training.hpp"

namespace molgsl::cli {

// Every run hyper-parameter plus dataset wiring. Flat key = value text file;
// command-line flags override file values; unknown keys are rejected.
struct RunConfig {
  // dataset
  std::string dataset;
  std::string smiles_column = "smiles";
  std::vector<std::string> label_columns;
  std::string task = "classification";
  std::string name;
  double f_train = 0.8, f_valid = 0.1, f_test = 0.1;
  // hyper-parameters
  double max_lr = 1e-3;
  double weight_decay = 1e-5;
  int gin_layers = 3;
  int gin_hidden_size = 64;
  double tc_epsilon = 0.5;
  int gsl_iter = 2;
  int gsl_gnn_layers = 2;
  int gsl_hidden_size = 64;
  double gsl_epsilon = 0.0;
  int gsl_perspective = 2;
  double gsl_skip_conn = 0.8;    // lambda
  double gsl_update_ratio = 0.8; // eta
  double dropout = 0.0;
  double gsl_coff = 0.1;         // mu
  // schedule
  int max_epoch = 300;
  int warmup_epochs = 2;
  double final_lr = 1e-9;
  double decay_power = 1.0;
  // extras
  double eps_y = 0.01;
  std::string readout = "mean";        // mean|sum
  std::string gsl_adj_norm = "row";    // none|row|sym
  bool gsl_loss_raw_sum = false;
  std::string variant = "full";
  std::vector<std::uint64_t> seeds = {0};
  std::size_t anchors = 0;  // 0 = dense path
  bool exclude_test_from_msg = false;
  bool freeze_encoder = false;
  std::string out_dir = "runs/run";
};

RunConfig load_config_file(const std::string& path);
// Applies one "key = value" assignment; throws UsageError on unknown keys.
void apply_assignment(RunConfig& cfg, const std::string& key, const std::string& value);
// Rejects values outside their published ranges unless allow_out_of_range.
void validate(const RunConfig& cfg, bool allow_out_of_range);
std::string serialize(const RunConfig& cfg);

train::TrainConfig to_train_config(const RunConfig& cfg, std::uint64_t seed);

}  // namespace molgsl::cli
