#pragma once

#include <string>

#include "molgsl/config.hpp"

namespace molgsl::cli {

struct SeedResult {
  std::uint64_t seed = 0;
  int best_epoch = -1;
  double valid_metric = 0.0;
  double test_metric = 0.0;
  std::string run_dir;
};

struct RunSummary {
  std::string metric_name;
  std::vector<SeedResult> seeds;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

// Trains one run per seed; writes config.txt, and per seed report.json,
// history.csv, params.bin and split.json; aggregate.json when multi-seed.
RunSummary run_train(const RunConfig& cfg, bool parallel_seeds = false);

struct EvalResult {
  std::string metric_name;
  double test_metric = 0.0;
  std::size_t n_test = 0;
};

// Rebuilds the model from a seed run directory (config.txt + params.bin +
// split.json) and re-scores the archived test split.
EvalResult run_evaluate(const std::string& seed_run_dir,
                        const std::string& dataset_override = "");

RunSummary run_ablate(RunConfig cfg, const std::string& variant, bool parallel_seeds = false);

void run_fp_sim(const RunConfig& cfg, double eps_tc, const std::string& out_csv);
void run_export_embeddings(const std::string& seed_run_dir, const std::string& out_csv);
void run_export_graph(const std::string& seed_run_dir, const std::string& out_csv);
void run_split(const RunConfig& cfg, std::uint64_t seed, const std::string& out_json);

}  // namespace molgsl::cli
