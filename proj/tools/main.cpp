#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "molgsl/runner.hpp"

namespace {

using molgsl::cli::RunConfig;

// Shared config plumbing: optional config file plus key=value overrides.
struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> sets;
  bool allow_out_of_range = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_file, "config file (key = value lines)");
    app->add_option("--set", sets, "override a config key, e.g. --set max_lr=0.001")
        ->take_all();
    app->add_flag("--allow-out-of-range", allow_out_of_range,
                  "accept hyper-parameters outside their published ranges");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg = molgsl::cli::load_config_file(config_file);
    for (const std::string& s : sets) {
      const std::size_t eq = s.find('=');
      if (eq == std::string::npos)
        throw molgsl::UsageError("--set expects key=value, got '" + s + "'");
      molgsl::cli::apply_assignment(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    return cfg;
  }
};

void print_summary(const molgsl::cli::RunSummary& s) {
  for (const auto& r : s.seeds) {
    std::printf("seed %llu: best epoch %d, valid %s %.6f, test %s %.6f\n",
                (unsigned long long)r.seed, r.best_epoch, s.metric_name.c_str(),
                r.valid_metric, s.metric_name.c_str(), r.test_metric);
  }
  std::printf("%s over %zu seed(s): %.6f +/- %.6f\n", s.metric_name.c_str(),
              s.seeds.size(), s.mean, s.stddev);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molecular property prediction on a learned molecule-similarity graph"};
  app.require_subcommand(1);

  ConfigArgs train_cfg, ablate_cfg, fpsim_cfg, split_cfg;
  bool parallel_seeds = false, ablate_parallel = false;
  std::string variant, eval_dir, eval_dataset, out_path, run_dir;
  double fp_eps = 0.0;
  std::uint64_t split_seed = 0;

  CLI::App* train = app.add_subcommand("train", "train one run per seed");
  train_cfg.attach(train);
  train->add_flag("--parallel-seeds", parallel_seeds, "run seeds concurrently");

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "re-score the archived test split of a seed run");
  evaluate->add_option("run_dir", eval_dir, "seed run directory")->required();
  evaluate->add_option("--dataset", eval_dataset, "override the dataset CSV path");

  CLI::App* ablate = app.add_subcommand("ablate", "train an ablation variant");
  ablate_cfg.attach(ablate);
  ablate
      ->add_option("--variant", variant,
                   "full|not-any|only-a0|only-gsl|no-gsl-loss")
      ->required();
  ablate->add_flag("--parallel-seeds", ablate_parallel, "run seeds concurrently");

  CLI::App* fpsim = app.add_subcommand("fp-sim", "pairwise Tanimoto edge list");
  fpsim_cfg.attach(fpsim);
  fpsim->add_option("--eps-tc", fp_eps, "similarity threshold");
  fpsim->add_option("-o,--out", out_path, "output CSV")->required();

  CLI::App* exp_emb =
      app.add_subcommand("export-embeddings", "final molecule embeddings as CSV");
  exp_emb->add_option("run_dir", run_dir, "seed run directory")->required();
  exp_emb->add_option("-o,--out", out_path, "output CSV")->required();

  CLI::App* exp_graph =
      app.add_subcommand("export-graph", "final fused adjacency as an edge-list CSV");
  exp_graph->add_option("run_dir", run_dir, "seed run directory")->required();
  exp_graph->add_option("-o,--out", out_path, "output CSV")->required();

  CLI::App* split = app.add_subcommand("split", "write a scaffold split as JSON");
  split_cfg.attach(split);
  split->add_option("--seed", split_seed, "tie-shuffle seed");
  split->add_option("-o,--out", out_path, "output JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      RunConfig cfg = train_cfg.resolve();
      molgsl::cli::validate(cfg, train_cfg.allow_out_of_range);
      print_summary(molgsl::cli::run_train(cfg, parallel_seeds));
    } else if (evaluate->parsed()) {
      const auto r = molgsl::cli::run_evaluate(eval_dir, eval_dataset);
      std::printf("test %s: %.17g (n = %zu)\n", r.metric_name.c_str(), r.test_metric,
                  r.n_test);
    } else if (ablate->parsed()) {
      RunConfig cfg = ablate_cfg.resolve();
      cfg.variant = variant;
      molgsl::cli::validate(cfg, ablate_cfg.allow_out_of_range);
      print_summary(molgsl::cli::run_ablate(cfg, variant, ablate_parallel));
    } else if (fpsim->parsed()) {
      RunConfig cfg = fpsim_cfg.resolve();
      if (cfg.dataset.empty()) throw molgsl::UsageError("fp-sim needs a dataset");
      molgsl::cli::run_fp_sim(cfg, fp_eps, out_path);
    } else if (exp_emb->parsed()) {
      molgsl::cli::run_export_embeddings(run_dir, out_path);
    } else if (exp_graph->parsed()) {
      molgsl::cli::run_export_graph(run_dir, out_path);
    } else if (split->parsed()) {
      RunConfig cfg = split_cfg.resolve();
      if (cfg.dataset.empty()) throw molgsl::UsageError("split needs a dataset");
      molgsl::cli::run_split(cfg, split_seed, out_path);
    }
  } catch (const molgsl::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const molgsl::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 3;
  } catch (const molgsl::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const molgsl::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
