#include "molgsl/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"

namespace molgsl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

data::Dataset load_dataset(const RunConfig& cfg) {
  return data::load_csv(cfg.dataset, cfg.smiles_column, cfg.label_columns,
                        data::task_from_string(cfg.task),
                        cfg.name.empty() ? fs::path(cfg.dataset).stem().string() : cfg.name);
}

json split_to_json(const data::SplitMask& m, const gsl::AnchorSet& anchors) {
  json j;
  j["train"] = m.train;
  j["valid"] = m.valid;
  j["test"] = m.test;
  if (!anchors.anchor_indices.empty()) j["anchors"] = anchors.anchor_indices;
  return j;
}

data::SplitMask split_from_json(const json& j) {
  data::SplitMask m;
  m.train = j.at("train").get<std::vector<std::size_t>>();
  m.valid = j.at("valid").get<std::vector<std::size_t>>();
  m.test = j.at("test").get<std::vector<std::size_t>>();
  return m;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << content;
}

void write_history_csv(const fs::path& path, const train::FitResult& fit) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out.precision(17);
  out << "epoch,lr,train_loss,pred_loss,gsl_loss,valid_metric\n";
  for (const auto& r : fit.history) {
    out << r.epoch << "," << r.lr << "," << r.train_loss << "," << r.pred_loss << ","
        << r.gsl_loss << "," << r.valid_metric << "\n";
  }
}

SeedResult train_one_seed(const RunConfig& cfg, const data::Dataset& ds, std::uint64_t seed,
                          const fs::path& seed_dir) {
  fs::create_directories(seed_dir);
  data::SplitMask split = data::scaffold_split(ds, cfg.f_train, cfg.f_valid, cfg.f_test, seed);

  train::TrainConfig tc = to_train_config(cfg, seed);
  std::mt19937_64 rng(seed);
  train::Model model =
      train::Model::init(tc, chem::kAtomFeatureDim, ds.n_tasks, ds.task, rng);
  train::PreparedData prep = train::prepare(ds, split, tc, model, rng);
  train::FitResult fit = train::fit(model, prep, tc);

  // artifacts
  write_history_csv(seed_dir / "history.csv", fit);
  {
    train::ParamRegistry reg = model.registry();
    train::save_params((seed_dir / "params.bin").string(), reg);
  }
  write_text(seed_dir / "split.json", split_to_json(split, prep.anchors).dump(2));
  json report;
  report["dataset"] = ds.name;
  report["task"] = data::to_string(ds.task);
  report["n_molecules"] = ds.size();
  report["n_tasks"] = ds.n_tasks;
  report["dropped_rows"] = ds.dropped_rows;
  report["seed"] = seed;
  report["variant"] = cfg.variant;
  report["gsl_coff"] = tc.variant == train::Variant::NoGslLoss ? 0.0 : cfg.gsl_coff;
  report["anchors"] = cfg.anchors;
  report["metric"] = fit.metric_name;
  report["best_epoch"] = fit.best_epoch;
  report["valid_metric"] = fit.best_valid;
  report["test_metric"] = fit.test_at_best;
  write_text(seed_dir / "report.json", report.dump(2));

  SeedResult r;
  r.seed = seed;
  r.best_epoch = fit.best_epoch;
  r.valid_metric = fit.best_valid;
  r.test_metric = fit.test_at_best;
  r.run_dir = seed_dir.string();
  return r;
}

RunSummary summarize(const RunConfig& cfg, const data::Dataset& ds,
                     std::vector<SeedResult> seeds) {
  RunSummary s;
  s.metric_name = ds.task == data::TaskType::Classification ? "roc_auc" : "rmse";
  s.seeds = std::move(seeds);
  double mean = 0;
  for (const auto& r : s.seeds) mean += r.test_metric;
  mean /= (double)s.seeds.size();
  double var = 0;
  for (const auto& r : s.seeds) var += (r.test_metric - mean) * (r.test_metric - mean);
  s.mean = mean;
  s.stddev = std::sqrt(var / (double)s.seeds.size());

  json agg;
  agg["dataset"] = ds.name;
  agg["metric"] = s.metric_name;
  agg["variant"] = cfg.variant;
  json per;
  for (const auto& r : s.seeds) {
    per.push_back({{"seed", r.seed},
                   {"test_metric", r.test_metric},
                   {"valid_metric", r.valid_metric},
                   {"best_epoch", r.best_epoch},
                   {"run_dir", r.run_dir}});
  }
  agg["seeds"] = per;
  agg["mean"] = s.mean;
  agg["std"] = s.stddev;
  write_text(fs::path(cfg.out_dir) / "aggregate.json", agg.dump(2));
  return s;
}

struct RestoredRun {
  RunConfig cfg;
  std::uint64_t seed = 0;
  data::Dataset ds;
  train::Model model;
  train::PreparedData prep;
};

RestoredRun restore_run(const std::string& seed_run_dir, const std::string& dataset_override) {
  const fs::path dir(seed_run_dir);
  if (!fs::exists(dir / "config.txt"))
    throw UsageError("no config.txt in " + seed_run_dir);
  if (!fs::exists(dir / "split.json"))
    throw UsageError("no split.json in " + seed_run_dir + " (missing split file)");
  if (!fs::exists(dir / "params.bin"))
    throw UsageError("no params.bin in " + seed_run_dir);

  RestoredRun run;
  run.cfg = load_config_file((dir / "config.txt").string());
  if (!dataset_override.empty()) run.cfg.dataset = dataset_override;
  if (run.cfg.seeds.size() != 1)
    throw UsageError("archived seed config must carry exactly one seed");
  run.seed = run.cfg.seeds[0];
  run.ds = load_dataset(run.cfg);

  std::ifstream split_in((dir / "split.json").string());
  json sj = json::parse(split_in);
  data::SplitMask split = split_from_json(sj);

  train::TrainConfig tc = to_train_config(run.cfg, run.seed);
  std::mt19937_64 rng(run.seed);
  run.model = train::Model::init(tc, chem::kAtomFeatureDim, run.ds.n_tasks, run.ds.task, rng);
  gsl::AnchorSet anchors;
  if (sj.contains("anchors"))
    anchors.anchor_indices = sj.at("anchors").get<std::vector<std::size_t>>();
  run.prep = train::prepare(run.ds, split, tc, run.model, rng);
  if (!anchors.anchor_indices.empty()) run.prep.anchors = anchors;

  train::ParamRegistry reg = run.model.registry();
  train::load_params((dir / "params.bin").string(), reg);
  return run;
}

}  // namespace

RunSummary run_train(const RunConfig& cfg, bool parallel_seeds) {
  data::Dataset ds = load_dataset(cfg);
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / "config.txt", serialize(cfg));

  std::vector<SeedResult> results(cfg.seeds.size());
  auto work = [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    const fs::path seed_dir = fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed));
    RunConfig archived = cfg;
    archived.seeds = {seed};
    fs::create_directories(seed_dir);
    write_text(seed_dir / "config.txt", serialize(archived));
    results[i] = train_one_seed(cfg, ds, seed, seed_dir);
  };
  if (parallel_seeds && cfg.seeds.size() > 1) {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) threads.emplace_back(work, i);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) work(i);
  }
  return summarize(cfg, ds, std::move(results));
}

EvalResult run_evaluate(const std::string& seed_run_dir, const std::string& dataset_override) {
  RestoredRun run = restore_run(seed_run_dir, dataset_override);
  const std::vector<double> preds = train::predict_all(run.model, run.prep, true);
  EvalResult r;
  r.metric_name =
      run.ds.task == data::TaskType::Classification ? "roc_auc" : "rmse";
  r.n_test = run.prep.split.test.size();
  r.test_metric = train::evaluate_rows(run.model, run.prep, preds, run.prep.split.test);
  return r;
}

RunSummary run_ablate(RunConfig cfg, const std::string& variant, bool parallel_seeds) {
  train::variant_from_string(variant);  // validate
  cfg.variant = variant;
  cfg.out_dir = (fs::path(cfg.out_dir) / variant).string();
  return run_train(cfg, parallel_seeds);
}

void run_fp_sim(const RunConfig& cfg, double eps_tc, const std::string& out_csv) {
  data::Dataset ds = load_dataset(cfg);
  std::vector<fp::Fingerprint> fps;
  fps.reserve(ds.size());
  for (const auto& rec : ds.records) fps.push_back(fp::ecfp(rec.graph, 2, 2048));
  std::ofstream out(out_csv);
  if (!out) throw UsageError("cannot write " + out_csv);
  out.precision(17);
  out << "i,j,weight\n";
  for (std::size_t i = 0; i < fps.size(); ++i) {
    for (std::size_t j = i + 1; j < fps.size(); ++j) {
      const double t = fp::tanimoto(fps[i], fps[j]);
      if (t >= eps_tc) out << i << "," << j << "," << t << "\n";
    }
  }
}

void run_export_embeddings(const std::string& seed_run_dir, const std::string& out_csv) {
  RestoredRun run = restore_run(seed_run_dir, "");
  train::Forward f = train::forward(run.model, run.prep, nullptr, false);
  std::ofstream out(out_csv);
  if (!out) throw UsageError("cannot write " + out_csv);
  out.precision(17);
  out << "index";
  for (std::size_t j = 0; j < f.h.cols(); ++j) out << ",h" << j;
  out << "\n";
  for (std::size_t i = 0; i < f.h.rows(); ++i) {
    out << i;
    for (std::size_t j = 0; j < f.h.cols(); ++j) out << "," << f.h.at(i, j);
    out << "\n";
  }
}

void run_export_graph(const std::string& seed_run_dir, const std::string& out_csv) {
  RestoredRun run = restore_run(seed_run_dir, "");
  train::Forward f = train::forward(run.model, run.prep, nullptr, false);
  if (!f.a_tilde.defined())
    throw UsageError("this run has no dense fused adjacency to export (variant '" +
                     run.cfg.variant + "', anchors " + std::to_string(run.cfg.anchors) + ")");
  std::ofstream out(out_csv);
  if (!out) throw UsageError("cannot write " + out_csv);
  out.precision(17);
  out << "i,j,weight\n";
  for (std::size_t i = 0; i < f.a_tilde.rows(); ++i) {
    for (std::size_t j = i + 1; j < f.a_tilde.cols(); ++j) {
      const double w = f.a_tilde.at(i, j);
      if (w != 0.0) out << i << "," << j << "," << w << "\n";
    }
  }
}

void run_split(const RunConfig& cfg, std::uint64_t seed, const std::string& out_json) {
  data::Dataset ds = load_dataset(cfg);
  data::SplitMask m = data::scaffold_split(ds, cfg.f_train, cfg.f_valid, cfg.f_test, seed);
  write_text(out_json, split_to_json(m, {}).dump(2));
}

}  // namespace molgsl::cli
