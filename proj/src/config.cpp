#include "molgsl/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace molgsl::cli {

namespace {

std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t\r");
  const std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse '" + v + "' as a number");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return (int)x;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key '" + key + "': cannot parse '" + v + "' as a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool in_set(double v, std::initializer_list<double> set) {
  for (double s : set)
    if (std::fabs(v - s) < 1e-12) return true;
  return false;
}

[[noreturn]] void reject(const std::string& field, const std::string& detail) {
  throw UsageError("config value out of range: " + field + " " + detail +
                   " (pass --allow-out-of-range to override)");
}

}  // namespace

void apply_assignment(RunConfig& cfg, const std::string& key, const std::string& value) {
  const std::string k = trim(key), v = trim(value);
  if (k == "dataset") cfg.dataset = v;
  else if (k == "smiles_column") cfg.smiles_column = v;
  else if (k == "label_columns") cfg.label_columns = split_list(v);
  else if (k == "task") cfg.task = v;
  else if (k == "name") cfg.name = v;
  else if (k == "f_train") cfg.f_train = parse_double(k, v);
  else if (k == "f_valid") cfg.f_valid = parse_double(k, v);
  else if (k == "f_test") cfg.f_test = parse_double(k, v);
  else if (k == "max_lr") cfg.max_lr = parse_double(k, v);
  else if (k == "weight_decay") cfg.weight_decay = parse_double(k, v);
  else if (k == "gin_layers") cfg.gin_layers = parse_int(k, v);
  else if (k == "gin_hidden_size") cfg.gin_hidden_size = parse_int(k, v);
  else if (k == "tc_epsilon") cfg.tc_epsilon = parse_double(k, v);
  else if (k == "gsl_iter") cfg.gsl_iter = parse_int(k, v);
  else if (k == "gsl_gnn_layers") cfg.gsl_gnn_layers = parse_int(k, v);
  else if (k == "gsl_hidden_size") cfg.gsl_hidden_size = parse_int(k, v);
  else if (k == "gsl_epsilon") cfg.gsl_epsilon = parse_double(k, v);
  else if (k == "gsl_perspective") cfg.gsl_perspective = parse_int(k, v);
  else if (k == "gsl_skip_conn") cfg.gsl_skip_conn = parse_double(k, v);
  else if (k == "gsl_update_ratio") cfg.gsl_update_ratio = parse_double(k, v);
  else if (k == "dropout") cfg.dropout = parse_double(k, v);
  else if (k == "gsl_coff") cfg.gsl_coff = parse_double(k, v);
  else if (k == "max_epoch") cfg.max_epoch = parse_int(k, v);
  else if (k == "warmup_epochs") cfg.warmup_epochs = parse_int(k, v);
  else if (k == "final_lr") cfg.final_lr = parse_double(k, v);
  else if (k == "decay_power") cfg.decay_power = parse_double(k, v);
  else if (k == "eps_y") cfg.eps_y = parse_double(k, v);
  else if (k == "readout") cfg.readout = v;
  else if (k == "gsl_adj_norm") cfg.gsl_adj_norm = v;
  else if (k == "gsl_loss_raw_sum") cfg.gsl_loss_raw_sum = parse_bool(k, v);
  else if (k == "variant") cfg.variant = v;
  else if (k == "seeds") {
    cfg.seeds.clear();
    for (const auto& s : split_list(v)) cfg.seeds.push_back((std::uint64_t)parse_int(k, s));
    if (cfg.seeds.empty()) throw UsageError("config key 'seeds': empty list");
  } else if (k == "anchors") cfg.anchors = (std::size_t)parse_int(k, v);
  else if (k == "exclude_test_from_msg") cfg.exclude_test_from_msg = parse_bool(k, v);
  else if (k == "freeze_encoder") cfg.freeze_encoder = parse_bool(k, v);
  else if (k == "out_dir") cfg.out_dir = v;
  else throw UsageError("unknown config key '" + k + "'");
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    apply_assignment(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

void validate(const RunConfig& cfg, bool allow_out_of_range) {
  // structural checks always apply
  if (cfg.dataset.empty()) throw UsageError("config: 'dataset' is required");
  if (cfg.label_columns.empty()) throw UsageError("config: 'label_columns' is required");
  data::task_from_string(cfg.task);
  train::variant_from_string(cfg.variant);
  gsl::adj_norm_from_string(cfg.gsl_adj_norm);
  if (cfg.readout != "mean" && cfg.readout != "sum")
    throw UsageError("config: readout must be mean|sum");
  if (std::fabs(cfg.f_train + cfg.f_valid + cfg.f_test - 1.0) > 1e-9)
    throw UsageError("config: split fractions must sum to 1");
  if (cfg.max_epoch < 1) throw UsageError("config: max_epoch must be >= 1");
  if (cfg.warmup_epochs < 1) throw UsageError("config: warmup_epochs must be >= 1");
  if (cfg.eps_y <= 0) throw UsageError("config: eps_y must be > 0");
  if (cfg.seeds.empty()) throw UsageError("config: at least one seed");

  if (allow_out_of_range) return;
  if (cfg.max_lr < 1e-4 || cfg.max_lr > 1e-2)
    reject("max_lr", "must be in [0.0001, 0.01]");
  if (cfg.weight_decay < 1e-5 || cfg.weight_decay > 1e-3)
    reject("weight_decay", "must be in [0.00001, 0.001]");
  if (cfg.gin_layers < 2 || cfg.gin_layers > 5) reject("gin_layers", "must be in [2, 5]");
  if (!in_set(cfg.gin_hidden_size, {32, 64, 128, 256}))
    reject("gin_hidden_size", "must be one of 32, 64, 128, 256");
  if (!in_set(cfg.tc_epsilon, {0.0, 0.1, 0.2, 0.3, 0.5, 0.7}))
    reject("tc_epsilon", "must be one of 0.0, 0.1, 0.2, 0.3, 0.5, 0.7");
  if (cfg.gsl_iter < 1 || cfg.gsl_iter > 5) reject("gsl_iter", "must be in [1, 5]");
  if (cfg.gsl_gnn_layers != 2 && cfg.gsl_gnn_layers != 3)
    reject("gsl_gnn_layers", "must be 2 or 3");
  if (!in_set(cfg.gsl_hidden_size, {32, 64, 128, 256}))
    reject("gsl_hidden_size", "must be one of 32, 64, 128, 256");
  if (!in_set(cfg.gsl_epsilon, {0.0, 0.1, 0.2, 0.5}))
    reject("gsl_epsilon", "must be one of 0, 0.1, 0.2, 0.5");
  if (!in_set(cfg.gsl_perspective, {1, 2, 4, 8, 16}))
    reject("gsl_perspective", "must be one of 1, 2, 4, 8, 16");
  if (cfg.gsl_skip_conn < 0.0 || cfg.gsl_skip_conn > 1.0)
    reject("gsl_skip_conn", "must be in [0, 1]");
  if (cfg.gsl_update_ratio < 0.0 || cfg.gsl_update_ratio > 1.0)
    reject("gsl_update_ratio", "must be in [0, 1]");
  if (!in_set(cfg.dropout, {0.0, 0.1, 0.2, 0.4, 0.6}))
    reject("dropout", "must be one of 0, 0.1, 0.2, 0.4, 0.6");
  if (!in_set(cfg.gsl_coff, {0.1, 0.3, 0.5, 0.7, 0.9}))
    reject("gsl_coff", "must be one of 0.1, 0.3, 0.5, 0.7, 0.9");
}

std::string serialize(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "dataset = " << cfg.dataset << "\n";
  out << "smiles_column = " << cfg.smiles_column << "\n";
  out << "label_columns = ";
  for (std::size_t i = 0; i < cfg.label_columns.size(); ++i)
    out << (i ? "," : "") << cfg.label_columns[i];
  out << "\n";
  out << "task = " << cfg.task << "\n";
  if (!cfg.name.empty()) out << "name = " << cfg.name << "\n";
  out << "f_train = " << cfg.f_train << "\n";
  out << "f_valid = " << cfg.f_valid << "\n";
  out << "f_test = " << cfg.f_test << "\n";
  out << "max_lr = " << cfg.max_lr << "\n";
  out << "weight_decay = " << cfg.weight_decay << "\n";
  out << "gin_layers = " << cfg.gin_layers << "\n";
  out << "gin_hidden_size = " << cfg.gin_hidden_size << "\n";
  out << "tc_epsilon = " << cfg.tc_epsilon << "\n";
  out << "gsl_iter = " << cfg.gsl_iter << "\n";
  out << "gsl_gnn_layers = " << cfg.gsl_gnn_layers << "\n";
  out << "gsl_hidden_size = " << cfg.gsl_hidden_size << "\n";
  out << "gsl_epsilon = " << cfg.gsl_epsilon << "\n";
  out << "gsl_perspective = " << cfg.gsl_perspective << "\n";
  out << "gsl_skip_conn = " << cfg.gsl_skip_conn << "\n";
  out << "gsl_update_ratio = " << cfg.gsl_update_ratio << "\n";
  out << "dropout = " << cfg.dropout << "\n";
  out << "gsl_coff = " << cfg.gsl_coff << "\n";
  out << "max_epoch = " << cfg.max_epoch << "\n";
  out << "warmup_epochs = " << cfg.warmup_epochs << "\n";
  out << "final_lr = " << cfg.final_lr << "\n";
  out << "decay_power = " << cfg.decay_power << "\n";
  out << "eps_y = " << cfg.eps_y << "\n";
  out << "readout = " << cfg.readout << "\n";
  out << "gsl_adj_norm = " << cfg.gsl_adj_norm << "\n";
  out << "gsl_loss_raw_sum = " << (cfg.gsl_loss_raw_sum ? "true" : "false") << "\n";
  out << "variant = " << cfg.variant << "\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
  out << "\n";
  out << "anchors = " << cfg.anchors << "\n";
  out << "exclude_test_from_msg = " << (cfg.exclude_test_from_msg ? "true" : "false") << "\n";
  out << "freeze_encoder = " << (cfg.freeze_encoder ? "true" : "false") << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  return out.str();
}

train::TrainConfig to_train_config(const RunConfig& cfg, std::uint64_t seed) {
  train::TrainConfig t;
  t.gin.layers = cfg.gin_layers;
  t.gin.hidden = (std::size_t)cfg.gin_hidden_size;
  t.gin.sum_pool = cfg.readout == "sum";
  t.gsl.iterations = cfg.gsl_iter;
  t.gsl.gnn_layers = cfg.gsl_gnn_layers;
  t.gsl.hidden = (std::size_t)cfg.gsl_hidden_size;
  t.gsl.perspectives = cfg.gsl_perspective;
  t.gsl.eps_gsl = cfg.gsl_epsilon;
  t.gsl.lambda = cfg.gsl_skip_conn;
  t.gsl.eta = cfg.gsl_update_ratio;
  t.gsl.norm = gsl::adj_norm_from_string(cfg.gsl_adj_norm);
  t.gsl.dropout = cfg.dropout;
  t.schedule.max_lr = cfg.max_lr;
  t.schedule.warmup_epochs = cfg.warmup_epochs;
  t.schedule.final_lr = cfg.final_lr;
  t.schedule.max_epoch = cfg.max_epoch;
  t.schedule.power = cfg.decay_power;
  t.weight_decay = cfg.weight_decay;
  t.mu = cfg.gsl_coff;
  t.eps_y = cfg.eps_y;
  t.gsl_loss_raw_sum = cfg.gsl_loss_raw_sum;
  t.variant = train::variant_from_string(cfg.variant);
  t.seed = seed;
  t.anchors = cfg.anchors;
  t.tc_epsilon = cfg.tc_epsilon;
  t.freeze_encoder = cfg.freeze_encoder;
  t.exclude_test_from_msg = cfg.exclude_test_from_msg;
  return t;
}

}  // namespace molgsl::cli
