#pragma once

// Small in-memory datasets for training and acceptance tests.

#include <string>
#include <vector>

#include "molgsl/data.hpp"

inline molgsl::data::Dataset toy_dataset(molgsl::data::TaskType task, std::size_t count = 0) {
  using namespace molgsl;
  // Oxygen-bearing molecules are the positive class; regression targets are
  // scaled heavy-atom counts. Scaffold variety keeps scaffold_split usable.
  static const std::vector<std::pair<std::string, double>> pool = {
      {"CCO", 1},          {"CCC", 0},        {"CCCO", 1},        {"CCCC", 0},
      {"CC(C)O", 1},       {"CC(C)C", 0},     {"OCCO", 1},        {"CCCCC", 0},
      {"CC(=O)O", 1},      {"CCN", 0},        {"COC", 1},         {"CCCN", 0},
      {"c1ccccc1O", 1},    {"c1ccccc1", 0},   {"c1ccccc1CO", 1},  {"c1ccccc1C", 0},
      {"OC1CCCCC1", 1},    {"C1CCCCC1", 0},   {"OCC1CCCC1", 1},   {"C1CCCC1", 0},
      {"c1ccncc1O", 1},    {"c1ccncc1", 0},   {"OCc1ccncc1", 1},  {"Cc1ccncc1", 0},
      {"OC1CC1", 1},       {"C1CC1", 0},      {"OCCCO", 1},       {"CCCCCC", 0},
  };
  data::Dataset ds;
  ds.name = "toy";
  ds.task = task;
  ds.n_tasks = 1;
  const std::size_t n = count == 0 ? pool.size() : std::min(count, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    data::Record r;
    r.smiles = pool[i].first;
    r.graph = molgsl::chem::parse_smiles(r.smiles);
    const double y = task == data::TaskType::Classification
                         ? pool[i].second
                         : (double)r.graph.num_atoms() + 2.0 * pool[i].second;
    r.labels = {y};
    r.present = {true};
    ds.records.push_back(std::move(r));
  }
  return ds;
}

// Round-robin split; the toy pool alternates classes, so every slice holds
// both labels.
inline molgsl::data::SplitMask toy_split(std::size_t n) {
  molgsl::data::SplitMask m;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 5 == 3) m.valid.push_back(i);
    else if (i % 5 == 4) m.test.push_back(i);
    else m.train.push_back(i);
  }
  return m;
}
