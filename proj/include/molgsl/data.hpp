#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "molgsl/chem.hpp"
#include "molgsl/errors.hpp"

namespace molgsl::data {

enum class TaskType { Classification, Regression };

TaskType task_from_string(const std::string& s);
std::string to_string(TaskType t);

struct Record {
  std::string smiles;
  chem::MoleculeGraph graph;
  std::vector<double> labels;   // width n_tasks
  std::vector<bool> present;    // false where the label cell was empty
};

struct Dataset {
  std::string name;
  TaskType task = TaskType::Classification;
  std::size_t n_tasks = 0;
  std::vector<Record> records;
  std::size_t dropped_rows = 0;  // unparseable SMILES

  std::size_t size() const { return records.size(); }
};

// CSV with a header row; configurable SMILES and label column names. Rows
// whose SMILES fail to parse are dropped (count kept on the dataset); empty
// label cells become missing-mask entries.
Dataset load_csv(const std::string& path, const std::string& smiles_column,
                 const std::vector<std::string>& label_columns, TaskType task,
                 const std::string& name = "");

// Bemis-Murcko scaffold key: iteratively delete degree-1 non-ring atoms, then
// canonicalize the remaining graph (iterative neighborhood refinement with
// deterministic tie-breaking). Acyclic molecules map to "".
std::string murcko_scaffold(const chem::MoleculeGraph& g);

struct SplitMask {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
};

// Groups molecules by scaffold key, orders groups by descending size with
// seed-shuffled tie order, then fills train/valid/test greedily with whole
// groups. No scaffold straddles two splits.
SplitMask scaffold_split(const Dataset& ds, double f_train, double f_valid, double f_test,
                         std::uint64_t seed);

// Mann-Whitney ROC-AUC with average-rank tie handling; requires both classes.
double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels);

// Unweighted mean over tasks having both classes; tasks with a single class
// are skipped (count reported through skipped_tasks). Usage error if no task
// is scorable.
double roc_auc_multitask(const std::vector<double>& scores, const std::vector<double>& labels,
                         const std::vector<bool>& present, std::size_t n_tasks,
                         std::size_t* skipped_tasks = nullptr);

double rmse(const std::vector<double>& predictions, const std::vector<double>& targets);

}  // namespace molgsl::data
