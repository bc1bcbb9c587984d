#include "molgsl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "molgsl/fingerprint.hpp"

namespace molgsl::data {

namespace {

// RFC4180-ish CSV: quoted fields may contain commas, escaped quotes and
// newlines.
std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open CSV file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(row);
    row.clear();
  };
  while (i < content.size()) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // swallow; \n ends the row
    } else if (c == '\n') {
      end_row();
    } else {
      field += c;
    }
    ++i;
  }
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

// ---- scaffold canonicalization ---------------------------------------------

struct ScafGraph {
  std::vector<std::pair<int, int>> atoms;  // (atomic_num, aromatic)
  std::vector<std::vector<std::pair<int, int>>> adj;  // (nbr, bond order code)
};

std::vector<std::uint64_t> refine(const ScafGraph& g, std::vector<std::uint64_t> ids) {
  const std::size_t n = g.atoms.size();
  for (std::size_t round = 0; round < n; ++round) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::pair<int, std::uint64_t>> nbrs;
      for (const auto& [u, oc] : g.adj[v]) nbrs.emplace_back(oc, ids[u]);
      std::sort(nbrs.begin(), nbrs.end());
      std::vector<std::uint64_t> words = {ids[v]};
      for (const auto& [oc, id] : nbrs) {
        words.push_back((std::uint64_t)oc);
        words.push_back(id);
      }
      next[v] = fp::hash_mix(words);
    }
    // stop once the partition stops splitting
    std::map<std::uint64_t, std::uint64_t> part_old, part_new;
    bool same_partition = true;
    for (std::size_t v = 0; v < n; ++v) {
      auto a = part_old.emplace(ids[v], (std::uint64_t)part_old.size());
      auto b = part_new.emplace(next[v], (std::uint64_t)part_new.size());
      if (a.first->second != b.first->second) same_partition = false;
    }
    ids = std::move(next);
    if (same_partition) break;
  }
  return ids;
}

std::string string_for_order(const ScafGraph& g, const std::vector<std::size_t>& order) {
  const std::size_t n = g.atoms.size();
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[order[i]] = i;
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [z, arom] = g.atoms[order[i]];
    s += chem::element_symbol(z);
    if (arom) s += '~';
    s += ';';
  }
  std::vector<std::array<std::size_t, 3>> edges;
  for (std::size_t v = 0; v < n; ++v) {
    for (const auto& [u, oc] : g.adj[v]) {
      if (pos[v] < pos[(std::size_t)u])
        edges.push_back({pos[v], pos[(std::size_t)u], (std::size_t)oc});
    }
  }
  std::sort(edges.begin(), edges.end());
  for (const auto& e : edges) {
    s += std::to_string(e[0]) + "-" + std::to_string(e[1]) + ":" + std::to_string(e[2]) + ";";
  }
  return s;
}

// Individualization-refinement canonical form: branch over every member of
// the first tied class, keep the lexicographically smallest string. The
// string encodes the full atom and edge list, so equal strings mean
// isomorphic scaffolds.
std::string canonical_string(const ScafGraph& g, const std::vector<std::uint64_t>& ids) {
  const std::size_t n = g.atoms.size();
  std::map<std::uint64_t, std::vector<std::size_t>> classes;
  for (std::size_t v = 0; v < n; ++v) classes[ids[v]].push_back(v);
  const std::vector<std::size_t>* tied = nullptr;
  for (const auto& [id, members] : classes) {
    (void)id;
    if (members.size() > 1) {
      tied = &members;
      break;
    }
  }
  if (tied == nullptr) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    return string_for_order(g, order);
  }
  std::string best;
  for (std::size_t v : *tied) {
    std::vector<std::uint64_t> marked = ids;
    const std::uint64_t words[2] = {marked[v], 0x5ca1ab1eull};
    marked[v] = fp::hash_mix(words, 2);
    std::string s = canonical_string(g, refine(g, std::move(marked)));
    if (best.empty() || s < best) best = std::move(s);
  }
  return best;
}

}  // namespace

TaskType task_from_string(const std::string& s) {
  if (s == "classification") return TaskType::Classification;
  if (s == "regression") return TaskType::Regression;
  throw UsageError("unknown task type '" + s + "' (classification|regression)");
}

std::string to_string(TaskType t) {
  return t == TaskType::Classification ? "classification" : "regression";
}

Dataset load_csv(const std::string& path, const std::string& smiles_column,
                 const std::vector<std::string>& label_columns, TaskType task,
                 const std::string& name) {
  auto rows = read_csv(path);
  if (rows.empty()) throw UsageError("empty CSV file: " + path);
  const auto& header = rows[0];
  auto col_index = [&](const std::string& col) -> std::size_t {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (trim(header[j]) == col) return j;
    throw UsageError("column '" + col + "' not found in " + path);
  };
  const std::size_t si = col_index(smiles_column);
  std::vector<std::size_t> li;
  for (const auto& c : label_columns) li.push_back(col_index(c));

  Dataset ds;
  ds.name = name.empty() ? path : name;
  ds.task = task;
  ds.n_tasks = li.size();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (si >= row.size()) continue;
    Record rec;
    rec.smiles = trim(row[si]);
    try {
      rec.graph = chem::parse_smiles(rec.smiles);
    } catch (const ParseError&) {
      ++ds.dropped_rows;
      continue;
    }
    for (std::size_t t = 0; t < li.size(); ++t) {
      const std::string cell = li[t] < row.size() ? trim(row[li[t]]) : "";
      if (cell.empty()) {
        rec.labels.push_back(0.0);
        rec.present.push_back(false);
      } else {
        try {
          std::size_t used = 0;
          const double v = std::stod(cell, &used);
          if (used != cell.size()) throw std::invalid_argument(cell);
          rec.labels.push_back(v);
          rec.present.push_back(true);
        } catch (const std::exception&) {
          throw DataError("row " + std::to_string(r) + ", column '" + label_columns[t] +
                          "': cannot parse '" + cell + "' as a number");
        }
      }
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.dropped_rows > 0) {
    std::fprintf(stderr, "[data] %s: dropped %zu rows with unparseable SMILES\n",
                 ds.name.c_str(), ds.dropped_rows);
  }
  if (ds.records.empty()) throw UsageError("no valid rows in " + path);
  return ds;
}

std::string murcko_scaffold(const chem::MoleculeGraph& g) {
  const std::size_t n = g.num_atoms();
  std::vector<bool> keep(n, true);
  std::vector<int> degree(n);
  for (std::size_t v = 0; v < n; ++v) degree[v] = g.atoms[v].degree;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t v = 0; v < n; ++v) {
      if (keep[v] && degree[v] <= 1 && !g.atoms[v].in_ring) {
        keep[v] = false;
        changed = true;
        for (const auto& [u, bi] : g.adjacency[v]) {
          (void)bi;
          if (keep[u]) --degree[u];
        }
      }
    }
  }
  std::vector<int> idx(n, -1);
  ScafGraph sg;
  for (std::size_t v = 0; v < n; ++v) {
    if (keep[v]) {
      idx[v] = (int)sg.atoms.size();
      sg.atoms.emplace_back(g.atoms[v].atomic_num, g.atoms[v].aromatic ? 1 : 0);
    }
  }
  if (sg.atoms.empty()) return "";
  sg.adj.resize(sg.atoms.size());
  for (const auto& b : g.bonds) {
    if (keep[b.a] && keep[b.b]) {
      sg.adj[idx[b.a]].emplace_back(idx[b.b], (int)b.order);
      sg.adj[idx[b.b]].emplace_back(idx[b.a], (int)b.order);
    }
  }
  std::vector<std::uint64_t> ids(sg.atoms.size());
  for (std::size_t v = 0; v < sg.atoms.size(); ++v) {
    const std::uint64_t words[3] = {(std::uint64_t)sg.atoms[v].first,
                                    (std::uint64_t)sg.atoms[v].second,
                                    (std::uint64_t)sg.adj[v].size()};
    ids[v] = fp::hash_mix(words, 3);
  }
  return canonical_string(sg, refine(sg, std::move(ids)));
}

SplitMask scaffold_split(const Dataset& ds, double f_train, double f_valid, double f_test,
                         std::uint64_t seed) {
  if (std::fabs(f_train + f_valid + f_test - 1.0) > 1e-9)
    throw UsageError("split fractions must sum to 1");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.size(); ++i)
    groups[murcko_scaffold(ds.records[i].graph)].push_back(i);
  if (groups.size() < 3)
    throw UsageError("fewer than 3 scaffold groups (" + std::to_string(groups.size()) +
                     "); scaffold splitting is degenerate here, use a random split");

  struct Group {
    std::string key;
    std::vector<std::size_t> members;
  };
  std::vector<Group> ordered;
  for (auto& [key, members] : groups) ordered.push_back({key, std::move(members)});
  std::sort(ordered.begin(), ordered.end(), [](const Group& a, const Group& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return a.key < b.key;
  });
  // seed-shuffled tie order among equal-size groups
  std::mt19937_64 rng(seed);
  std::size_t lo = 0;
  while (lo < ordered.size()) {
    std::size_t hi = lo + 1;
    while (hi < ordered.size() && ordered[hi].members.size() == ordered[lo].members.size())
      ++hi;
    for (std::size_t span = hi - lo; span > 1; --span) {
      const std::size_t j = lo + (std::size_t)(rng() % span);
      std::swap(ordered[lo + span - 1], ordered[j]);
    }
    lo = hi;
  }

  const double n = (double)ds.size();
  SplitMask mask;
  for (const auto& grp : ordered) {
    if ((double)mask.train.size() < f_train * n) {
      mask.train.insert(mask.train.end(), grp.members.begin(), grp.members.end());
    } else if ((double)(mask.train.size() + mask.valid.size()) < (f_train + f_valid) * n) {
      mask.valid.insert(mask.valid.end(), grp.members.begin(), grp.members.end());
    } else {
      mask.test.insert(mask.test.end(), grp.members.begin(), grp.members.end());
    }
  }
  std::sort(mask.train.begin(), mask.train.end());
  std::sort(mask.valid.begin(), mask.valid.end());
  std::sort(mask.test.begin(), mask.test.end());
  return mask;
}

double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size()) throw UsageError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (double y : labels) n_pos += (y > 0.5) ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UsageError("roc_auc: both classes must be present");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // average ranks inside tie groups; the positive rank sum gives Mann-Whitney U
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (double)((i + 1) + j);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] > 0.5) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * (double)n_pos * (double)(n_pos + 1);
  return u / ((double)n_pos * (double)n_neg);
}

double roc_auc_multitask(const std::vector<double>& scores, const std::vector<double>& labels,
                         const std::vector<bool>& present, std::size_t n_tasks,
                         std::size_t* skipped_tasks) {
  if (n_tasks == 0) throw UsageError("roc_auc_multitask: no tasks");
  const std::size_t n = scores.size() / n_tasks;
  double acc = 0.0;
  std::size_t used = 0, skipped = 0;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    std::vector<double> s, y;
    for (std::size_t i = 0; i < n; ++i) {
      if (present[i * n_tasks + t]) {
        s.push_back(scores[i * n_tasks + t]);
        y.push_back(labels[i * n_tasks + t]);
      }
    }
    bool has_pos = false, has_neg = false;
    for (double v : y) (v > 0.5 ? has_pos : has_neg) = true;
    if (s.empty() || !has_pos || !has_neg) {
      ++skipped;
      continue;
    }
    acc += roc_auc(s, y);
    ++used;
  }
  if (skipped_tasks != nullptr) *skipped_tasks = skipped;
  if (used == 0) throw UsageError("roc_auc_multitask: no task has both classes present");
  return acc / (double)used;
}

double rmse(const std::vector<double>& predictions, const std::vector<double>& targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw UsageError("rmse: length mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    acc += d * d;
  }
  return std::sqrt(acc / (double)predictions.size());
}

}  // namespace molgsl::data
