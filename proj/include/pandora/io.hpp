#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pandora/instance.hpp"

namespace pandora {

using json = nlohmann::json;

namespace detail {

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InputError(where + ": unknown field '" + key + "'");
}

template <class T>
T get_as(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Parses an instance document. Field names: topology, support, lambda, nodes[{id, cost,
/// rootPmf | transition, parent, line}], skipCosts {matrix | affine{base, ratePerStep} | pathSum}.
inline ExplorationInstance instance_from_json(const json& j) {
  detail::only_keys(j, {"topology", "support", "lambda", "nodes", "skipCosts"}, "instance");
  ExplorationInstance inst;
  inst.topology = parse_topology(detail::get_as<std::string>(j, "topology", "instance"));
  inst.support = Support(detail::get_as<std::vector<double>>(j, "support", "instance"));
  if (j.contains("lambda")) inst.lambda = detail::get_as<double>(j, "lambda", "instance");
  if (!j.contains("nodes")) throw InputError("instance: missing field 'nodes'");
  const auto& nodes = j.at("nodes");
  if (!nodes.is_array()) throw InputError("instance: 'nodes' must be an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& nj = nodes[i];
    const std::string where = "node " + std::to_string(i);
    detail::only_keys(nj, {"id", "cost", "rootPmf", "transition", "parent", "line"}, where);
    NodeSpec n;
    n.id = detail::get_as<std::string>(nj, "id", where);
    n.cost = detail::get_as<double>(nj, "cost", where);
    const bool has_pmf = nj.contains("rootPmf"), has_tr = nj.contains("transition");
    if (has_pmf == has_tr) throw InputError(where + ": exactly one of rootPmf/transition required");
    if (has_pmf) n.loss = Pmf(detail::get_as<std::vector<double>>(nj, "rootPmf", where));
    else n.loss = TransitionMatrix(detail::get_as<std::vector<std::vector<double>>>(nj, "transition", where));
    if (nj.contains("parent")) {
      const auto& p = nj.at("parent");
      if (p.is_string()) n.parents = {p.get<std::string>()};
      else n.parents = detail::get_as<std::vector<std::string>>(nj, "parent", where);
    }
    if (nj.contains("line")) n.line = detail::get_as<int>(nj, "line", where);
    inst.nodes.push_back(std::move(n));
  }
  if (j.contains("skipCosts")) {
    const auto& sc = j.at("skipCosts");
    detail::only_keys(sc, {"matrix", "affine", "pathSum"}, "skipCosts");
    if (sc.size() != 1) throw InputError("skipCosts: give exactly one of matrix/affine/pathSum");
    if (sc.contains("matrix")) {
      inst.skip_costs = SkipCostTable(detail::get_as<std::vector<std::vector<double>>>(sc, "matrix", "skipCosts"));
    } else if (sc.contains("affine")) {
      const auto& a = sc.at("affine");
      detail::only_keys(a, {"base", "ratePerStep"}, "skipCosts.affine");
      inst.skip_costs = SkipCostTable::affine(inst.nodes.size(), detail::get_as<double>(a, "base", "skipCosts.affine"),
                                              detail::get_as<double>(a, "ratePerStep", "skipCosts.affine"));
    } else {
      if (!detail::get_as<bool>(sc, "pathSum", "skipCosts")) throw InputError("skipCosts: pathSum must be true");
      std::vector<double> step;
      for (const auto& n : inst.nodes) step.push_back(n.cost);
      inst.skip_costs = SkipCostTable::path_sum(step);
    }
  }
  return inst;
}

inline json instance_to_json(const ExplorationInstance& inst) {
  json j;
  j["topology"] = to_string(inst.topology);
  j["support"] = inst.support.values();
  j["lambda"] = inst.lambda;
  j["nodes"] = json::array();
  for (const auto& n : inst.nodes) {
    json nj;
    nj["id"] = n.id;
    nj["cost"] = n.cost;
    if (const auto* p = std::get_if<Pmf>(&n.loss)) nj["rootPmf"] = p->probs();
    else nj["transition"] = std::get<TransitionMatrix>(n.loss).rows();
    if (n.parents.size() == 1) nj["parent"] = n.parents.front();
    else if (!n.parents.empty()) nj["parent"] = n.parents;
    if (n.line) nj["line"] = *n.line;
    j["nodes"].push_back(std::move(nj));
  }
  if (inst.skip_costs) j["skipCosts"] = {{"matrix", inst.skip_costs->matrix()}};
  return j;
}

inline ExplorationInstance parse_instance(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON: ") + e.what());
  }
  return instance_from_json(j);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExplorationInstance load_instance(const std::string& path) { return parse_instance(read_file(path)); }

inline void save_instance(const std::string& path, const ExplorationInstance& inst) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << instance_to_json(inst).dump(2) << '\n';
}

// ---------------------------------------------------------------------------------------
// Traces: one row of raw per-exit losses per input, plus one cost proxy per exit.

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

struct TraceDataset {
  std::vector<std::vector<double>> rows;
  std::vector<double> costs;

  std::size_t exits() const { return costs.size(); }
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InputError(where + ": '" + s + "' is not a number");
  }
  if (used != s.size()) throw InputError(where + ": '" + s + "' is not a number");
  return v;
}

inline void expect_header(const std::vector<std::string>& h, const std::string& prefix, const std::string& suffix,
                          const std::string& where) {
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] != prefix + std::to_string(i + 1) + suffix)
      throw InputError(where + ": expected column '" + prefix + std::to_string(i + 1) + suffix + "', got '" + h[i] + "'");
}

inline std::vector<std::string> nonblank_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

}  // namespace detail

/// Costs CSV: header cost_1,...,cost_n and one row of values.
inline std::vector<double> parse_costs_csv(const std::string& text) {
  const auto lines = detail::nonblank_lines(text);
  if (lines.size() != 2) throw InputError("costs file: expected a header and one row");
  const auto h = detail::split_csv(lines[0]);
  detail::expect_header(h, "cost_", "", "costs file");
  const auto r = detail::split_csv(lines[1]);
  if (r.size() != h.size()) throw InputError("costs file: row length != header length");
  std::vector<double> c;
  for (const auto& s : r) c.push_back(detail::parse_number(s, "costs file"));
  return c;
}

/// Trace CSV: optional leading cost block (header cost_1..cost_n, one row), then header
/// exit_1_loss..exit_n_loss and one row per input.
inline TraceDataset parse_trace_csv(const std::string& text, const std::vector<double>* costs = nullptr) {
  auto lines = detail::nonblank_lines(text);
  TraceDataset t;
  std::size_t at = 0;
  if (!lines.empty() && lines[0].rfind("cost_", 0) == 0) {
    if (lines.size() < 2) throw InputError("trace: cost header without values");
    t.costs = parse_costs_csv(lines[0] + "\n" + lines[1]);
    at = 2;
  }
  if (costs) t.costs = *costs;
  if (at >= lines.size()) throw InputError("no data");
  const auto h = detail::split_csv(lines[at]);
  detail::expect_header(h, "exit_", "_loss", "trace");
  if (t.costs.empty()) throw InputError("trace: no costs given (cost block or costs file)");
  if (t.costs.size() != h.size()) throw InputError("trace: cost count != exit count");
  for (std::size_t i = at + 1; i < lines.size(); ++i) {
    const auto cells = detail::split_csv(lines[i]);
    const std::string where = "trace line " + std::to_string(i + 1);
    if (cells.size() != h.size()) throw InputError(where + ": row length != header length");
    std::vector<double> row;
    for (const auto& c : cells) {
      const double v = detail::parse_number(c, where);
      if (!(v >= 0.0) || !std::isfinite(v)) throw InputError(where + ": losses must be finite and >= 0");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw InputError("no data");
  for (double c : t.costs)
    if (!(c > 0.0) || !std::isfinite(c)) throw InputError("trace: costs must be finite and > 0");
  return t;
}

inline void write_trace_csv(std::ostream& os, const TraceDataset& t) {
  for (std::size_t i = 0; i < t.exits(); ++i) os << (i ? "," : "") << "cost_" << i + 1;
  os << '\n';
  for (std::size_t i = 0; i < t.exits(); ++i) os << (i ? "," : "") << format_double(t.costs[i]);
  os << '\n';
  for (std::size_t i = 0; i < t.exits(); ++i) os << (i ? "," : "") << "exit_" << i + 1 << "_loss";
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_double(r[i]);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------------------
// Quantization and estimation.

struct QuantizedTrace {
  Support support;
  std::vector<std::vector<int>> levels;  // level index per row and exit
  std::vector<double> boundaries;        // value x falls in bin j when b[j-1] < x <= b[j]
  std::vector<double> costs;
};

/// Pooled empirical quantiles over every exit. Bin edges are the q/bins quantiles and a value
/// on an edge belongs to the lower bin; each bin is represented by its (q + 1/2)/bins quantile.
/// With at most `bins` distinct values, each distinct value becomes its own level.
inline QuantizedTrace quantize_losses(const TraceDataset& t, std::size_t bins) {
  if (bins < 2) throw InputError("bins must be >= 2");
  if (t.rows.empty()) throw InputError("no data");
  std::vector<double> all;
  for (const auto& r : t.rows) all.insert(all.end(), r.begin(), r.end());
  std::sort(all.begin(), all.end());
  const std::size_t N = all.size();
  auto quantile = [&](double p) { return all[std::min(N - 1, std::size_t(std::floor(p * double(N))))]; };

  std::vector<double> distinct;
  std::unique_copy(all.begin(), all.end(), std::back_inserter(distinct));
  std::vector<double> reps, edges;
  if (distinct.size() <= bins) {
    reps = distinct;
    for (std::size_t j = 0; j + 1 < distinct.size(); ++j) edges.push_back(distinct[j]);
  } else {
    std::vector<double> raw_edges, raw_reps;
    for (std::size_t q = 1; q < bins; ++q) raw_edges.push_back(quantile(double(q) / double(bins)));
    for (std::size_t q = 0; q < bins; ++q) raw_reps.push_back(quantile((double(q) + 0.5) / double(bins)));
    // Merge bins whose representatives coincide; the surviving edge is the upper one.
    for (std::size_t q = 0; q < bins; ++q) {
      if (!reps.empty() && raw_reps[q] == reps.back()) {
        if (q < bins - 1) edges.back() = raw_edges[q];
        else edges.pop_back();
        continue;
      }
      reps.push_back(raw_reps[q]);
      if (q < bins - 1) edges.push_back(raw_edges[q]);
    }
  }

  QuantizedTrace out;
  out.support = Support(reps);
  out.boundaries = edges;
  out.costs = t.costs;
  for (const auto& r : t.rows) {
    std::vector<int> lv;
    for (double x : r) lv.push_back(int(std::lower_bound(edges.begin(), edges.end(), x) - edges.begin()));
    out.levels.push_back(std::move(lv));
  }
  return out;
}

struct EstimatedChain {
  Pmf root;
  std::vector<TransitionMatrix> kernels;  // kernels[i] takes exit i+1 to exit i+2
};

/// Smoothed counts: P[a][b] = (#(a -> b) + s) / (#a + s k); unseen rows with s = 0 fall back
/// to uniform so every output stays stochastic.
inline EstimatedChain estimate_transitions(const QuantizedTrace& q, double pseudocount = 1.0) {
  if (q.levels.empty()) throw InputError("no data");
  if (pseudocount < 0.0) throw InputError("pseudocount must be >= 0");
  const std::size_t k = q.support.size(), n = q.levels.front().size();
  EstimatedChain out;
  std::vector<double> root(k, pseudocount);
  for (const auto& r : q.levels) root[std::size_t(r[0])] += 1.0;
  const double rz = double(q.levels.size()) + pseudocount * double(k);
  for (auto& p : root) p /= rz;
  out.root = Pmf(root);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::vector<std::vector<double>> c(k, std::vector<double>(k, pseudocount));
    for (const auto& r : q.levels) c[std::size_t(r[i])][std::size_t(r[i + 1])] += 1.0;
    for (auto& row : c) {
      double z = 0.0;
      for (double x : row) z += x;
      if (z == 0.0) row.assign(k, 1.0 / double(k));
      else
        for (auto& x : row) x /= z;
    }
    out.kernels.emplace_back(std::move(c));
  }
  return out;
}

/// Line instance over the trace's exits with the estimated chain and the trace's costs.
inline ExplorationInstance instance_from_trace(const QuantizedTrace& q, const EstimatedChain& c, double lambda) {
  return make_line(q.support, lambda, c.root, c.kernels, q.costs);
}

}  // namespace pandora
