// SPDX-License-Identifier: Apache-2.0
//
// Experiment config documents (JSON, schema_version 1). Every key is optional;
// unknown keys are rejected so typos do not silently fall back to defaults.
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hima/hima.hpp"

namespace hima::cli {

using nlohmann::json;

/// Bad flags, bad config values, unreadable inputs: exit code 2.
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  std::optional<MemoryGeometry> geometry;
  std::size_t steps = 10;
  int precision = 64;
  SoftmaxMode softmax = SoftmaxMode::exact;
  SkimConfig skim{};
  std::size_t n_t = 16;
  std::vector<std::size_t> n_t_list{1, 2, 4, 8, 16};
  TopologyKind topology = TopologyKind::hima_multimode;
  std::vector<TopologyKind> topologies{kAllTopologies.begin(), kAllTopologies.end()};
  ModelKind model = ModelKind::dnc;
  std::optional<PartitionSpec> ext_partition;
  std::optional<PartitionSpec> linkage_partition;
  SimParams router{};
  std::size_t pe_lanes = 64;
  std::optional<std::vector<double>> alpha;
  SortTiming sort{};
  std::vector<std::pair<std::size_t, std::size_t>> sort_rows{{1024, 4}, {1024, 1}};
  std::optional<std::string> trace;
  RouterMode mode = RouterMode::full;

  ArchConfig arch(const MemoryGeometry& fallback) const {
    ArchConfig a;
    a.geometry = geometry.value_or(fallback);
    a.n_t = n_t;
    a.ext_partition = ext_partition;
    a.linkage_partition = linkage_partition;
    a.topology = topology;
    a.router = router;
    a.pe_lanes = pe_lanes;
    a.model = model;
    a.skim = skim;
    a.softmax = softmax;
    a.sort = sort;
    return a;
  }
};

namespace detail {

template <class T>
T get_unsigned(const json& j, const char* key, T min_value = 0) {
  if (!j.is_number_integer()) throw usage_error(std::string("config: '") + key + "' must be an integer");
  const auto v = j.get<long long>();
  if (v < static_cast<long long>(min_value))
    throw usage_error(std::string("config: '") + key + "' must be >= " + std::to_string(min_value));
  return static_cast<T>(v);
}

inline void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw usage_error(std::string("config: '") + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw usage_error(std::string("config: unknown key '") + k + "' in " + where);
}

inline std::optional<PartitionSpec> get_partition(const json& j, const char* key) {
  if (j.is_string() && j.get<std::string>() == "auto") return std::nullopt;
  if (!j.is_array() || j.size() != 2)
    throw usage_error(std::string("config: '") + key + "' must be \"auto\" or [n_h, n_w]");
  return PartitionSpec{get_unsigned<std::size_t>(j[0], key, 1), get_unsigned<std::size_t>(j[1], key, 1)};
}

template <class F>
auto parse_enum(const json& j, const char* key, F&& parse) {
  if (!j.is_string()) throw usage_error(std::string("config: '") + key + "' must be a string");
  try {
    return parse(j.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw usage_error(std::string("config: ") + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& doc) {
  using detail::get_unsigned;
  detail::check_keys(doc, "config",
                     {"schema_version", "seed", "geometry", "steps", "precision", "softmax", "skim", "n_t",
                      "n_t_list", "topology", "topologies", "model", "ext_partition", "linkage_partition", "router",
                      "pe_lanes", "alpha", "sort", "trace", "mode"});
  if (doc.contains("schema_version") && get_unsigned<int>(doc["schema_version"], "schema_version") != kSchemaVersion)
    throw usage_error("config: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  ExperimentConfig c;
  if (doc.contains("seed")) c.seed = get_unsigned<std::uint64_t>(doc["seed"], "seed");
  if (doc.contains("geometry")) {
    const auto& g = doc["geometry"];
    detail::check_keys(g, "geometry", {"N", "W", "R"});
    if (!g.contains("N") || !g.contains("W") || !g.contains("R")) throw usage_error("config: geometry needs N, W, R");
    c.geometry = MemoryGeometry{get_unsigned<std::size_t>(g["N"], "N", 1), get_unsigned<std::size_t>(g["W"], "W", 1),
                                get_unsigned<std::size_t>(g["R"], "R", 1)};
  }
  if (doc.contains("steps")) c.steps = get_unsigned<std::size_t>(doc["steps"], "steps", 1);
  if (doc.contains("precision")) {
    c.precision = get_unsigned<int>(doc["precision"], "precision");
    if (c.precision != 32 && c.precision != 64) throw usage_error("config: precision must be 32 or 64");
  }
  if (doc.contains("softmax"))
    c.softmax = detail::parse_enum(doc["softmax"], "softmax", [](const std::string& s) {
      if (s == "exact") return SoftmaxMode::exact;
      if (s == "approx") return SoftmaxMode::approx;
      throw std::invalid_argument("softmax must be exact or approx");
    });
  if (doc.contains("skim")) {
    const auto& s = doc["skim"];
    detail::check_keys(s, "skim", {"K", "policy"});
    if (s.contains("K")) {
      if (!s["K"].is_number()) throw usage_error("config: skim.K must be a number");
      c.skim.K = s["K"].get<double>();
    }
    if (s.contains("policy"))
      c.skim.policy = detail::parse_enum(s["policy"], "policy", [](const std::string& p) {
        if (p == "skim-largest") return SkimPolicy::skim_largest;
        if (p == "skim-smallest") return SkimPolicy::skim_smallest;
        throw std::invalid_argument("skim.policy must be skim-largest or skim-smallest");
      });
    if (!(c.skim.K >= 0.0 && c.skim.K < 1.0)) throw usage_error("config: skim.K must lie in [0, 1)");
  }
  if (doc.contains("n_t")) c.n_t = get_unsigned<std::size_t>(doc["n_t"], "n_t", 1);
  if (doc.contains("n_t_list")) {
    if (!doc["n_t_list"].is_array() || doc["n_t_list"].empty())
      throw usage_error("config: n_t_list must be a non-empty array");
    c.n_t_list.clear();
    for (const auto& v : doc["n_t_list"]) c.n_t_list.push_back(get_unsigned<std::size_t>(v, "n_t_list", 1));
  }
  if (doc.contains("topology")) c.topology = detail::parse_enum(doc["topology"], "topology", parse_topology);
  if (doc.contains("topologies")) {
    if (!doc["topologies"].is_array() || doc["topologies"].empty())
      throw usage_error("config: topologies must be a non-empty array");
    c.topologies.clear();
    for (const auto& v : doc["topologies"]) c.topologies.push_back(detail::parse_enum(v, "topologies", parse_topology));
  }
  if (doc.contains("model")) c.model = detail::parse_enum(doc["model"], "model", parse_model);
  if (doc.contains("ext_partition")) c.ext_partition = detail::get_partition(doc["ext_partition"], "ext_partition");
  if (doc.contains("linkage_partition"))
    c.linkage_partition = detail::get_partition(doc["linkage_partition"], "linkage_partition");
  if (doc.contains("router")) {
    const auto& r = doc["router"];
    detail::check_keys(r, "router", {"queue_depth", "ct_ports"});
    if (r.contains("queue_depth")) c.router.queue_depth = get_unsigned<std::size_t>(r["queue_depth"], "queue_depth", 1);
    if (r.contains("ct_ports")) c.router.ct_ports = get_unsigned<std::size_t>(r["ct_ports"], "ct_ports", 1);
  }
  if (doc.contains("pe_lanes")) c.pe_lanes = get_unsigned<std::size_t>(doc["pe_lanes"], "pe_lanes", 1);
  if (doc.contains("alpha")) {
    if (!doc["alpha"].is_array()) throw usage_error("config: alpha must be an array");
    std::vector<double> a;
    for (const auto& v : doc["alpha"]) {
      if (!v.is_number()) throw usage_error("config: alpha entries must be numbers");
      a.push_back(v.get<double>());
    }
    c.alpha = std::move(a);
  }
  if (doc.contains("sort")) {
    const auto& s = doc["sort"];
    detail::check_keys(s, "sort", {"d_dpbs", "d_pms", "rows"});
    if (s.contains("d_dpbs") && !s["d_dpbs"].is_null()) c.sort.d_dpbs = get_unsigned<std::size_t>(s["d_dpbs"], "d_dpbs", 1);
    if (s.contains("d_pms")) c.sort.d_pms = get_unsigned<std::size_t>(s["d_pms"], "d_pms", 1);
    if (s.contains("rows")) {
      if (!s["rows"].is_array()) throw usage_error("config: sort.rows must be an array of [N, N_t]");
      c.sort_rows.clear();
      for (const auto& row : s["rows"]) {
        if (!row.is_array() || row.size() != 2) throw usage_error("config: sort.rows entries must be [N, N_t]");
        c.sort_rows.emplace_back(get_unsigned<std::size_t>(row[0], "sort.rows"),
                                 get_unsigned<std::size_t>(row[1], "sort.rows"));
      }
    }
  }
  if (doc.contains("trace")) {
    if (!doc["trace"].is_string()) throw usage_error("config: trace must be a path");
    c.trace = doc["trace"].get<std::string>();
  }
  if (doc.contains("mode")) c.mode = detail::parse_enum(doc["mode"], "mode", parse_mode);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw usage_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

}  // namespace hima::cli
