// Run manifests and JSON checkpoints carrying the diverse layout store
// between the search and refinement stages.
#pragma once

#include <fstream>
#include <optional>
#include <string>

#include "trussforge/diverse.hpp"
#include "trussforge/model.hpp"

namespace trussforge {

/// Everything needed to reproduce a run in single-worker mode. Wall-clock
/// timing is reported on the console, never stored, so identical runs write
/// identical files.
struct RunManifest {
  std::string case_name;
  int max_nodes = 0;
  std::uint64_t seed = 0;
  long search_budget = 0;
  long rl_steps = 0;
  double kappa = 0.0;
  bool no_diverse = false;
  int max_invalid = 5;
  int episode_len = 20;

  json to_json() const {
    return json{{"case", case_name},       {"max_nodes", max_nodes},
                {"seed", seed},            {"search_budget", search_budget},
                {"rl_steps", rl_steps},    {"kappa", kappa},
                {"no_diverse", no_diverse}, {"max_invalid", max_invalid},
                {"episode_len", episode_len}};
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.case_name = j.at("case").get<std::string>();
    m.max_nodes = j.at("max_nodes").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.search_budget = j.at("search_budget").get<long>();
    m.rl_steps = j.at("rl_steps").get<long>();
    m.kappa = j.at("kappa").get<double>();
    m.no_diverse = j.value("no_diverse", false);
    m.max_invalid = j.value("max_invalid", 5);
    m.episode_len = j.value("episode_len", 20);
    return m;
  }
};

inline json to_json(const DiverseSet& set) {
  json topologies = json::array();
  for (const auto& [key, list] : set.by_topology()) {
    json layouts = json::array();
    for (const ScoredLayout& s : list) {
      layouts.push_back(json{{"mass", s.mass}, {"layout", serialize(s.layout)}});
    }
    topologies.push_back(json{{"key", key.to_string()}, {"layouts", layouts}});
  }
  json lightest = json::array();
  for (const ScoredLayout& s : set.lightest()) {
    lightest.push_back(json{{"mass", s.mass}, {"layout", serialize(s.layout)}});
  }
  return json{{"topologies", topologies}, {"lightest", lightest}};
}

inline DiverseSet diverse_from_json(const json& j) {
  DiverseSet set;
  for (const json& topo : j.at("topologies")) {
    for (const json& entry : topo.at("layouts")) {
      set.offer(deserialize(entry.at("layout")), entry.at("mass").get<double>());
    }
  }
  for (const json& entry : j.at("lightest")) {
    set.offer(deserialize(entry.at("layout")), entry.at("mass").get<double>());
  }
  return set;
}

struct Checkpoint {
  RunManifest manifest;
  DiverseSet diverse;
  long iterations = 0;
  std::string rng_state;

  json to_json() const {
    return json{{"manifest", manifest.to_json()},
                {"diverse_set", trussforge::to_json(diverse)},
                {"iterations", iterations},
                {"rng_state", rng_state}};
  }

  static Checkpoint from_json(const json& j) {
    Checkpoint c;
    c.manifest = RunManifest::from_json(j.at("manifest"));
    c.diverse = diverse_from_json(j.at("diverse_set"));
    c.iterations = j.at("iterations").get<long>();
    c.rng_state = j.value("rng_state", std::string());
    return c;
  }
};

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << c.to_json().dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  return Checkpoint::from_json(json::parse(in));
}

}  // namespace trussforge
