// Loading of benchmark case configurations from JSON data files with
// explicit unit tags, plus data-directory resolution.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "trussforge/case_config.hpp"
#include "trussforge/model.hpp"

namespace trussforge {

/// Root of the data tree (cases/, catalogs/, layouts/). The TRUSSFORGE_DATA
/// environment variable overrides the compiled-in source location.
inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("TRUSSFORGE_DATA")) return env;
#ifdef TRUSSFORGE_SOURCE_DATA_DIR
  return TRUSSFORGE_SOURCE_DATA_DIR;
#else
  return "data";
#endif
}

/// Catalog path, overridable through TRUSSFORGE_CATALOG.
inline std::filesystem::path catalog_path() {
  if (const char* env = std::getenv("TRUSSFORGE_CATALOG")) return env;
  return data_dir() / "catalogs" / "gb50018_2002.txt";
}

inline SectionCatalog load_catalog(const std::filesystem::path& path = catalog_path()) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open section catalog: " + path.string());
  return parse_catalog(in);
}

namespace detail {

// Scalar quantities are tagged objects like {"mm": 50.8} or {"MPa": -123}.
// Vectors and ranges tag the whole array: {"mm": [0, 9144]}.
inline double unit_factor(const std::string& unit) {
  static const std::map<std::string, double> factors = {
      {"m", 1.0},        {"mm", 1e-3},      {"cm", 1e-2},
      {"m2", 1.0},       {"cm2", 1e-4},     {"mm2", 1e-6},
      {"Pa", 1.0},       {"MPa", 1e6},      {"GPa", 1e9},
      {"N", 1.0},        {"kN", 1e3},
      {"kg", 1.0},       {"kg_per_m3", 1.0},
      {"dimensionless", 1.0},
  };
  const auto it = factors.find(unit);
  if (it == factors.end()) throw std::invalid_argument("unknown unit tag: " + unit);
  return it->second;
}

inline std::pair<std::string, json> single_entry(const json& j) {
  if (!j.is_object() || j.size() != 1) {
    throw std::invalid_argument("expected a single {unit: value} object, got " + j.dump());
  }
  const auto it = j.begin();
  return {it.key(), it.value()};
}

inline double quantity(const json& j) {
  const auto [unit, value] = single_entry(j);
  return unit_factor(unit) * value.get<double>();
}

inline Vec3 vector_quantity(const json& j, int dim) {
  const auto [unit, value] = single_entry(j);
  if (static_cast<int>(value.size()) != dim) {
    throw std::invalid_argument("vector quantity has wrong dimensionality");
  }
  Vec3 out = Vec3::Zero();
  for (int a = 0; a < dim; ++a) out[a] = unit_factor(unit) * value.at(a).get<double>();
  return out;
}

inline std::pair<double, double> range_quantity(const json& j) {
  const auto [unit, value] = single_entry(j);
  if (value.size() != 2) throw std::invalid_argument("range quantity needs two values");
  const double f = unit_factor(unit);
  return {f * value.at(0).get<double>(), f * value.at(1).get<double>()};
}

inline std::pair<Vec3, Vec3> box_quantity(const json& j, int dim) {
  const auto [unit, value] = single_entry(j);
  if (static_cast<int>(value.size()) != dim) {
    throw std::invalid_argument("box quantity needs one [lo, hi] per axis");
  }
  const double f = unit_factor(unit);
  Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
  for (int a = 0; a < dim; ++a) {
    lo[a] = f * value.at(a).at(0).get<double>();
    hi[a] = f * value.at(a).at(1).get<double>();
  }
  return {lo, hi};
}

}  // namespace detail

/// Parses a case document. Fixed nodes that are neither supports nor loaded
/// are dropped from the initial layout.
inline CaseConfig parse_case(const json& j, int node_budget,
                             const std::filesystem::path& catalog_file = catalog_path()) {
  CaseConfig cfg;
  cfg.name = j.at("name").get<std::string>();
  cfg.dimension = j.at("dim").get<int>();

  cfg.published_node_counts = j.at("published_node_counts").get<std::vector<int>>();
  if (std::find(cfg.published_node_counts.begin(), cfg.published_node_counts.end(),
                node_budget) == cfg.published_node_counts.end()) {
    std::ostringstream os;
    os << "node count " << node_budget << " is not published for case " << cfg.name;
    throw std::invalid_argument(os.str());
  }
  cfg.max_nodes = node_budget;

  for (const json& jn : j.at("fixed_nodes")) {
    NodeSpec n;
    n.position = detail::vector_quantity(jn.at("pos"), cfg.dimension);
    n.is_support = jn.value("support", false);
    if (jn.contains("load")) n.load = detail::vector_quantity(jn.at("load"), cfg.dimension);
    n.is_fixed = true;
    if (!n.is_support && n.load.squaredNorm() == 0.0) continue;
    cfg.fixed_nodes.push_back(n);
    cfg.fixed_labels.push_back(jn.value("label", std::string()));
  }

  const json& jm = j.at("material");
  cfg.material.youngs_modulus = detail::quantity(jm.at("youngs_modulus"));
  cfg.material.density = detail::quantity(jm.at("density"));
  cfg.material.include_self_weight = jm.value("self_weight", false);
  if (jm.contains("gravity")) cfg.material.gravity = detail::quantity(jm.at("gravity"));

  const json& jc = j.at("constraints");
  for (const std::string& g : jc.at("active").get<std::vector<std::string>>()) {
    if (g.size() != 2 || g[0] != 'g' || g[1] < '0' || g[1] > '7') {
      throw std::invalid_argument("unknown constraint name: " + g);
    }
    cfg.bounds.active[static_cast<std::size_t>(g[1] - '0')] = true;
  }
  if (jc.contains("domain")) {
    cfg.bounds.domain = detail::box_quantity(jc.at("domain"), cfg.dimension);
  }
  if (jc.contains("stress")) {
    std::tie(cfg.bounds.stress_min, cfg.bounds.stress_max) =
        detail::range_quantity(jc.at("stress"));
  }
  if (jc.contains("displacement")) {
    cfg.bounds.max_displacement = detail::quantity(jc.at("displacement"));
  }
  if (jc.contains("length")) {
    std::tie(cfg.bounds.length_min, cfg.bounds.length_max) =
        detail::range_quantity(jc.at("length"));
  }
  if (jc.contains("slenderness")) {
    const json& js = jc.at("slenderness");
    cfg.bounds.slenderness_tension = js.at("tension").get<double>();
    cfg.bounds.slenderness_compression = js.at("compression").get<double>();
    const std::string metric = js.value("metric", std::string("gyration"));
    if (metric == "gyration") {
      cfg.bounds.slenderness_metric = SlendernessMetric::kGyrationRadius;
    } else if (metric == "outer_diameter") {
      cfg.bounds.slenderness_metric = SlendernessMetric::kOuterDiameter;
    } else {
      throw std::invalid_argument("unknown slenderness metric: " + metric);
    }
  }
  if (jc.contains("intersection_clearance")) {
    cfg.bounds.intersection_clearance = detail::quantity(jc.at("intersection_clearance"));
  }

  const json& js = j.at("sections");
  const std::string mode = js.at("mode").get<std::string>();
  if (mode == "continuous") {
    cfg.section_mode = SectionMode::kContinuousArea;
    std::tie(cfg.bounds.area_min, cfg.bounds.area_max) =
        detail::range_quantity(js.at("area"));
  } else if (mode == "catalog") {
    cfg.section_mode = SectionMode::kCatalog;
    cfg.catalog = load_catalog(catalog_file);
    std::tie(cfg.bounds.area_min, cfg.bounds.area_max) = cfg.catalog.min_max_area();
  } else {
    throw std::invalid_argument("unknown section mode: " + mode);
  }

  cfg.kappa_reference_mass = detail::quantity(j.at("kappa_reference_mass"));

  if (j.contains("proposal_box")) {
    cfg.node_proposal_box = detail::box_quantity(j.at("proposal_box"), cfg.dimension);
  } else if (cfg.bounds.domain) {
    cfg.node_proposal_box = *cfg.bounds.domain;
  } else {
    throw std::invalid_argument("case needs a domain or an explicit proposal_box");
  }
  return cfg;
}

inline std::filesystem::path case_path(const std::string& name) {
  std::string file = name;
  std::replace(file.begin(), file.end(), '-', '_');
  return data_dir() / "cases" / (file + ".json");
}

/// Loads one of the bundled cases by name with a total node budget.
inline CaseConfig load_case(const std::string& name, int node_budget) {
  const std::filesystem::path path = case_path(name);
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("unknown case '" + name + "' (no file " +
                                path.string() + ")");
  }
  json j = json::parse(in);
  return parse_case(j, node_budget);
}

/// Case load for validating or drawing an existing layout: when the layout's
/// node count is not a published budget, the nearest published one is used
/// (the budget only constrains search, not the checks).
inline CaseConfig load_case_for_layout(const std::string& name, int node_count) {
  const std::filesystem::path path = case_path(name);
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("unknown case '" + name + "' (no file " +
                                path.string() + ")");
  }
  json j = json::parse(in);
  auto counts = j.at("published_node_counts").get<std::vector<int>>();
  int budget = counts.back();
  for (int c : counts) {
    if (c >= node_count) {
      budget = c;
      break;
    }
  }
  return parse_case(j, budget);
}

}  // namespace trussforge
