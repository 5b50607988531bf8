// Core truss data model: nodes, cross-sections, bars, layout graphs,
// mass, topology keys and the JSON document format.
#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace trussforge {

using json = nlohmann::json;
using Vec3 = Eigen::Vector3d;

/// A solid rectangular-equivalent section used in planar cases; only the
/// cross-sectional area matters.
struct Flat2D {
  double area = 0.0;  // m^2
};

/// A hollow round tube section used in spatial cases.
struct Tube3D {
  double outer_diameter = 0.0;  // m
  double thickness = 0.0;       // m
};

using CrossSection = std::variant<Flat2D, Tube3D>;

/// Cross-sectional area in m^2. Tubes use the annulus area
/// pi*(d^2 - (d-2t)^2)/4; the solid-rod limit d = 2t degenerates to a disc.
inline double section_area(const CrossSection& s) {
  if (const auto* flat = std::get_if<Flat2D>(&s)) return flat->area;
  const auto& t = std::get<Tube3D>(s);
  const double di = t.outer_diameter - 2.0 * t.thickness;
  return M_PI * (t.outer_diameter * t.outer_diameter - di * di) / 4.0;
}

/// Second moment of area in m^4. Tubes: pi*(d^4 - (d-2t)^4)/64.
/// Planar sections are modelled as solid circles of equal area: I = z^2/(4*pi).
inline double section_inertia(const CrossSection& s) {
  if (const auto* flat = std::get_if<Flat2D>(&s)) {
    return flat->area * flat->area / (4.0 * M_PI);
  }
  const auto& t = std::get<Tube3D>(s);
  const double d = t.outer_diameter;
  const double di = d - 2.0 * t.thickness;
  return M_PI * (d * d * d * d - di * di * di * di) / 64.0;
}

inline bool section_valid(const CrossSection& s) {
  if (const auto* flat = std::get_if<Flat2D>(&s)) {
    return std::isfinite(flat->area) && flat->area > 0.0;
  }
  const auto& t = std::get<Tube3D>(s);
  return std::isfinite(t.outer_diameter) && std::isfinite(t.thickness) &&
         t.thickness > 0.0 && 2.0 * t.thickness <= t.outer_diameter;
}

struct NodeSpec {
  Vec3 position = Vec3::Zero();  // m; z = 0 in planar layouts
  bool is_support = false;
  Vec3 load = Vec3::Zero();  // N
  bool is_fixed = false;     // part of the initial layout, never moved/deleted
};

struct Bar {
  int u = -1;
  int v = -1;
  CrossSection section;
  bool is_fixed = false;
};

/// A truss layout graph. Nodes are addressed by list index; bars are
/// undirected and unique per node pair.
struct TrussLayout {
  int dimension = 2;  // 2 or 3
  std::vector<NodeSpec> nodes;
  std::vector<Bar> bars;

  bool has_bar(int u, int v) const {
    for (const Bar& b : bars) {
      if ((b.u == u && b.v == v) || (b.u == v && b.v == u)) return true;
    }
    return false;
  }

  double bar_length(int i) const {
    const Bar& b = bars[static_cast<std::size_t>(i)];
    return (nodes[static_cast<std::size_t>(b.v)].position -
            nodes[static_cast<std::size_t>(b.u)].position)
        .norm();
  }
};

inline bool layout_well_formed(const TrussLayout& g, std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (g.dimension != 2 && g.dimension != 3) return fail("dimension must be 2 or 3");
  const int n = static_cast<int>(g.nodes.size());
  for (const NodeSpec& nd : g.nodes) {
    if ((nd.is_support || nd.load.squaredNorm() > 0.0) && !nd.is_fixed) {
      return fail("support and loaded nodes must be fixed");
    }
    if (g.dimension == 2 && (nd.position.z() != 0.0 || nd.load.z() != 0.0)) {
      return fail("planar layout has nonzero z component");
    }
  }
  std::set<std::pair<int, int>> seen;
  for (const Bar& b : g.bars) {
    if (b.u < 0 || b.u >= n || b.v < 0 || b.v >= n) return fail("dangling node index");
    if (b.u == b.v) return fail("bar endpoints coincide");
    if (!section_valid(b.section)) return fail("invalid cross-section");
    if (g.dimension == 2 && !std::holds_alternative<Flat2D>(b.section)) {
      return fail("planar layout requires area sections");
    }
    if (g.dimension == 3 && !std::holds_alternative<Tube3D>(b.section)) {
      return fail("spatial layout requires tube sections");
    }
    auto key = std::minmax(b.u, b.v);
    if (!seen.insert(key).second) return fail("duplicate bar");
  }
  return true;
}

/// Total mass: sum over bars of density * area * length. The empty sum is 0.
inline double mass(const TrussLayout& g, double density) {
  double m = 0.0;
  for (std::size_t i = 0; i < g.bars.size(); ++i) {
    m += density * section_area(g.bars[i].section) * g.bar_length(static_cast<int>(i));
  }
  return m;
}

/// Canonical edge-set encoding under identity node numbering. Two layouts
/// share a key exactly when their (u,v) edge sets over the same node
/// indexing are equal; geometry and sections are ignored.
struct TopologyKey {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;  // each (min,max), sorted

  friend bool operator==(const TopologyKey&, const TopologyKey&) = default;
  friend auto operator<=>(const TopologyKey&, const TopologyKey&) = default;

  std::string to_string() const {
    std::string s = "n" + std::to_string(node_count);
    for (const auto& [u, v] : edges) {
      s += "|" + std::to_string(u) + "-" + std::to_string(v);
    }
    return s;
  }
};

inline TopologyKey topology_key(const TrussLayout& g) {
  TopologyKey k;
  k.node_count = static_cast<int>(g.nodes.size());
  k.edges.reserve(g.bars.size());
  for (const Bar& b : g.bars) k.edges.push_back(std::minmax(b.u, b.v));
  std::sort(k.edges.begin(), k.edges.end());
  return k;
}

// ---------------------------------------------------------------------------
// Layout JSON documents.
//
//   { "dim": 2|3,
//     "nodes": [ { "pos": [..], "support": bool, "load": [..], "fixed": bool } ],
//     "bars":  [ { "u": int, "v": int,
//                  "section": {"area": f} | {"d": f, "t": f} } ] }
//
// All quantities are SI (metres, Newtons). "support", "load" and "fixed"
// are optional and default to false / zero.
// ---------------------------------------------------------------------------

inline json to_json(const CrossSection& s) {
  if (const auto* flat = std::get_if<Flat2D>(&s)) return json{{"area", flat->area}};
  const auto& t = std::get<Tube3D>(s);
  return json{{"d", t.outer_diameter}, {"t", t.thickness}};
}

inline CrossSection section_from_json(const json& j) {
  if (j.contains("area")) return Flat2D{j.at("area").get<double>()};
  if (j.contains("d") && j.contains("t")) {
    return Tube3D{j.at("d").get<double>(), j.at("t").get<double>()};
  }
  throw std::invalid_argument("section requires either {area} or {d,t}");
}

inline json serialize(const TrussLayout& g) {
  json nodes = json::array();
  for (const NodeSpec& n : g.nodes) {
    json pos = json::array();
    json load = json::array();
    for (int a = 0; a < g.dimension; ++a) {
      pos.push_back(n.position[a]);
      load.push_back(n.load[a]);
    }
    nodes.push_back(json{{"pos", pos},
                         {"support", n.is_support},
                         {"load", load},
                         {"fixed", n.is_fixed}});
  }
  json bars = json::array();
  for (const Bar& b : g.bars) {
    json jb{{"u", b.u}, {"v", b.v}, {"section", to_json(b.section)}};
    if (b.is_fixed) jb["fixed"] = true;
    bars.push_back(jb);
  }
  return json{{"dim", g.dimension}, {"nodes", nodes}, {"bars", bars}};
}

inline TrussLayout deserialize(const json& j) {
  TrussLayout g;
  g.dimension = j.at("dim").get<int>();
  if (g.dimension != 2 && g.dimension != 3) {
    throw std::invalid_argument("dim must be 2 or 3");
  }
  for (const json& jn : j.at("nodes")) {
    NodeSpec n;
    const json& pos = jn.at("pos");
    if (static_cast<int>(pos.size()) != g.dimension) {
      throw std::invalid_argument("node position dimensionality mismatch");
    }
    for (int a = 0; a < g.dimension; ++a) n.position[a] = pos.at(a).get<double>();
    if (jn.contains("load")) {
      const json& load = jn.at("load");
      if (static_cast<int>(load.size()) != g.dimension) {
        throw std::invalid_argument("node load dimensionality mismatch");
      }
      for (int a = 0; a < g.dimension; ++a) n.load[a] = load.at(a).get<double>();
    }
    n.is_support = jn.value("support", false);
    n.is_fixed = jn.value("fixed", false);
    g.nodes.push_back(n);
  }
  const int count = static_cast<int>(g.nodes.size());
  std::set<std::pair<int, int>> seen;
  for (const json& jb : j.at("bars")) {
    Bar b;
    b.u = jb.at("u").get<int>();
    b.v = jb.at("v").get<int>();
    if (b.u < 0 || b.u >= count || b.v < 0 || b.v >= count) {
      throw std::invalid_argument("dangling node index");
    }
    if (b.u == b.v) throw std::invalid_argument("bar endpoints coincide");
    if (!seen.insert(std::minmax(b.u, b.v)).second) {
      throw std::invalid_argument("duplicate bar");
    }
    b.section = section_from_json(jb.at("section"));
    b.is_fixed = jb.value("fixed", false);
    g.bars.push_back(b);
  }
  std::string why;
  if (!layout_well_formed(g, &why)) throw std::invalid_argument(why);
  return g;
}

// ---------------------------------------------------------------------------
// Section catalog: ordered list of (outer diameter, thickness) tube sizes,
// loaded from a plain-text table with one "d t" pair per line in millimetres.
// ---------------------------------------------------------------------------

struct SectionCatalog {
  struct Entry {
    double outer_diameter = 0.0;  // m
    double thickness = 0.0;       // m
    double area = 0.0;            // m^2
    double inertia = 0.0;         // m^4
  };
  std::vector<Entry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }

  Tube3D section(std::size_t i) const {
    return Tube3D{entries[i].outer_diameter, entries[i].thickness};
  }

  double min_area() const { return min_max_area().first; }
  double max_area() const { return min_max_area().second; }

  std::pair<double, double> min_max_area() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Entry& e : entries) {
      lo = std::min(lo, e.area);
      hi = std::max(hi, e.area);
    }
    return {lo, hi};
  }

  /// Index of the exact (d, t) entry, if present (1e-9 m tolerance).
  std::optional<std::size_t> find(double d, double t) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (std::abs(entries[i].outer_diameter - d) < 1e-9 &&
          std::abs(entries[i].thickness - t) < 1e-9) {
        return i;
      }
    }
    return std::nullopt;
  }

  /// Smallest entry with outer_diameter >= d and thickness >= t, in catalog
  /// order. Empty when no entry dominates the request.
  std::optional<std::size_t> round_up(double d, double t) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].outer_diameter >= d - 1e-12 && entries[i].thickness >= t - 1e-12) {
        return i;
      }
    }
    return std::nullopt;
  }
};

/// Parses the catalog text format. Lines starting with '#' are comments.
inline SectionCatalog parse_catalog(std::istream& in) {
  SectionCatalog cat;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    double d_mm = 0.0, t_mm = 0.0;
    if (std::sscanf(line.c_str(), "%lf %lf", &d_mm, &t_mm) != 2) {
      throw std::invalid_argument("catalog line is not a 'd t' pair: " + line);
    }
    SectionCatalog::Entry e;
    e.outer_diameter = d_mm * 1e-3;
    e.thickness = t_mm * 1e-3;
    const Tube3D tube{e.outer_diameter, e.thickness};
    if (!section_valid(CrossSection{tube})) {
      throw std::invalid_argument("catalog entry violates 0 < 2t <= d: " + line);
    }
    e.area = section_area(CrossSection{tube});
    e.inertia = section_inertia(CrossSection{tube});
    cat.entries.push_back(e);
  }
  for (std::size_t i = 1; i < cat.entries.size(); ++i) {
    const auto& a = cat.entries[i - 1];
    const auto& b = cat.entries[i];
    if (std::make_pair(a.outer_diameter, a.thickness) >=
        std::make_pair(b.outer_diameter, b.thickness)) {
      throw std::invalid_argument("catalog entries must be strictly ordered by (d, t)");
    }
  }
  return cat;
}

}  // namespace trussforge
