// Test-case configuration: fixed nodes, material, constraint bounds and
// section regime. Immutable after load.
#pragma once

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "trussforge/fea.hpp"
#include "trussforge/model.hpp"

namespace trussforge {

enum class SlendernessMetric {
  kGyrationRadius,   // l / sqrt(I/z)
  kOuterDiameter,    // l / d, for tube catalogs
};

/// Bounds for the eight constraint checks g0..g7 plus the active set.
struct ConstraintBounds {
  static constexpr int kConstraintCount = 8;

  std::optional<std::pair<Vec3, Vec3>> domain;  // axis-aligned box, else unbounded
  double area_min = 0.0;                        // m^2
  double area_max = std::numeric_limits<double>::infinity();
  double stress_min = -std::numeric_limits<double>::infinity();  // Pa
  double stress_max = std::numeric_limits<double>::infinity();
  double max_displacement = std::numeric_limits<double>::infinity();  // m
  double slenderness_tension = std::numeric_limits<double>::infinity();
  double slenderness_compression = std::numeric_limits<double>::infinity();
  SlendernessMetric slenderness_metric = SlendernessMetric::kGyrationRadius;
  double length_min = 0.0;  // m
  double length_max = std::numeric_limits<double>::infinity();
  double intersection_clearance = 0.010;  // m, spatial bar separation
  std::array<bool, kConstraintCount> active{};  // g0..g7

  bool is_active(int g) const { return active[static_cast<std::size_t>(g)]; }
};

enum class SectionMode { kContinuousArea, kCatalog };

struct CaseConfig {
  std::string name;
  int dimension = 2;
  std::vector<NodeSpec> fixed_nodes;
  std::vector<std::string> fixed_labels;  // drawing labels, parallel to fixed_nodes
  MaterialSpec material;
  ConstraintBounds bounds;
  SectionMode section_mode = SectionMode::kContinuousArea;
  SectionCatalog catalog;  // populated in catalog mode
  int max_nodes = 0;       // total node budget including fixed nodes
  std::vector<int> published_node_counts;
  double kappa_reference_mass = 0.0;            // kg
  std::pair<Vec3, Vec3> node_proposal_box{Vec3::Zero(), Vec3::Zero()};

  /// Reward scale bounding the maximum valid reward near 10 at the
  /// reference mass.
  double kappa() const { return 10.0 * kappa_reference_mass * kappa_reference_mass; }

  TrussLayout initial_layout() const {
    TrussLayout g;
    g.dimension = dimension;
    g.nodes = fixed_nodes;
    return g;
  }

  /// Uniformly random legal section for this case's regime.
  template <typename RngT>
  CrossSection random_section(RngT& rng) const {
    if (section_mode == SectionMode::kCatalog) {
      return catalog.section(static_cast<std::size_t>(
          rng.uniform_index(static_cast<int>(catalog.size()))));
    }
    return Flat2D{rng.uniform(bounds.area_min, bounds.area_max)};
  }
};

}  // namespace trussforge
