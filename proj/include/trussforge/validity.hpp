// Constraint evaluation g0..g7 and the three-way layout classification
// consumed by both reward functions.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "trussforge/case_config.hpp"
#include "trussforge/fea.hpp"
#include "trussforge/model.hpp"

namespace trussforge {

enum class Classification { kValid, kInvalidStructural, kInvalidOther };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::kValid: return "valid";
    case Classification::kInvalidStructural: return "invalid_structural";
    case Classification::kInvalidOther: return "invalid_other";
  }
  return "?";
}

struct ValidityReport {
  enum class Status { kPass, kFail, kInactive };
  std::array<Status, ConstraintBounds::kConstraintCount> status{};
  /// Worst violation per constraint; 0 when satisfied, units follow the
  /// constrained quantity.
  std::array<double, ConstraintBounds::kConstraintCount> violation{};
  Classification classification = Classification::kInvalidStructural;

  bool valid() const { return classification == Classification::kValid; }
  bool passed(int g) const { return status[static_cast<std::size_t>(g)] == Status::kPass; }
  bool failed(int g) const { return status[static_cast<std::size_t>(g)] == Status::kFail; }

  json to_json() const {
    json constraints = json::object();
    for (int g = 0; g < ConstraintBounds::kConstraintCount; ++g) {
      const char* s = status[static_cast<std::size_t>(g)] == Status::kPass     ? "pass"
                      : status[static_cast<std::size_t>(g)] == Status::kFail  ? "fail"
                                                                              : "inactive";
      constraints["g" + std::to_string(g)] =
          json{{"status", s}, {"violation", violation[static_cast<std::size_t>(g)]}};
    }
    return json{{"classification", trussforge::to_string(classification)},
                {"constraints", constraints}};
  }
};

namespace geom {

/// Closest-approach parameters of two segments p0+s*(p1-p0), q0+t*(q1-q0),
/// clamped to [0,1].
inline void segment_closest(const Vec3& p0, const Vec3& p1, const Vec3& q0,
                            const Vec3& q1, double* s_out, double* t_out) {
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.dot(d1);
  const double e = d2.dot(d2);
  const double f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-30 && e <= 1e-30) {
    // Both degenerate.
  } else if (a <= 1e-30) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-30) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      if (denom > 1e-30) s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  *s_out = s;
  *t_out = t;
}

inline double segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0,
                               const Vec3& q1) {
  double s = 0.0, t = 0.0;
  segment_closest(p0, p1, q0, q1, &s, &t);
  return ((p0 + s * (p1 - p0)) - (q0 + t * (q1 - q0))).norm();
}

inline int orientation(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double cross = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
  const double scale = std::max({std::abs(b.x() - a.x()), std::abs(b.y() - a.y()),
                                 std::abs(c.x() - a.x()), std::abs(c.y() - a.y()), 1e-12});
  if (cross > 1e-12 * scale * scale) return 1;
  if (cross < -1e-12 * scale * scale) return -1;
  return 0;
}

}  // namespace geom

/// Collision test on raw segment endpoints. Planar: strict interior
/// crossing (endpoint touches excluded); collinear overlap of positive
/// length counts. Spatial: closest approach below the clearance with the
/// closest points interior to both segments.
inline bool segments_collide(int dimension, const Vec3& p0, const Vec3& p1,
                             const Vec3& q0, const Vec3& q1, double clearance) {
  if (dimension == 2) {
    const int o1 = geom::orientation(p0, p1, q0);
    const int o2 = geom::orientation(p0, p1, q1);
    const int o3 = geom::orientation(q0, q1, p0);
    const int o4 = geom::orientation(q0, q1, p1);
    if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) return true;
    if (o1 == 0 && o2 == 0 && o3 == 0 && o4 == 0) {
      // Collinear: colliding only if the interiors overlap over a positive span.
      const Vec3 dir = p1 - p0;
      const double len2 = dir.squaredNorm();
      if (len2 <= 1e-30) return false;
      double t0 = dir.dot(q0 - p0) / len2;
      double t1 = dir.dot(q1 - p0) / len2;
      if (t0 > t1) std::swap(t0, t1);
      const double lo = std::max(0.0, t0);
      const double hi = std::min(1.0, t1);
      return hi - lo > 1e-9;
    }
    return false;
  }

  double s = 0.0, t = 0.0;
  geom::segment_closest(p0, p1, q0, q1, &s, &t);
  constexpr double kInterior = 1e-9;
  if (s <= kInterior || s >= 1.0 - kInterior) return false;
  if (t <= kInterior || t >= 1.0 - kInterior) return false;
  const double dist = ((p0 + s * (p1 - p0)) - (q0 + t * (q1 - q0))).norm();
  return dist < clearance;
}

/// Whether two bars collide; bars sharing a graph node never do.
inline bool segments_intersect(const TrussLayout& g, int bar_a, int bar_b,
                               double clearance = 0.010) {
  const Bar& a = g.bars[static_cast<std::size_t>(bar_a)];
  const Bar& b = g.bars[static_cast<std::size_t>(bar_b)];
  if (a.u == b.u || a.u == b.v || a.v == b.u || a.v == b.v) return false;
  return segments_collide(g.dimension, g.nodes[static_cast<std::size_t>(a.u)].position,
                          g.nodes[static_cast<std::size_t>(a.v)].position,
                          g.nodes[static_cast<std::size_t>(b.u)].position,
                          g.nodes[static_cast<std::size_t>(b.v)].position, clearance);
}

inline bool any_bar_intersection(const TrussLayout& g, double clearance) {
  const int m = static_cast<int>(g.bars.size());
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (segments_intersect(g, i, j, clearance)) return true;
    }
  }
  return false;
}

/// Whether adding `bar` to g as its last element introduces a collision
/// against earlier bars.
inline bool new_bar_intersects(const TrussLayout& g, int new_bar, double clearance) {
  for (int j = 0; j < new_bar; ++j) {
    if (segments_intersect(g, new_bar, j, clearance)) return true;
  }
  return false;
}

/// Whether a bar between u and v would collide with any existing bar.
inline bool bar_would_intersect(const TrussLayout& g, int u, int v, double clearance) {
  const Vec3& p0 = g.nodes[static_cast<std::size_t>(u)].position;
  const Vec3& p1 = g.nodes[static_cast<std::size_t>(v)].position;
  for (const Bar& b : g.bars) {
    if (b.u == u || b.u == v || b.v == u || b.v == v) continue;
    if (segments_collide(g.dimension, p0, p1,
                         g.nodes[static_cast<std::size_t>(b.u)].position,
                         g.nodes[static_cast<std::size_t>(b.v)].position, clearance)) {
      return true;
    }
  }
  return false;
}

/// Maxwell count m + r >= dim * n, a necessary rigidity pre-check.
inline bool maxwell_count_ok(const TrussLayout& g) {
  int reactions = 0;
  for (const NodeSpec& n : g.nodes) {
    if (n.is_support) reactions += g.dimension;
  }
  return static_cast<int>(g.bars.size()) + reactions >=
         g.dimension * static_cast<int>(g.nodes.size());
}

/// Geometry stability g0 without member forces: Maxwell count, positive
/// definite reduced stiffness, and no bar collisions. Independent of the
/// assigned cross-section sizes.
inline bool geometry_stable(const TrussLayout& g, const MaterialSpec& material,
                            double clearance = 0.010) {
  if (!maxwell_count_ok(g)) return false;
  if (any_bar_intersection(g, clearance)) return false;
  return assemble_and_solve(g, material).positive_definite;
}

/// Evaluates every active constraint and classifies the layout. A failed
/// g0 marks the force-dependent checks g3..g6 failed by dependency.
inline ValidityReport check(const TrussLayout& g, const CaseConfig& cfg,
                            const AnalysisResult* precomputed = nullptr) {
  ValidityReport rep;
  for (int c = 0; c < ConstraintBounds::kConstraintCount; ++c) {
    rep.status[static_cast<std::size_t>(c)] =
        cfg.bounds.is_active(c) ? ValidityReport::Status::kPass
                                : ValidityReport::Status::kInactive;
  }
  auto fail = [&rep](int c, double viol) {
    rep.status[static_cast<std::size_t>(c)] = ValidityReport::Status::kFail;
    rep.violation[static_cast<std::size_t>(c)] =
        std::max(rep.violation[static_cast<std::size_t>(c)], viol);
  };
  const ConstraintBounds& b = cfg.bounds;

  AnalysisResult local;
  const AnalysisResult& fea = precomputed ? *precomputed : (local = assemble_and_solve(g, cfg.material), local);

  // g0: Maxwell count, positive definite stiffness, no bar collisions.
  bool stable = true;
  if (!maxwell_count_ok(g)) stable = false;
  if (stable && !fea.positive_definite) stable = false;
  if (stable && any_bar_intersection(g, b.intersection_clearance)) stable = false;
  if (b.is_active(0) && !stable) fail(0, 1.0);

  // g1: every node (hence every bar of a convex domain) inside the box.
  if (b.is_active(1) && b.domain) {
    for (const NodeSpec& n : g.nodes) {
      for (int a = 0; a < g.dimension; ++a) {
        const double below = b.domain->first[a] - n.position[a];
        const double above = n.position[a] - b.domain->second[a];
        if (below > 1e-12 || above > 1e-12) fail(1, std::max(below, above));
      }
    }
  }

  // g2: cross-sectional areas within bounds.
  if (b.is_active(2)) {
    const double slack = 1e-9 * std::max(1.0, b.area_max);
    for (const Bar& bar : g.bars) {
      const double z = section_area(bar.section);
      if (z < b.area_min - slack) fail(2, b.area_min - z);
      if (z > b.area_max + slack) fail(2, z - b.area_max);
    }
  }

  // g7: bar lengths within range.
  if (b.is_active(7)) {
    for (std::size_t i = 0; i < g.bars.size(); ++i) {
      const double l = g.bar_length(static_cast<int>(i));
      if (l < b.length_min - 1e-12) fail(7, b.length_min - l);
      if (l > b.length_max + 1e-12) fail(7, l - b.length_max);
    }
  }

  // Force-dependent checks g3..g6 require a stable structure.
  if (!stable) {
    for (int c : {3, 4, 5, 6}) {
      if (b.is_active(c)) fail(c, 0.0);
    }
  } else {
    if (b.is_active(3)) {
      const double slack = 1e-9 * std::max(1.0, std::abs(b.stress_max));
      for (double s : fea.axial_stress) {
        if (s < b.stress_min - slack) fail(3, b.stress_min - s);
        if (s > b.stress_max + slack) fail(3, s - b.stress_max);
      }
    }
    if (b.is_active(4)) {
      for (const Vec3& d : fea.displacements) {
        const double inf = d.cwiseAbs().maxCoeff();
        if (inf > b.max_displacement * (1.0 + 1e-9)) fail(4, inf - b.max_displacement);
      }
    }
    if (b.is_active(5)) {
      for (std::size_t i = 0; i < g.bars.size(); ++i) {
        if (fea.compressive_stress[i] > fea.buckling_limit[i] * (1.0 + 1e-9)) {
          fail(5, fea.compressive_stress[i] - fea.buckling_limit[i]);
        }
      }
    }
    if (b.is_active(6)) {
      for (std::size_t i = 0; i < g.bars.size(); ++i) {
        double lambda = fea.slenderness[i];
        if (b.slenderness_metric == SlendernessMetric::kOuterDiameter) {
          if (const auto* tube = std::get_if<Tube3D>(&g.bars[i].section)) {
            lambda = g.bar_length(static_cast<int>(i)) / tube->outer_diameter;
          }
        }
        const double limit = fea.axial_stress[i] < 0.0 ? b.slenderness_compression
                                                       : b.slenderness_tension;
        if (lambda > limit * (1.0 + 1e-9)) fail(6, lambda - limit);
      }
    }
  }

  if (rep.failed(0)) {
    rep.classification = Classification::kInvalidStructural;
  } else {
    bool any_fail = false;
    for (int c = 1; c < ConstraintBounds::kConstraintCount; ++c) {
      any_fail = any_fail || rep.failed(c);
    }
    rep.classification = any_fail ? Classification::kInvalidOther : Classification::kValid;
  }
  return rep;
}

}  // namespace trussforge
