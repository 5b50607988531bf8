// Linear-elastic analysis of pin-jointed trusses by the direct stiffness
// method: nodal displacements, member stresses, buckling limits and
// slenderness ratios.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "trussforge/model.hpp"

namespace trussforge {

struct MaterialSpec {
  double youngs_modulus = 0.0;      // Pa
  double density = 0.0;             // kg/m^3
  double gravity = 9.80665;         // m/s^2
  bool include_self_weight = false;
};

struct AnalysisResult {
  /// Equilibrium displacements exist (every load component is carried).
  bool solvable = false;
  /// Reduced stiffness factorized with all pivots strictly positive. A
  /// layout can be solvable yet not positive definite when an unloaded
  /// mechanism direction exists; stability checks use this flag.
  bool positive_definite = false;
  std::vector<Vec3> displacements;          // m, per node; zero at supports
  std::vector<double> axial_stress;         // Pa, positive = tension
  std::vector<double> compressive_stress;   // Pa, max(0, -sigma)
  std::vector<double> buckling_limit;       // Pa
  std::vector<double> slenderness;          // l / sqrt(I/z)

  double max_displacement_inf() const {
    double m = 0.0;
    for (const Vec3& d : displacements) m = std::max(m, d.cwiseAbs().maxCoeff());
    return m;
  }
};

/// Euler buckling stress pi^2*E*I/(z*l^2) for a bar of length l.
inline double buckling_limit(const CrossSection& section, double length,
                             const MaterialSpec& material) {
  const double z = section_area(section);
  const double inertia = section_inertia(section);
  return M_PI * M_PI * material.youngs_modulus * inertia / (z * length * length);
}

/// Slenderness ratio l / sqrt(I/z) with the same inertia convention as the
/// buckling limit.
inline double slenderness(const CrossSection& section, double length) {
  const double z = section_area(section);
  const double inertia = section_inertia(section);
  return length / std::sqrt(inertia / z);
}

/// Per-node gravity loads: each bar lumps half its weight to each endpoint,
/// acting along -y in planar layouts and -z in spatial ones.
inline std::vector<Vec3> self_weight_loads(const TrussLayout& g,
                                           const MaterialSpec& material) {
  std::vector<Vec3> loads(g.nodes.size(), Vec3::Zero());
  const int down_axis = g.dimension == 2 ? 1 : 2;
  for (std::size_t i = 0; i < g.bars.size(); ++i) {
    const Bar& b = g.bars[i];
    const double w = material.density * section_area(b.section) *
                     g.bar_length(static_cast<int>(i)) * material.gravity;
    loads[static_cast<std::size_t>(b.u)][down_axis] -= 0.5 * w;
    loads[static_cast<std::size_t>(b.v)][down_axis] -= 0.5 * w;
  }
  return loads;
}

namespace detail {

/// Symmetric Gaussian elimination with the pivot threshold semantics the
/// validity checks rely on. Assembled truss stiffness is positive
/// semidefinite, so a vanishing pivot marks a mechanism direction: when the
/// reduced load along it is (numerically) zero the direction is pinned to
/// zero displacement, matching the minimum-norm solution of an energy
/// minimizer; when it carries load there is no equilibrium at all.
struct ReducedSolve {
  bool solvable = true;
  bool positive_definite = true;
  Eigen::VectorXd displacement;
};

inline ReducedSolve solve_reduced(Eigen::MatrixXd k, Eigen::VectorXd f) {
  ReducedSolve out;
  const Eigen::Index n = k.rows();
  out.displacement = Eigen::VectorXd::Zero(n);
  if (n == 0) return out;

  const double max_diag = std::max(k.diagonal().maxCoeff(), 0.0);
  const double pivot_tol = 1e-12 * max_diag;
  const double load_scale = std::max(1.0, f.cwiseAbs().maxCoeff());
  std::vector<bool> fixed(static_cast<std::size_t>(n), false);

  if (max_diag <= 0.0) {
    out.positive_definite = false;
    out.solvable = f.cwiseAbs().maxCoeff() <= 1e-9 * load_scale;
    return out;
  }

  for (Eigen::Index j = 0; j < n; ++j) {
    const double pivot = k(j, j);
    if (pivot <= pivot_tol) {
      out.positive_definite = false;
      if (std::abs(f(j)) > 1e-9 * load_scale) {
        out.solvable = false;
        return out;
      }
      fixed[static_cast<std::size_t>(j)] = true;
      k.row(j).setZero();
      k.col(j).setZero();
      f(j) = 0.0;
      continue;
    }
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double factor = k(i, j) / pivot;
      if (factor == 0.0) continue;
      k.row(i).tail(n - j) -= factor * k.row(j).tail(n - j);
      f(i) -= factor * f(j);
    }
  }

  for (Eigen::Index j = n - 1; j >= 0; --j) {
    if (fixed[static_cast<std::size_t>(j)]) continue;
    double s = f(j);
    for (Eigen::Index i = j + 1; i < n; ++i) s -= k(j, i) * out.displacement(i);
    out.displacement(j) = s / k(j, j);
  }
  return out;
}

}  // namespace detail

/// Assembles per-bar axial stiffness EA/L in global coordinates, removes
/// support degrees of freedom, applies external plus (optionally)
/// self-weight loads, and solves for displacements and member stresses.
inline AnalysisResult assemble_and_solve(const TrussLayout& g,
                                         const MaterialSpec& material) {
  const int dim = g.dimension;
  const int n = static_cast<int>(g.nodes.size());
  AnalysisResult res;
  res.displacements.assign(static_cast<std::size_t>(n), Vec3::Zero());

  // Free-DOF numbering: supports pin every component.
  std::vector<int> dof(static_cast<std::size_t>(n) * static_cast<std::size_t>(dim), -1);
  int free_count = 0;
  for (int i = 0; i < n; ++i) {
    if (g.nodes[static_cast<std::size_t>(i)].is_support) continue;
    for (int a = 0; a < dim; ++a) dof[static_cast<std::size_t>(i * dim + a)] = free_count++;
  }

  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(free_count, free_count);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(free_count);

  std::vector<Vec3> loads(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) loads[static_cast<std::size_t>(i)] = g.nodes[static_cast<std::size_t>(i)].load;
  if (material.include_self_weight) {
    const std::vector<Vec3> sw = self_weight_loads(g, material);
    for (int i = 0; i < n; ++i) loads[static_cast<std::size_t>(i)] += sw[static_cast<std::size_t>(i)];
  }
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < dim; ++a) {
      const int d = dof[static_cast<std::size_t>(i * dim + a)];
      if (d >= 0) f(d) = loads[static_cast<std::size_t>(i)][a];
    }
  }

  for (std::size_t bi = 0; bi < g.bars.size(); ++bi) {
    const Bar& b = g.bars[bi];
    const Vec3 delta = g.nodes[static_cast<std::size_t>(b.v)].position -
                       g.nodes[static_cast<std::size_t>(b.u)].position;
    const double length = delta.norm();
    const double ea_l = material.youngs_modulus * section_area(b.section) / length;
    Eigen::VectorXd c(dim);
    for (int a = 0; a < dim; ++a) c(a) = delta[a] / length;
    // 2x2 block pattern [kuu kuv; kvu kvv] with kuu = +EA/L * c c^T.
    const int ends[2] = {b.u, b.v};
    for (int p = 0; p < 2; ++p) {
      for (int q = 0; q < 2; ++q) {
        const double sign = (p == q) ? 1.0 : -1.0;
        for (int a = 0; a < dim; ++a) {
          const int dp = dof[static_cast<std::size_t>(ends[p] * dim + a)];
          if (dp < 0) continue;
          for (int bdim = 0; bdim < dim; ++bdim) {
            const int dq = dof[static_cast<std::size_t>(ends[q] * dim + bdim)];
            if (dq < 0) continue;
            k(dp, dq) += sign * ea_l * c(a) * c(bdim);
          }
        }
      }
    }
  }

  detail::ReducedSolve solved = detail::solve_reduced(std::move(k), std::move(f));
  res.solvable = solved.solvable;
  res.positive_definite = solved.positive_definite;

  if (res.solvable) {
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < dim; ++a) {
        const int d = dof[static_cast<std::size_t>(i * dim + a)];
        if (d >= 0) res.displacements[static_cast<std::size_t>(i)][a] = solved.displacement(d);
      }
    }
  }

  const std::size_t m = g.bars.size();
  res.axial_stress.assign(m, 0.0);
  res.compressive_stress.assign(m, 0.0);
  res.buckling_limit.assign(m, 0.0);
  res.slenderness.assign(m, 0.0);
  for (std::size_t bi = 0; bi < m; ++bi) {
    const Bar& b = g.bars[bi];
    const Vec3 delta = g.nodes[static_cast<std::size_t>(b.v)].position -
                       g.nodes[static_cast<std::size_t>(b.u)].position;
    const double length = delta.norm();
    res.buckling_limit[bi] = buckling_limit(b.section, length, material);
    res.slenderness[bi] = slenderness(b.section, length);
    if (!res.solvable) continue;
    const Vec3 unit = delta / length;
    const Vec3 rel = res.displacements[static_cast<std::size_t>(b.v)] -
                     res.displacements[static_cast<std::size_t>(b.u)];
    const double elongation = rel.dot(unit);
    res.axial_stress[bi] = material.youngs_modulus / length * elongation;
    res.compressive_stress[bi] = std::max(0.0, -res.axial_stress[bi]);
  }
  return res;
}

}  // namespace trussforge
