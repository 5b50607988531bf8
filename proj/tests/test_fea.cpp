#include <catch2/catch.hpp>

#include "support/oracles.hpp"
#include "trussforge/fea.hpp"
#include "trussforge/model.hpp"
#include "trussforge/rng.hpp"

using namespace trussforge;

namespace {

MaterialSpec steel() {
  MaterialSpec m;
  m.youngs_modulus = 193e9;
  m.density = 8000;
  return m;
}

MaterialSpec aluminium() {
  MaterialSpec m;
  m.youngs_modulus = 68.95e9;
  m.density = 2767.99;
  return m;
}

/// Random well-connected truss with pinned base nodes; dim 2 or 3.
TrussLayout random_truss(Rng& rng, int dim) {
  TrussLayout g;
  g.dimension = dim;
  const int n = 3 + rng.uniform_index(4);  // 3..6
  const int supports = dim;                // enough reactions for stability
  for (int i = 0; i < n; ++i) {
    NodeSpec node;
    for (int a = 0; a < dim; ++a) node.position[a] = rng.uniform(0.0, 4.0);
    node.is_support = i < supports;
    node.is_fixed = node.is_support;
    g.nodes.push_back(node);
  }
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if ((g.nodes[(std::size_t)u].position - g.nodes[(std::size_t)v].position).norm() < 0.05) continue;
      if (rng.uniform() < 0.85) {
        if (dim == 2) {
          g.bars.push_back(Bar{u, v, Flat2D{rng.uniform(1e-4, 5e-3)}, false});
        } else {
          g.bars.push_back(Bar{u, v, Tube3D{rng.uniform(0.02, 0.08), 0.002}, false});
        }
      }
    }
  }
  for (int i = supports; i < n; ++i) {
    NodeSpec& node = g.nodes[static_cast<std::size_t>(i)];
    for (int a = 0; a < dim; ++a) node.load[a] = rng.uniform(-5e4, 5e4);
    node.is_fixed = true;
  }
  return g;
}

}  // namespace

TEST_CASE("zero loads give zero displacements and stresses") {
  Rng rng(5);
  TrussLayout g = random_truss(rng, 2);
  for (auto& n : g.nodes) n.load.setZero();
  const AnalysisResult res = assemble_and_solve(g, aluminium());
  REQUIRE(res.solvable);
  for (const Vec3& d : res.displacements) REQUIRE(d.norm() == 0.0);
  for (double s : res.axial_stress) REQUIRE(s == 0.0);
}

TEST_CASE("axial rod matches the closed form P L / (E A)") {
  const double length = 2.0, area = 4e-4, load = 1.2e4;
  MaterialSpec mat = aluminium();
  TrussLayout g;
  g.dimension = 2;
  NodeSpec base;
  base.is_support = true;
  base.is_fixed = true;
  NodeSpec tip;
  tip.position = Vec3(length, 0, 0);
  tip.load = Vec3(load, 0, 0);
  tip.is_fixed = true;
  g.nodes = {base, tip};
  g.bars = {Bar{0, 1, Flat2D{area}, false}};

  const AnalysisResult res = assemble_and_solve(g, mat);
  REQUIRE(res.solvable);
  // The transverse direction is an unloaded mechanism, so the structure is
  // solvable but not strictly stable.
  REQUIRE_FALSE(res.positive_definite);
  REQUIRE(res.displacements[1].x() ==
          Approx(load * length / (mat.youngs_modulus * area)).epsilon(1e-12));
  REQUIRE(res.displacements[1].y() == 0.0);
  REQUIRE(res.axial_stress[0] == Approx(load / area).epsilon(1e-12));

  SECTION("the energy-minimization oracle returns the same displacements") {
    const auto oracle = oracles::oracle_displacements(g, mat);
    REQUIRE(oracle[1].x() == Approx(res.displacements[1].x()).epsilon(1e-9));
  }
  SECTION("a transverse load on the mechanism direction is unsolvable") {
    g.nodes[1].load = Vec3(0, 100.0, 0);
    const AnalysisResult bad = assemble_and_solve(g, mat);
    REQUIRE_FALSE(bad.solvable);
  }
}

TEST_CASE("symmetric two-bar truss matches hand statics") {
  // Supports at (0,0) and (2,0), apex at (1,1); both bars at 45 degrees.
  // Vertical load -P at the apex: member forces P/sqrt(2) in compression,
  // apex drop sqrt(2) P / (E A).
  const double p_load = 2.0e4, area = 6e-4;
  MaterialSpec mat = aluminium();
  TrussLayout g;
  g.dimension = 2;
  NodeSpec s1, s2, apex;
  s1.is_support = s1.is_fixed = true;
  s2.position = Vec3(2, 0, 0);
  s2.is_support = s2.is_fixed = true;
  apex.position = Vec3(1, 1, 0);
  apex.load = Vec3(0, -p_load, 0);
  apex.is_fixed = true;
  g.nodes = {s1, s2, apex};
  g.bars = {Bar{0, 2, Flat2D{area}, false}, Bar{1, 2, Flat2D{area}, false}};

  const AnalysisResult res = assemble_and_solve(g, mat);
  REQUIRE(res.solvable);
  REQUIRE(res.positive_definite);

  const double member_force = p_load / std::sqrt(2.0);
  REQUIRE(res.axial_stress[0] * area == Approx(-member_force).epsilon(1e-10));
  REQUIRE(res.axial_stress[1] * area == Approx(-member_force).epsilon(1e-10));
  REQUIRE(res.compressive_stress[0] == Approx(member_force / area).epsilon(1e-10));

  const double expected_drop = std::sqrt(2.0) * p_load / (mat.youngs_modulus * area);
  REQUIRE(res.displacements[2].y() == Approx(-expected_drop).epsilon(1e-10));
  REQUIRE(res.displacements[2].x() == Approx(0.0).margin(1e-15));
}

TEST_CASE("self-weight loads") {
  MaterialSpec mat = steel();
  mat.include_self_weight = true;

  SECTION("no bars, no loads") {
    TrussLayout g;
    g.dimension = 3;
    NodeSpec n;
    n.is_support = n.is_fixed = true;
    g.nodes = {n};
    for (const Vec3& w : self_weight_loads(g, mat)) REQUIRE(w.norm() == 0.0);
  }

  SECTION("one bar lumps half its weight to each end") {
    TrussLayout g;
    g.dimension = 3;
    NodeSpec a, b;
    a.is_support = a.is_fixed = true;
    b.position = Vec3(3, 0, 0);
    b.is_support = b.is_fixed = true;
    g.nodes = {a, b};
    g.bars = {Bar{0, 1, Tube3D{0.04, 0.002}, false}};
    const double bar_mass = mass(g, mat.density);
    const auto loads = self_weight_loads(g, mat);
    REQUIRE(loads[0].z() == Approx(-0.5 * bar_mass * mat.gravity).epsilon(1e-12));
    REQUIRE(loads[1].z() == Approx(-0.5 * bar_mass * mat.gravity).epsilon(1e-12));
    REQUIRE(loads[0].x() == 0.0);
  }

  SECTION("total equals weight times gravity, downward") {
    Rng rng(12);
    for (int rep = 0; rep < 10; ++rep) {
      TrussLayout g = random_truss(rng, 2);
      const auto loads = self_weight_loads(g, mat);
      Vec3 total = Vec3::Zero();
      for (const Vec3& w : loads) total += w;
      REQUIRE(total.x() == Approx(0.0).margin(1e-9));
      REQUIRE(total.y() ==
              Approx(-mass(g, mat.density) * mat.gravity).epsilon(1e-9));
    }
  }
}

TEST_CASE("buckling limit") {
  MaterialSpec mat = steel();
  const Tube3D tube{0.040, 0.0015};

  SECTION("d40 t1.5 at 1 m") {
    // I = pi (40^4 - 37^4)/64 = 33666 mm^4, z = 181.43 mm^2.
    const double b = buckling_limit(CrossSection{tube}, 1.0, mat);
    const double inertia = M_PI * (std::pow(0.040, 4) - std::pow(0.037, 4)) / 64.0;
    const double area = section_area(CrossSection{tube});
    REQUIRE(b == Approx(M_PI * M_PI * 193e9 * inertia / area).epsilon(1e-12));
    REQUIRE(b == Approx(353.47e6).epsilon(2.5e-3));
    REQUIRE(b == Approx(354.1e6).epsilon(2.5e-3));
  }
  SECTION("doubling length quarters the limit") {
    const double b1 = buckling_limit(CrossSection{tube}, 1.0, mat);
    const double b2 = buckling_limit(CrossSection{tube}, 2.0, mat);
    REQUIRE(b2 == Approx(b1 / 4).epsilon(1e-12));
  }
  SECTION("planar solid-circle convention gives pi E z / (4 l^2)") {
    const double z = 3.2e-3;
    const double b = buckling_limit(CrossSection{Flat2D{z}}, 1.7, mat);
    REQUIRE(b ==
            Approx(M_PI * mat.youngs_modulus * z / (4.0 * 1.7 * 1.7)).epsilon(1e-12));
  }
}

TEST_CASE("slenderness ratio") {
  SECTION("d25 t1.5 at 1 m is about 120.1") {
    const double lambda = slenderness(CrossSection{Tube3D{0.025, 0.0015}}, 1.0);
    REQUIRE(lambda == Approx(120.114).epsilon(1e-4));
    // Gyration radius about 8.33 mm.
    REQUIRE(1.0 / lambda == Approx(8.3254e-3).epsilon(1e-4));
  }
  SECTION("scales linearly with length") {
    const CrossSection s{Tube3D{0.030, 0.002}};
    REQUIRE(slenderness(s, 3.0) == Approx(3.0 * slenderness(s, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("oracle equivalence, superposition and scaling on random trusses") {
  Rng rng(2024);
  int checked = 0;
  int attempts = 0;
  while (checked < 60 && attempts < 2000) {
    ++attempts;
    const int dim = (attempts % 2 == 0) ? 2 : 3;
    TrussLayout g = random_truss(rng, dim);
    const MaterialSpec mat = dim == 2 ? aluminium() : steel();
    const AnalysisResult res = assemble_and_solve(g, mat);
    if (!res.positive_definite) continue;
    ++checked;

    // Energy-minimization oracle agreement to 1e-6 relative.
    const auto oracle = oracles::oracle_displacements(g, mat);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      num += (oracle[i] - res.displacements[i]).squaredNorm();
      den += res.displacements[i].squaredNorm();
    }
    REQUIRE(std::sqrt(num) <= 1e-6 * std::max(std::sqrt(den), 1e-12));

    // Superposition: split the load vector into two uneven halves.
    TrussLayout g1 = g, g2 = g;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      g1.nodes[i].load = 0.3 * g.nodes[i].load;
      g2.nodes[i].load = 0.7 * g.nodes[i].load;
    }
    const AnalysisResult r1 = assemble_and_solve(g1, mat);
    const AnalysisResult r2 = assemble_and_solve(g2, mat);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const Vec3 sum = r1.displacements[i] + r2.displacements[i];
      REQUIRE((sum - res.displacements[i]).norm() <=
              1e-10 * std::max(1.0, res.displacements[i].norm()));
    }

    // Scaling: loads times s scale displacements and stresses by s.
    const double s = 2.5;
    TrussLayout gs = g;
    for (auto& n : gs.nodes) n.load *= s;
    const AnalysisResult rs = assemble_and_solve(gs, mat);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      REQUIRE((rs.displacements[i] - s * res.displacements[i]).norm() <=
              1e-10 * std::max(1.0, s * res.displacements[i].norm()));
    }
    for (std::size_t i = 0; i < g.bars.size(); ++i) {
      REQUIRE(rs.axial_stress[i] ==
              Approx(s * res.axial_stress[i])
                  .margin(1e-10 * std::abs(s * res.axial_stress[i]) + 1e-12));
      REQUIRE(res.compressive_stress[i] == std::max(0.0, -res.axial_stress[i]));
    }
  }
  REQUIRE(checked == 60);
}
