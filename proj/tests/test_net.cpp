#include <catch2/catch.hpp>

#include "trussforge/net.hpp"
#include "trussforge/rng.hpp"
#include "trussforge/testbeds.hpp"

using namespace trussforge;
using namespace trussforge::rl;

namespace {

/// Planar layout with |V| = 6, |E| = 10 for shape checks.
TrussLayout six_node_layout(const CaseConfig& cfg, Rng& rng) {
  TrussLayout g = cfg.initial_layout();
  while (static_cast<int>(g.nodes.size()) < 6) {
    NodeSpec n;
    n.position = Vec3(rng.uniform(1, 17), rng.uniform(1, 8), 0);
    g.nodes.push_back(n);
  }
  const std::pair<int, int> pairs[] = {{0, 2}, {2, 3}, {1, 4}, {4, 5}, {2, 4},
                                       {3, 5}, {0, 4}, {1, 2}, {2, 5}, {3, 4}};
  for (auto [u, v] : pairs) g.bars.push_back(Bar{u, v, Flat2D{1e-3}, false});
  return g;
}

struct FdStats {
  int total = 0;
  int passed = 0;
  double pass_rate() const { return total == 0 ? 1.0 : double(passed) / total; }
};

/// Central-difference comparison on `samples` random entries of `p`.
template <typename LossFn>
void fd_check(Param& p, LossFn&& loss_fn, Rng& rng, FdStats& stats, int samples = 6) {
  Mat analytic;
  {
    Tape t;
    Var loss = loss_fn(t);
    t.backward(loss);
    p.zero_grad();
    t.apply_param_grads();
    analytic = p.grad;
  }
  for (int s = 0; s < samples; ++s) {
    const Eigen::Index i = rng.uniform_index(static_cast<int>(p.value.rows()));
    const Eigen::Index j = rng.uniform_index(static_cast<int>(p.value.cols()));
    const double h = 1e-6 * std::max(1.0, std::abs(p.value(i, j)));
    const double saved = p.value(i, j);
    p.value(i, j) = saved + h;
    double up;
    {
      Tape t;
      up = loss_fn(t).scalar();
    }
    p.value(i, j) = saved - h;
    double down;
    {
      Tape t;
      down = loss_fn(t).scalar();
    }
    p.value(i, j) = saved;
    const double fd = (up - down) / (2.0 * h);
    const double got = analytic(i, j);
    const double rel = std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1e-3});
    ++stats.total;
    if (rel <= 1e-4) ++stats.passed;
  }
}

}  // namespace

TEST_CASE("observation layout and adjacency") {
  const CaseConfig cfg = load_case("ten-bar-load1", 6);
  Rng rng(3);
  const TrussLayout g = six_node_layout(cfg, rng);
  const ObsScales scales = ObsScales::for_case(cfg);
  const Observation obs =
      build_observation(g, cfg, scales, RefineTarget{TargetKind::kNode, 4});

  REQUIRE(obs.node_feats.rows() == 6);
  REQUIRE(obs.node_feats.cols() == kNodeFeat);
  REQUIRE(obs.bar_feats.rows() == 10);
  REQUIRE(obs.adjacency.rows() == 6);
  REQUIRE(obs.adjacency.cols() == 10);
  for (int j = 0; j < 10; ++j) {
    REQUIRE(obs.adjacency.col(j).sum() == 2.0);  // each bar touches two nodes
    for (int i = 0; i < 6; ++i) {
      const bool endpoint = g.bars[(std::size_t)j].u == i || g.bars[(std::size_t)j].v == i;
      REQUIRE(obs.adjacency(i, j) == (endpoint ? 1.0 : 0.0));
    }
  }
  // Support flags and normalized positions inside [0,1].
  REQUIRE(obs.node_feats(0, 3) == 1.0);
  REQUIRE(obs.node_feats(4, 3) == 0.0);
  REQUIRE(obs.node_feats.leftCols(3).minCoeff() >= 0.0);
  REQUIRE(obs.node_feats.leftCols(3).maxCoeff() <= 1.0);
  // Target one-hot marks a node and copies its row.
  REQUIRE(obs.id_feat(0, 0) == 1.0);
  REQUIRE(obs.id_feat(0, 1) == 0.0);
  REQUIRE(obs.id_feat(0, 2) == obs.node_feats(4, 0));
}

TEST_CASE("encoder sequence length and widths at the published scale") {
  const CaseConfig cfg = load_case("ten-bar-load1", 6);
  Rng rng(5);
  const TrussLayout g = six_node_layout(cfg, rng);
  const ObsScales scales = ObsScales::for_case(cfg);
  const Observation obs =
      build_observation(g, cfg, scales, RefineTarget{TargetKind::kNode, 4});

  NetConfig full;  // width 256, 6+6 layers, embed hidden 128
  Rng init(1);
  Trunk trunk(full, init, "t");
  Tape t;
  Var memory = trunk.encode(t, obs, false);
  REQUIRE(memory.rows() == 16);  // |V| + |E|
  REQUIRE(memory.cols() == 256);

  Var id_tok = trunk.id_embed(t, t.constant(obs.id_feat), false);
  REQUIRE(id_tok.cols() == 256);
  Var h = trunk.decode(t, id_tok, memory, false);
  REQUIRE(h.rows() == 1);
  REQUIRE(h.cols() == 256);
}

TEST_CASE("policy head dimensions follow the payload") {
  Rng init(7);
  PolicyNet planar(NetConfig::desk(), 2, init);
  PolicyNet spatial(NetConfig::desk(), 3, init);

  const CaseConfig cfg2 = load_case("ten-bar-load1", 6);
  Rng rng(9);
  const TrussLayout g2 = six_node_layout(cfg2, rng);
  const ObsScales scales2 = ObsScales::for_case(cfg2);

  Observation move2 = build_observation(g2, cfg2, scales2, RefineTarget{TargetKind::kNode, 4});
  move2.payload = PayloadKind::kMove;
  move2.payload_dims = 2;
  Tape t;
  auto [mean2, log_std2] = planar.forward(t, move2, false);
  REQUIRE(mean2.cols() == 2);
  REQUIRE(log_std2.cols() == 2);

  Observation area = move2;
  area.payload = PayloadKind::kArea;
  area.payload_dims = 1;
  auto [mean1, log_std1] = planar.forward(t, area, false);
  REQUIRE(mean1.cols() == 1);

  // Spatial: node moves take three components, tube changes two.
  const CaseConfig cfg3 = load_case("sundial", 7);
  const ObsScales scales3 = ObsScales::for_case(cfg3);
  TrussLayout g3 = cfg3.initial_layout();
  NodeSpec extra;
  extra.position = Vec3(1, 0, 0);
  g3.nodes.push_back(extra);
  g3.bars.push_back(Bar{0, 4, Tube3D{0.03, 0.0015}, false});
  g3.bars.push_back(Bar{1, 4, Tube3D{0.03, 0.0015}, false});
  Observation move3 = build_observation(g3, cfg3, scales3, RefineTarget{TargetKind::kNode, 4});
  move3.payload = PayloadKind::kMove;
  move3.payload_dims = 3;
  auto [mean3, log_std3] = spatial.forward(t, move3, false);
  REQUIRE(mean3.cols() == 3);

  Observation sec = build_observation(g3, cfg3, scales3, RefineTarget{TargetKind::kBar, 0});
  sec.payload = PayloadKind::kSection;
  sec.payload_dims = 2;
  auto [mean_s, log_std_s] = spatial.forward(t, sec, false);
  REQUIRE(mean_s.cols() == 2);
}

TEST_CASE("sampled actions stay inside the open unit box and log-probs are finite") {
  const CaseConfig cfg = load_case("ten-bar-load1", 6);
  Rng rng(11), init(2);
  const TrussLayout g = six_node_layout(cfg, rng);
  const ObsScales scales = ObsScales::for_case(cfg);
  Observation obs = build_observation(g, cfg, scales, RefineTarget{TargetKind::kNode, 5});
  obs.payload = PayloadKind::kMove;
  obs.payload_dims = 2;

  PolicyNet pi(NetConfig::desk(), 2, init);
  for (int rep = 0; rep < 50; ++rep) {
    Tape t;
    Eigen::VectorXd eps(2);
    eps << rng.normal(), rng.normal();
    const PolicySample s = pi.sample(t, obs, eps, false);
    REQUIRE(s.action.value().cwiseAbs().maxCoeff() < 1.0);
    REQUIRE(std::isfinite(s.log_prob.scalar()));
    // The density helper agrees with the tape computation.
    const double lp = pi.log_prob_of(obs, s.action.value().row(0).transpose());
    REQUIRE(lp == Approx(s.log_prob.scalar()).margin(1e-8));
  }
}

TEST_CASE("squashed density integrates to one over a 1d grid") {
  const CaseConfig cfg = load_case("ten-bar-load1", 6);
  Rng rng(13), init(4);
  const TrussLayout g = six_node_layout(cfg, rng);
  const ObsScales scales = ObsScales::for_case(cfg);
  Observation obs = build_observation(g, cfg, scales, RefineTarget{TargetKind::kBar, 3});
  obs.payload = PayloadKind::kArea;
  obs.payload_dims = 1;

  PolicyNet pi(NetConfig::desk(), 2, init);
  // Integrate p(a) da by substituting a = tanh(u) on a grid covering the
  // pre-squash Gaussian, which stays resolvable even for sharp heads.
  const auto [mean, std_dev] = pi.distribution(obs);
  const double u_lo = mean(0) - 8.5 * std_dev(0);
  const double u_hi = mean(0) + 8.5 * std_dev(0);
  const int grid = 6000;
  const double du = (u_hi - u_lo) / grid;
  double integral = 0.0;
  double prev_f = 0.0;
  for (int i = 0; i <= grid; ++i) {
    const double u = u_lo + i * du;
    const double a = std::tanh(u);
    const double jac = 1.0 - a * a;
    const double f =
        std::exp(pi.log_prob_of(obs, Eigen::VectorXd::Constant(1, a))) * jac;
    if (i > 0) integral += 0.5 * (prev_f + f) * du;
    prev_f = f;
  }
  REQUIRE(integral == Approx(1.0).epsilon(0.02));
}

TEST_CASE("finite differences validate every head and the trunk") {
  const CaseConfig cfg = load_case("ten-bar-load1", 6);
  Rng rng(17), init(6);
  const TrussLayout g = six_node_layout(cfg, rng);
  const ObsScales scales = ObsScales::for_case(cfg);

  NetConfig small;
  small.width = 16;
  small.embed_hidden = 12;
  small.encoder_layers = 1;
  small.decoder_layers = 1;
  small.heads = 2;
  small.ffn_hidden = 16;
  small.head_hidden1 = 16;
  small.head_hidden2 = 16;

  PolicyNet pi(small, 2, init);
  QNet q(small, 2, init, "q");

  Observation move_obs = build_observation(g, cfg, scales, RefineTarget{TargetKind::kNode, 4});
  move_obs.payload = PayloadKind::kMove;
  move_obs.payload_dims = 2;
  Observation area_obs = build_observation(g, cfg, scales, RefineTarget{TargetKind::kBar, 2});
  area_obs.payload = PayloadKind::kArea;
  area_obs.payload_dims = 1;

  Eigen::VectorXd eps2(2), eps1(1), act2(2);
  eps2 << 0.41, -1.2;
  eps1 << 0.77;
  act2 << 0.3, -0.5;
  const double alpha = 0.37;

  // Policy-side loss: alpha * log pi - Q(s, a~) with a frozen critic.
  auto policy_loss = [&](const Observation& obs, const Eigen::VectorXd& eps) {
    return [&, eps](Tape& t) {
      PolicySample s = pi.sample(t, obs, eps, true);
      Var qv = q.forward(t, obs, s.action, false);
      return ad::sub(ad::affine(s.log_prob, alpha, 0.0), qv);
    };
  };
  // Critic-side loss: squared Bellman residual against a constant target.
  auto q_loss = [&](Tape& t) {
    Var qv = q.forward(t, move_obs, act2, true);
    return ad::square(ad::sub(qv, t.constant(Mat::Constant(1, 1, 0.9))));
  };

  FdStats stats;
  for (Param* p : pi.parameters()) {
    fd_check(*p, policy_loss(move_obs, eps2), rng, stats, 3);
  }
  for (Param* p : pi.parameters()) {
    fd_check(*p, policy_loss(area_obs, eps1), rng, stats, 2);
  }
  for (Param* p : q.parameters()) {
    fd_check(*p, q_loss, rng, stats, 3);
  }
  INFO("pass rate " << stats.pass_rate() << " over " << stats.total << " checks");
  REQUIRE(stats.pass_rate() >= 0.95);
}

TEST_CASE("target network copies and soft updates") {
  Rng init(8);
  PolicyNet a(NetConfig::desk(), 2, init);
  PolicyNet b(NetConfig::desk(), 2, init);
  auto pa = a.parameters();
  auto pb = b.parameters();
  REQUIRE(pa.size() == pb.size());

  copy_values(pb, pa);
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pb[i]->value == pa[i]->value);

  // Perturb a, then soft-update b toward it.
  pa[0]->value.array() += 1.0;
  const Mat before = pb[0]->value;
  soft_update(pb, pa, 0.25);
  const Mat expect = 0.75 * before + 0.25 * pa[0]->value;
  REQUIRE((pb[0]->value - expect).norm() == Approx(0.0).margin(1e-12));
}
