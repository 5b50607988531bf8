// Refinement stage: an MDP over valid layouts plus a soft actor-critic
// trainer with twin critics, target networks and a learned temperature.
#pragma once

#include <atomic>
#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "trussforge/case_config.hpp"
#include "trussforge/diverse.hpp"
#include "trussforge/model.hpp"
#include "trussforge/net.hpp"
#include "trussforge/rng.hpp"
#include "trussforge/validity.hpp"

namespace trussforge::rl {

struct RefineParams {
  long steps = 0;            // environment-step budget
  int episode_len = 20;      // actions per episode
  int max_invalid = 5;       // invalid layouts tolerated per episode (0 = none)
  bool no_diverse = false;   // episodes start only from the global lightest list
  double gamma = 0.99;
  double tau = 0.005;
  double lr = 3e-4;
  double alpha_init = 1.0;
  double kappa = 0.0;  // 0 = case default
  int batch = 256;
  int update_every = 1;
  int jobs = 1;
  std::uint64_t seed = 0;
  NetConfig net;

  double kappa_for(const CaseConfig& cfg) const {
    return kappa > 0.0 ? kappa : cfg.kappa();
  }
};

/// Refinement reward: heavy penalty for breaking stability, light penalty
/// for other violations, mass-improvement bonus otherwise.
inline double refine_reward(Classification c, double mass_before, double mass_after,
                            double kappa) {
  switch (c) {
    case Classification::kInvalidStructural: return -50.0;
    case Classification::kInvalidOther: return -10.0;
    case Classification::kValid:
      return kappa / (mass_after * mass_after) - kappa / (mass_before * mass_before);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

struct StepResult {
  double reward = 0.0;
  bool done = false;
  Classification classification = Classification::kInvalidOther;
  double mass = 0.0;  // mass of the episode's current layout after the step
  ValidityReport report;
};

class RefineEnv {
 public:
  RefineEnv(const CaseConfig& cfg, DiverseSet* diverse, const RefineParams& params)
      : cfg_(&cfg),
        diverse_(diverse),
        params_(params),
        scales_(ObsScales::for_case(cfg)),
        kappa_(params.kappa_for(cfg)) {}

  /// Pool picked by the latest reset; used by distribution tests.
  enum class ResetPool { kDiverse, kTrainingBest };

  /// Starts an episode from the diverse store or, with probability one
  /// half, from the lightest layouts found during training (when any).
  /// With no_diverse only the global lightest list is used.
  ResetPool reset(Rng& rng) {
    const ScoredLayout* start = nullptr;
    ResetPool pool = ResetPool::kDiverse;
    if (params_.no_diverse) {
      const auto& lightest = diverse_->lightest();
      start = &lightest[static_cast<std::size_t>(
          rng.uniform_index(static_cast<int>(lightest.size())))];
      pool = ResetPool::kTrainingBest;
    } else {
      const bool use_diverse = rng.bernoulli(0.5);
      if (use_diverse || training_best_.empty()) {
        const auto all = diverse_->all();
        start = all[static_cast<std::size_t>(
            rng.uniform_index(static_cast<int>(all.size())))];
        pool = ResetPool::kDiverse;
      } else {
        start = &training_best_[static_cast<std::size_t>(
            rng.uniform_index(static_cast<int>(training_best_.size())))];
        pool = ResetPool::kTrainingBest;
      }
    }
    current_ = start->layout;
    current_mass_ = start->mass;
    steps_ = 0;
    invalids_ = 0;
    done_ = false;
    draw_target(rng);
    return pool;
  }

  const TrussLayout& layout() const { return current_; }
  double current_mass() const { return current_mass_; }
  const RefineTarget& pending_target() const { return target_; }
  bool done() const { return done_; }
  int steps_taken() const { return steps_; }
  int invalid_count() const { return invalids_; }

  Observation observation() const {
    return make_observation(current_, target_);
  }

  Observation make_observation(const TrussLayout& g, const RefineTarget& t) const {
    Observation obs = build_observation(g, *cfg_, scales_, t);
    fill_action_box(g, t, &obs);
    return obs;
  }

  /// Applies a normalized action in (-1,1)^k to the pending target, runs the
  /// analysis and constraint checks, and advances the episode. Invalid
  /// results revert the layout and count toward the invalid cap.
  StepResult step(const Eigen::VectorXd& action_norm, Rng& rng) {
    StepResult out;
    TrussLayout candidate = current_;
    const bool applied = apply_action(&candidate, target_, action_norm);

    double new_mass = current_mass_;
    if (applied) {
      out.report = check(candidate, *cfg_);
      out.classification = out.report.classification;
      new_mass = mass(candidate, cfg_->material.density);
    } else {
      // Unreachable tube request: counts as a non-structural violation.
      out.classification = Classification::kInvalidOther;
    }
    out.reward = refine_reward(out.classification, current_mass_, new_mass, kappa_);

    steps_ += 1;
    if (out.classification == Classification::kValid) {
      current_ = std::move(candidate);
      current_mass_ = new_mass;
      diverse_->offer(current_, current_mass_);
      insert_sorted(training_best_, current_, current_mass_,
                    DiverseSet::kGlobalCapacity);
    } else {
      invalids_ += 1;
    }
    out.mass = current_mass_;

    const int invalid_cap = std::max(1, params_.max_invalid);
    done_ = steps_ >= params_.episode_len ||
            (invalids_ > 0 && invalids_ >= invalid_cap);
    out.done = done_;
    if (!done_) draw_target(rng);
    return out;
  }

  const std::vector<ScoredLayout>& training_best() const { return training_best_; }

  /// Pre-populates the training-best pool (reset-distribution tests).
  void seed_training_best(const TrussLayout& g, double mass_kg) {
    insert_sorted(training_best_, g, mass_kg, DiverseSet::kGlobalCapacity);
  }

  /// Physical action box for a target on a given layout.
  void fill_action_box(const TrussLayout& g, const RefineTarget& t,
                       Observation* obs) const {
    if (t.kind == TargetKind::kNode) {
      obs->payload = PayloadKind::kMove;
      obs->payload_dims = cfg_->dimension;
      obs->box_lo = Eigen::VectorXd::Constant(cfg_->dimension, -0.5);
      obs->box_hi = Eigen::VectorXd::Constant(cfg_->dimension, 0.5);
      return;
    }
    const Bar& bar = g.bars[static_cast<std::size_t>(t.index)];
    if (cfg_->dimension == 2) {
      obs->payload = PayloadKind::kArea;
      obs->payload_dims = 1;
      const double z = section_area(bar.section);
      obs->box_lo = Eigen::VectorXd::Constant(1, cfg_->bounds.area_min - z);
      obs->box_hi = Eigen::VectorXd::Constant(1, cfg_->bounds.area_max - z);
    } else {
      obs->payload = PayloadKind::kSection;
      obs->payload_dims = 2;
      const auto& tube = std::get<Tube3D>(bar.section);
      const auto& entries = cfg_->catalog.entries;
      double d_lo = entries.front().outer_diameter, d_hi = d_lo;
      double t_lo = entries.front().thickness, t_hi = t_lo;
      for (const auto& e : entries) {
        d_lo = std::min(d_lo, e.outer_diameter);
        d_hi = std::max(d_hi, e.outer_diameter);
        t_lo = std::min(t_lo, e.thickness);
        t_hi = std::max(t_hi, e.thickness);
      }
      obs->box_lo = Eigen::VectorXd(2);
      obs->box_hi = Eigen::VectorXd(2);
      obs->box_lo << d_lo - tube.outer_diameter, t_lo - tube.thickness;
      obs->box_hi << d_hi - tube.outer_diameter, t_hi - tube.thickness;
    }
  }

  /// Maps a normalized action onto the target: node moves inside the half
  /// metre box, area deltas inside the legal range, tube changes rounded up
  /// to the smallest dominating catalog entry. The mapping is identity at
  /// zero: each delta scales toward the nearer box edge by sign, so the box
  /// [lo, hi] is covered while a = 0 leaves the target unchanged. Returns
  /// false when no catalog entry dominates the requested tube size.
  bool apply_action(TrussLayout* g, const RefineTarget& t,
                    const Eigen::VectorXd& action_norm) const {
    Observation box;
    fill_action_box(*g, t, &box);
    Eigen::VectorXd physical(action_norm.size());
    for (Eigen::Index i = 0; i < action_norm.size(); ++i) {
      const double a = std::clamp(action_norm(i), -1.0, 1.0);
      physical(i) = a < 0.0 ? -a * box.box_lo(i) : a * box.box_hi(i);
    }
    if (t.kind == TargetKind::kNode) {
      NodeSpec& node = g->nodes[static_cast<std::size_t>(t.index)];
      for (int a = 0; a < cfg_->dimension; ++a) {
        node.position[a] += std::clamp(physical(a), -0.5, 0.5);
      }
      return true;
    }
    Bar& bar = g->bars[static_cast<std::size_t>(t.index)];
    if (cfg_->dimension == 2) {
      auto& flat = std::get<Flat2D>(bar.section);
      flat.area = std::clamp(flat.area + physical(0), cfg_->bounds.area_min,
                             cfg_->bounds.area_max);
      return true;
    }
    const auto& tube = std::get<Tube3D>(bar.section);
    const double d_req = tube.outer_diameter + physical(0);
    const double t_req = tube.thickness + physical(1);
    const auto entry = cfg_->catalog.round_up(d_req, t_req);
    if (!entry) return false;
    bar.section = cfg_->catalog.section(*entry);
    return true;
  }

 private:
  void draw_target(Rng& rng) {
    std::vector<RefineTarget> eligible;
    for (std::size_t i = 0; i < current_.nodes.size(); ++i) {
      if (!current_.nodes[i].is_fixed) {
        eligible.push_back(RefineTarget{TargetKind::kNode, static_cast<int>(i)});
      }
    }
    for (std::size_t i = 0; i < current_.bars.size(); ++i) {
      if (!current_.bars[i].is_fixed) {
        eligible.push_back(RefineTarget{TargetKind::kBar, static_cast<int>(i)});
      }
    }
    target_ = eligible[static_cast<std::size_t>(
        rng.uniform_index(static_cast<int>(eligible.size())))];
  }

  const CaseConfig* cfg_;
  DiverseSet* diverse_;
  RefineParams params_;
  ObsScales scales_;
  double kappa_ = 0.0;
  TrussLayout current_;
  double current_mass_ = 0.0;
  RefineTarget target_;
  int steps_ = 0;
  int invalids_ = 0;
  bool done_ = true;
  std::vector<ScoredLayout> training_best_;
};

// ---------------------------------------------------------------------------
// Replay buffer
// ---------------------------------------------------------------------------

struct Transition {
  TrussLayout state;
  RefineTarget state_target;
  Eigen::VectorXd action;  // normalized
  double reward = 0.0;
  TrussLayout next_state;
  RefineTarget next_target;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1'000'000) : capacity_(capacity) {}

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

// ---------------------------------------------------------------------------
// SAC trainer
// ---------------------------------------------------------------------------

struct UpdateDiagnostics {
  double q_loss = 0.0;
  double policy_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double mean_entropy = 0.0;
  // Per-sample values from the latest update, for invariants and tests.
  std::vector<double> targets, target_q1, target_q2, rewards, next_log_pi;
  std::vector<bool> dones;
};

class SacTrainer {
 public:
  SacTrainer(const CaseConfig& cfg, const RefineParams& params, Rng& init_rng)
      : params_(params),
        policy_(params.net, cfg.dimension, init_rng),
        q1_(params.net, cfg.dimension, init_rng, "q1"),
        q2_(params.net, cfg.dimension, init_rng, "q2"),
        q1_target_(params.net, cfg.dimension, init_rng, "q1t"),
        q2_target_(params.net, cfg.dimension, init_rng, "q2t"),
        log_alpha_(1, 1, "log_alpha"),
        policy_opt_(params.lr),
        q_opt_(params.lr),
        alpha_opt_(params.lr) {
    copy_values(q1_target_.parameters(), q1_.parameters());
    copy_values(q2_target_.parameters(), q2_.parameters());
    log_alpha_.value(0, 0) = std::log(params.alpha_init);
    q_params_ = q1_.parameters();
    for (Param* p : q2_.parameters()) q_params_.push_back(p);
  }

  PolicyNet& policy() { return policy_; }
  QNet& q1() { return q1_; }
  QNet& q2() { return q2_; }
  double alpha() const { return std::exp(log_alpha_.value(0, 0)); }

  /// Samples an action for acting; no gradients are recorded.
  Eigen::VectorXd act(const Observation& obs, Rng& rng) {
    Tape tape;
    Eigen::VectorXd eps(obs.payload_dims);
    for (int i = 0; i < obs.payload_dims; ++i) eps(i) = rng.normal();
    PolicySample s = policy_.sample(tape, obs, eps, /*trainable=*/false);
    return s.action.value().row(0).transpose();
  }

  /// One gradient update on a uniformly sampled batch. No-op while the
  /// buffer holds fewer than `batch` transitions.
  std::optional<UpdateDiagnostics> update(const ReplayBuffer& buffer,
                                          const RefineEnv& env, Rng& rng) {
    const int batch = params_.batch;
    if (static_cast<int>(buffer.size()) < batch || batch < 1) return std::nullopt;

    struct SampleDraw {
      std::size_t index;
      Eigen::VectorXd eps_next, eps_cur;
    };
    std::vector<SampleDraw> draws;
    draws.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      SampleDraw d;
      d.index = static_cast<std::size_t>(
          rng.uniform_index(static_cast<int>(buffer.size())));
      const Transition& tr = buffer[d.index];
      const int k_next = action_dims(tr.next_state, tr.next_target);
      const int k_cur = static_cast<int>(tr.action.size());
      d.eps_next.resize(k_next);
      for (int i = 0; i < k_next; ++i) d.eps_next(i) = rng.normal();
      d.eps_cur.resize(k_cur);
      for (int i = 0; i < k_cur; ++i) d.eps_cur(i) = rng.normal();
      draws.push_back(std::move(d));
    }

    const double alpha_now = alpha();
    UpdateDiagnostics diag;
    diag.alpha = alpha_now;
    diag.targets.resize(static_cast<std::size_t>(batch));
    diag.target_q1.resize(static_cast<std::size_t>(batch));
    diag.target_q2.resize(static_cast<std::size_t>(batch));
    diag.rewards.resize(static_cast<std::size_t>(batch));
    diag.next_log_pi.resize(static_cast<std::size_t>(batch));
    diag.dones.resize(static_cast<std::size_t>(batch));

    struct SampleGrads {
      std::map<Param*, Mat> q_grads, pi_grads;
      double q_loss = 0.0, pi_loss = 0.0, log_pi = 0.0, entropy_target = 0.0;
      double y = 0.0, q1t = 0.0, q2t = 0.0, next_log_pi = 0.0;
    };
    std::vector<SampleGrads> grads(static_cast<std::size_t>(batch));

    const int jobs = std::max(1, params_.jobs);
    auto worker = [&](int begin, int end) {
      for (int b = begin; b < end; ++b) {
        const SampleDraw& d = draws[static_cast<std::size_t>(b)];
        const Transition& tr = buffer[d.index];
        SampleGrads& sg = grads[static_cast<std::size_t>(b)];

        const Observation obs = env.make_observation(tr.state, tr.state_target);
        const Observation obs_next = env.make_observation(tr.next_state, tr.next_target);

        // Bellman target from the twin target critics and fresh next action.
        double y = tr.reward;
        {
          Tape t;
          PolicySample next = policy_.sample(t, obs_next, d.eps_next, false);
          const double q1n = q1_target_.forward(t, obs_next, next.action, false).scalar();
          const double q2n = q2_target_.forward(t, obs_next, next.action, false).scalar();
          sg.q1t = q1n;
          sg.q2t = q2n;
          sg.next_log_pi = next.log_prob.scalar();
          if (!tr.done) {
            y += params_.gamma * (std::min(q1n, q2n) - alpha_now * sg.next_log_pi);
          }
          sg.y = y;
        }

        // Critic loss (q1(s,a) - y)^2 + (q2(s,a) - y)^2.
        {
          Tape t;
          Var q1v = q1_.forward(t, obs, tr.action, true);
          Var q2v = q2_.forward(t, obs, tr.action, true);
          Var target = t.constant(Mat::Constant(1, 1, y));
          Var loss = ad::add(ad::square(ad::sub(q1v, target)),
                             ad::square(ad::sub(q2v, target)));
          sg.q_loss = loss.scalar();
          t.backward(loss);
          sg.q_grads = t.param_grads();
        }

        // Actor loss alpha * log pi - min(q1, q2) with frozen critics.
        {
          Tape t;
          PolicySample cur = policy_.sample(t, obs, d.eps_cur, true);
          Var q1v = q1_.forward(t, obs, cur.action, false);
          Var q2v = q2_.forward(t, obs, cur.action, false);
          Var loss = ad::sub(ad::affine(cur.log_prob, alpha_now, 0.0),
                             ad::minimum(q1v, q2v));
          sg.pi_loss = loss.scalar();
          sg.log_pi = cur.log_prob.scalar();
          sg.entropy_target = -static_cast<double>(cur.action.cols());
          t.backward(loss);
          sg.pi_grads = t.param_grads();
        }
      }
    };

    if (jobs == 1) {
      worker(0, batch);
    } else {
      std::vector<std::thread> pool;
      const int chunk = (batch + jobs - 1) / jobs;
      for (int j = 0; j < jobs; ++j) {
        const int begin = j * chunk;
        const int end = std::min(batch, begin + chunk);
        if (begin < end) pool.emplace_back(worker, begin, end);
      }
      for (auto& th : pool) th.join();
    }

    // Fixed-order reduction keeps updates deterministic for a given job count.
    const double inv_batch = 1.0 / static_cast<double>(batch);
    zero_grads(q_params_);
    zero_grads(policy_params());
    log_alpha_.zero_grad();
    double alpha_loss = 0.0;
    for (int b = 0; b < batch; ++b) {
      SampleGrads& sg = grads[static_cast<std::size_t>(b)];
      for (auto& [p, g] : sg.q_grads) p->grad += inv_batch * g;
      for (auto& [p, g] : sg.pi_grads) p->grad += inv_batch * g;
      diag.q_loss += inv_batch * sg.q_loss;
      diag.policy_loss += inv_batch * sg.pi_loss;
      diag.mean_entropy += inv_batch * -sg.log_pi;
      // d/d(log alpha) of -log_alpha * (log_pi + target_entropy).
      log_alpha_.grad(0, 0) += inv_batch * -(sg.log_pi + sg.entropy_target);
      alpha_loss += inv_batch * -log_alpha_.value(0, 0) *
                    (sg.log_pi + sg.entropy_target);
      diag.targets[static_cast<std::size_t>(b)] = sg.y;
      diag.target_q1[static_cast<std::size_t>(b)] = sg.q1t;
      diag.target_q2[static_cast<std::size_t>(b)] = sg.q2t;
      diag.rewards[static_cast<std::size_t>(b)] = buffer[draws[static_cast<std::size_t>(b)].index].reward;
      diag.next_log_pi[static_cast<std::size_t>(b)] = sg.next_log_pi;
      diag.dones[static_cast<std::size_t>(b)] = buffer[draws[static_cast<std::size_t>(b)].index].done;
    }
    diag.alpha_loss = alpha_loss;

    q_opt_.step(q_params_);
    policy_opt_.step(policy_params());
    alpha_opt_.step({&log_alpha_});
    soft_update(q1_target_.parameters(), q1_.parameters(), params_.tau);
    soft_update(q2_target_.parameters(), q2_.parameters(), params_.tau);
    return diag;
  }

  std::vector<Param*> policy_params() { return policy_.parameters(); }

  int action_dims(const TrussLayout& g, const RefineTarget& t) const {
    (void)g;
    if (t.kind == TargetKind::kNode) return policy_.dimension();
    return policy_.dimension() == 2 ? 1 : 2;
  }

  Param& log_alpha() { return log_alpha_; }

 private:
  RefineParams params_;
  PolicyNet policy_;
  QNet q1_, q2_, q1_target_, q2_target_;
  Param log_alpha_;
  ad::Adam policy_opt_, q_opt_, alpha_opt_;
  std::vector<Param*> q_params_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct RefineLogRecord {
  long step = 0;
  double episode_return = 0.0;
  double best_mass = 0.0;
  double alpha = 0.0;
  double q_loss = 0.0;
  double policy_loss = 0.0;

  json to_json() const {
    return json{{"step", step},
                {"episode_return", episode_return},
                {"best_mass", best_mass},
                {"alpha", alpha},
                {"q_loss", q_loss},
                {"policy_loss", policy_loss}};
  }
};

struct RefineResult {
  DiverseSet diverse;
  long steps = 0;
  std::vector<double> best_mass_trace;  // after every environment step
  std::vector<RefineLogRecord> log;
};

using RefineLogFn = std::function<void(const RefineLogRecord&)>;

/// Runs reset/rollout/update cycles for the step budget, maintaining the
/// diverse store and the training-best pool, and returns the refined store
/// (whose global best is the overall output).
inline RefineResult run_refinement(DiverseSet diverse, const CaseConfig& cfg,
                                   const RefineParams& params, Rng& rng,
                                   const RefineLogFn& log_fn = nullptr) {
  RefineResult result;
  if (diverse.empty()) throw std::invalid_argument("nothing to refine: empty layout store");
  if (params.steps <= 0) {
    result.diverse = std::move(diverse);
    return result;
  }

  Rng init_rng = rng.split(1);
  Rng env_rng = rng.split(2);
  Rng train_rng = rng.split(3);

  SacTrainer trainer(cfg, params, init_rng);
  RefineEnv env(cfg, &diverse, params);
  ReplayBuffer buffer;

  long step = 0;
  while (step < params.steps) {
    env.reset(env_rng);
    double episode_return = 0.0;
    UpdateDiagnostics last_diag;
    last_diag.alpha = trainer.alpha();
    while (!env.done() && step < params.steps) {
      const Observation obs = env.observation();
      const Eigen::VectorXd action = trainer.act(obs, env_rng);
      const TrussLayout before = env.layout();
      const RefineTarget target = env.pending_target();
      const StepResult sr = env.step(action, env_rng);
      ++step;

      Transition tr;
      tr.state = before;
      tr.state_target = target;
      tr.action = action;
      tr.reward = sr.reward;
      tr.next_state = env.layout();
      tr.next_target = env.done() ? target : env.pending_target();
      tr.done = sr.done;
      buffer.push(std::move(tr));

      episode_return += sr.reward;
      if (params.update_every > 0 && step % params.update_every == 0) {
        if (auto diag = trainer.update(buffer, env, train_rng)) last_diag = *diag;
      }
      const auto best = diverse.best();
      result.best_mass_trace.push_back(best ? best->mass : 0.0);
    }
    RefineLogRecord rec;
    rec.step = step;
    rec.episode_return = episode_return;
    rec.best_mass = diverse.best() ? diverse.best()->mass : 0.0;
    rec.alpha = trainer.alpha();
    rec.q_loss = last_diag.q_loss;
    rec.policy_loss = last_diag.policy_loss;
    result.log.push_back(rec);
    if (log_fn) log_fn(rec);
  }
  result.steps = step;
  result.diverse = std::move(diverse);
  return result;
}

}  // namespace trussforge::rl
