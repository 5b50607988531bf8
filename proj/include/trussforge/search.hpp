// Search stage: continuous-action UCT that grows layouts from scratch in
// three phases (node adding, bar adding, area tuning) with sampled action
// selection, kernel-regression value smoothing, progressive widening and a
// diverse valid-layout store.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "trussforge/case_config.hpp"
#include "trussforge/diverse.hpp"
#include "trussforge/model.hpp"
#include "trussforge/rng.hpp"
#include "trussforge/validity.hpp"

namespace trussforge::uct {

enum class Phase { kAddNodes, kAddBars, kTuneAreas, kTerminal };

struct SearchParams {
  double beta = 0.3;              // exploration mix between mean and best value
  double ucb_c = 30.0;            // UCB exploration coefficient
  double kappa = 0.0;             // reward scale; 0 = take the case default
  int action_samples = 25;        // candidate draws per decision
  double kernel_bandwidth = 0.1;  // in normalized action units
  double widening_coeff = 1.0;    // children <= floor(coeff * sqrt(n+1))
  int bar_cap_factor = 3;         // bar budget = factor * node budget
  long budget = 0;                // iterations
  std::uint64_t seed = 0;
  long progress_every = 0;        // 0 = no progress callbacks

  double kappa_for(const CaseConfig& cfg) const {
    return kappa > 0.0 ? kappa : cfg.kappa();
  }
};

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

struct AddNode {
  Vec3 position = Vec3::Zero();
};
struct AddBar {
  int u = -1;
  int v = -1;
  CrossSection section;
};
struct SetSection {
  CrossSection section;
};
using Action = std::variant<AddNode, AddBar, SetSection>;

inline bool actions_identical(const Action& a, const Action& b) {
  if (a.index() != b.index()) return false;
  if (const auto* an = std::get_if<AddNode>(&a)) {
    return an->position == std::get<AddNode>(b).position;
  }
  if (const auto* ab = std::get_if<AddBar>(&a)) {
    const auto& bb = std::get<AddBar>(b);
    return ab->u == bb.u && ab->v == bb.v &&
           section_area(ab->section) == section_area(bb.section);
  }
  return section_area(std::get<SetSection>(a).section) ==
         section_area(std::get<SetSection>(b).section);
}

/// Distance between actions in a normalized metric space: node positions by
/// domain-scaled Euclidean distance, sections by normalized area difference,
/// bar actions comparable only within the same node pair.
struct ActionMetric {
  Vec3 box_lo = Vec3::Zero();
  Vec3 box_extent = Vec3::Ones();
  double area_lo = 0.0;
  double area_extent = 1.0;
  int dimension = 2;

  static ActionMetric for_case(const CaseConfig& cfg) {
    ActionMetric m;
    m.dimension = cfg.dimension;
    m.box_lo = cfg.node_proposal_box.first;
    m.box_extent = (cfg.node_proposal_box.second - cfg.node_proposal_box.first)
                       .cwiseMax(1e-12);
    m.area_lo = cfg.bounds.area_min;
    m.area_extent = std::max(cfg.bounds.area_max - cfg.bounds.area_min, 1e-12);
    return m;
  }

  double normalized_area(const CrossSection& s) const {
    return (section_area(s) - area_lo) / area_extent;
  }

  double distance(const Action& a, const Action& b) const {
    constexpr double kFar = std::numeric_limits<double>::infinity();
    if (a.index() != b.index()) return kFar;
    if (const auto* an = std::get_if<AddNode>(&a)) {
      const auto& bn = std::get<AddNode>(b);
      double d2 = 0.0;
      for (int axis = 0; axis < dimension; ++axis) {
        const double delta = (an->position[axis] - bn.position[axis]) / box_extent[axis];
        d2 += delta * delta;
      }
      return std::sqrt(d2);
    }
    if (const auto* ab = std::get_if<AddBar>(&a)) {
      const auto& bb = std::get<AddBar>(b);
      if (ab->u != bb.u || ab->v != bb.v) return kFar;
      return std::abs(normalized_area(ab->section) - normalized_area(bb.section));
    }
    return std::abs(normalized_area(std::get<SetSection>(a).section) -
                    normalized_area(std::get<SetSection>(b).section));
  }
};

// ---------------------------------------------------------------------------
// States and tree
// ---------------------------------------------------------------------------

struct SearchState {
  TrussLayout layout;
  Phase phase = Phase::kAddNodes;
  int cursor = 0;  // next bar whose section gets tuned
  bool has_intersection = false;

  bool terminal() const { return phase == Phase::kTerminal; }
};

struct ChildStats {
  long n = 0;
  double w_mean = 0.0;
  double w_best = 0.0;
};

struct TreeNode {
  struct Edge {
    Action action;
    ChildStats stats;
    std::unique_ptr<TreeNode> child;
  };
  SearchState state;
  long n = 1;  // visit count, including the creation visit
  std::vector<Edge> children;
};

// ---------------------------------------------------------------------------
// Value arithmetic
// ---------------------------------------------------------------------------

/// Q(s,a) = beta * W_mean + (1 - beta) * W_best.
inline double node_value(const ChildStats& stats, double beta) {
  return beta * stats.w_mean + (1.0 - beta) * stats.w_best;
}

/// Upper confidence bound Q + c * sqrt(ln n(s) / n(s,a)).
inline double ucb_value(double q, double n_state, double n_action, double c) {
  return q + c * std::sqrt(std::log(n_state) / n_action);
}

struct KrEstimate {
  double q = 0.0;
  double n = 0.0;
};

/// Gaussian-kernel regression over the expanded actions:
///   Q^ = sum_i K_i n_i Q_i / sum_i K_i n_i,  n^ = sum_i K_i n_i / sum_i K_i.
/// Vanishing total weight falls back to the nearest expanded action.
template <typename ChildRange>
KrEstimate kr_estimate(const Action& query, const ChildRange& children,
                       const ActionMetric& metric, double bandwidth, double beta) {
  double wq_sum = 0.0, wn_sum = 0.0, k_sum = 0.0;
  double nearest_dist = std::numeric_limits<double>::infinity();
  const typename ChildRange::value_type* nearest = nullptr;
  for (const auto& edge : children) {
    const double d = metric.distance(query, edge.action);
    if (d < nearest_dist) {
      nearest_dist = d;
      nearest = &edge;
    }
    if (!std::isfinite(d)) continue;
    const double k = std::exp(-d * d / (2.0 * bandwidth * bandwidth));
    const double n = static_cast<double>(edge.stats.n);
    k_sum += k;
    wn_sum += k * n;
    wq_sum += k * n * node_value(edge.stats, beta);
  }
  if (wn_sum > 1e-300 && k_sum > 1e-300) {
    return KrEstimate{wq_sum / wn_sum, wn_sum / k_sum};
  }
  if (nearest != nullptr) {
    return KrEstimate{node_value(nearest->stats, beta),
                      static_cast<double>(nearest->stats.n)};
  }
  return KrEstimate{0.0, 1.0};
}

// ---------------------------------------------------------------------------
// Phase action spaces and state transitions
// ---------------------------------------------------------------------------

constexpr double kMinBarLength = 1e-6;  // m, guards degenerate stiffness

/// Unconnected node pairs that could still lead to a stable layout. Pairs
/// whose segment would collide with an existing bar are excluded: a
/// collision never heals, so the stability target of the bar-adding phase
/// would be unreachable from then on.
inline std::vector<std::pair<int, int>> feasible_pairs(const TrussLayout& g,
                                                       double clearance) {
  std::vector<std::pair<int, int>> pairs;
  const int n = static_cast<int>(g.nodes.size());
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (g.has_bar(u, v)) continue;
      if ((g.nodes[static_cast<std::size_t>(u)].position -
           g.nodes[static_cast<std::size_t>(v)].position)
              .norm() < kMinBarLength) {
        continue;
      }
      if (bar_would_intersect(g, u, v, clearance)) continue;
      pairs.emplace_back(u, v);
    }
  }
  return pairs;
}

inline bool bar_phase_done(const SearchState& s, const CaseConfig& cfg,
                           const SearchParams& params) {
  const int cap = params.bar_cap_factor * cfg.max_nodes;
  if (static_cast<int>(s.layout.bars.size()) >= cap) return true;
  if (feasible_pairs(s.layout, cfg.bounds.intersection_clearance).empty()) return true;
  if (s.has_intersection) return false;
  return maxwell_count_ok(s.layout) &&
         assemble_and_solve(s.layout, cfg.material).positive_definite;
}

/// Advances the phase marker until the state has a live decision to make.
inline void normalize_phase(SearchState& s, const CaseConfig& cfg,
                            const SearchParams& params) {
  for (;;) {
    switch (s.phase) {
      case Phase::kAddNodes:
        if (static_cast<int>(s.layout.nodes.size()) < cfg.max_nodes) return;
        s.phase = Phase::kAddBars;
        break;
      case Phase::kAddBars:
        if (!bar_phase_done(s, cfg, params)) return;
        s.phase = Phase::kTuneAreas;
        s.cursor = 0;
        break;
      case Phase::kTuneAreas:
        if (s.cursor < static_cast<int>(s.layout.bars.size())) return;
        s.phase = Phase::kTerminal;
        break;
      case Phase::kTerminal:
        return;
    }
  }
}

inline SearchState initial_state(const CaseConfig& cfg, const SearchParams& params) {
  SearchState s;
  s.layout = cfg.initial_layout();
  s.phase = Phase::kAddNodes;
  normalize_phase(s, cfg, params);
  return s;
}

inline SearchState step(const SearchState& s, const Action& a, const CaseConfig& cfg,
                        const SearchParams& params) {
  SearchState next = s;
  if (const auto* an = std::get_if<AddNode>(&a)) {
    NodeSpec node;
    node.position = an->position;
    next.layout.nodes.push_back(node);
  } else if (const auto* ab = std::get_if<AddBar>(&a)) {
    Bar bar;
    bar.u = ab->u;
    bar.v = ab->v;
    bar.section = ab->section;
    next.layout.bars.push_back(bar);
    if (!next.has_intersection) {
      next.has_intersection = new_bar_intersects(
          next.layout, static_cast<int>(next.layout.bars.size()) - 1,
          cfg.bounds.intersection_clearance);
    }
  } else {
    next.layout.bars[static_cast<std::size_t>(next.cursor)].section =
        std::get<SetSection>(a).section;
    next.cursor += 1;
  }
  normalize_phase(next, cfg, params);
  return next;
}

inline Action sample_action(const SearchState& s, const CaseConfig& cfg, Rng& rng) {
  switch (s.phase) {
    case Phase::kAddNodes: {
      AddNode a;
      for (int axis = 0; axis < cfg.dimension; ++axis) {
        a.position[axis] = rng.uniform(cfg.node_proposal_box.first[axis],
                                       cfg.node_proposal_box.second[axis]);
      }
      return a;
    }
    case Phase::kAddBars: {
      const auto pairs = feasible_pairs(s.layout, cfg.bounds.intersection_clearance);
      const auto& [u, v] = pairs[static_cast<std::size_t>(
          rng.uniform_index(static_cast<int>(pairs.size())))];
      return AddBar{u, v, cfg.random_section(rng)};
    }
    case Phase::kTuneAreas:
      return SetSection{cfg.random_section(rng)};
    case Phase::kTerminal:
      break;
  }
  throw std::logic_error("no actions at a terminal state");
}

/// Random playout to a completed layout; no tree growth.
inline TrussLayout simulate(SearchState s, const CaseConfig& cfg,
                            const SearchParams& params, Rng& rng) {
  while (!s.terminal()) {
    s = step(s, sample_action(s, cfg, rng), cfg, params);
  }
  return std::move(s.layout);
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// Terminal reward: -1 for structurally unstable layouts, 0 for other
/// constraint violations, kappa / Mass^2 for valid ones.
inline double uct_reward(Classification c, double mass_kg, double kappa) {
  switch (c) {
    case Classification::kInvalidStructural: return -1.0;
    case Classification::kInvalidOther: return 0.0;
    case Classification::kValid: return kappa / (mass_kg * mass_kg);
  }
  return 0.0;
}

struct Evaluation {
  Classification classification = Classification::kInvalidStructural;
  double mass = 0.0;
  double reward = 0.0;
};

inline Evaluation evaluate_layout(const TrussLayout& g, const CaseConfig& cfg,
                                  double kappa) {
  Evaluation e;
  e.classification = check(g, cfg).classification;
  e.mass = mass(g, cfg.material.density);
  e.reward = uct_reward(e.classification, e.mass, kappa);
  return e;
}

// ---------------------------------------------------------------------------
// Selection, expansion, backpropagation
// ---------------------------------------------------------------------------

struct Selection {
  int child_index = -1;
  bool expanded = false;
};

inline long widening_limit(const TreeNode& node, const SearchParams& params) {
  return static_cast<long>(std::floor(
      params.widening_coeff * std::sqrt(static_cast<double>(node.n) + 1.0)));
}

/// Draws candidate actions, scores them with exact statistics where expanded
/// and kernel-regression estimates elsewhere, and returns the argmax. A new
/// child is expanded only while the progressive-widening cap allows it;
/// otherwise the best expanded child is selected.
inline Selection select_action(TreeNode& node, const CaseConfig& cfg,
                               const SearchParams& params, const ActionMetric& metric,
                               Rng& rng) {
  const double n_state = static_cast<double>(node.n);
  double best_score = -std::numeric_limits<double>::infinity();
  int best_existing = -1;
  std::optional<Action> best_new;

  for (int i = 0; i < params.action_samples; ++i) {
    const Action a = sample_action(node.state, cfg, rng);
    int match = -1;
    for (std::size_t c = 0; c < node.children.size(); ++c) {
      if (actions_identical(a, node.children[c].action)) {
        match = static_cast<int>(c);
        break;
      }
    }
    double score = 0.0;
    if (match >= 0) {
      const ChildStats& st = node.children[static_cast<std::size_t>(match)].stats;
      score = ucb_value(node_value(st, params.beta), n_state,
                        static_cast<double>(st.n), params.ucb_c);
    } else if (!node.children.empty()) {
      const KrEstimate kr = kr_estimate(a, node.children, metric,
                                        params.kernel_bandwidth, params.beta);
      score = ucb_value(kr.q, n_state, std::max(kr.n, 1.0), params.ucb_c);
    }
    if (score > best_score) {
      best_score = score;
      best_existing = match;
      best_new = match >= 0 ? std::nullopt : std::optional<Action>(a);
    }
  }

  if (best_new.has_value()) {
    if (static_cast<long>(node.children.size()) < widening_limit(node, params)) {
      TreeNode::Edge edge;
      edge.action = *best_new;
      edge.child = std::make_unique<TreeNode>();
      edge.child->state = step(node.state, edge.action, cfg, params);
      node.children.push_back(std::move(edge));
      return Selection{static_cast<int>(node.children.size()) - 1, true};
    }
    // Cap reached: fall back to the best expanded child by exact UCB.
    double best_ucb = -std::numeric_limits<double>::infinity();
    int best_child = 0;
    for (std::size_t c = 0; c < node.children.size(); ++c) {
      const ChildStats& st = node.children[c].stats;
      const double u = ucb_value(node_value(st, params.beta), n_state,
                                 static_cast<double>(st.n), params.ucb_c);
      if (u > best_ucb) {
        best_ucb = u;
        best_child = static_cast<int>(c);
      }
    }
    return Selection{best_child, false};
  }
  return Selection{best_existing, false};
}

struct PathEntry {
  TreeNode* node = nullptr;
  int child_index = -1;
};

/// Updates counters and values along the visited path: running mean, best
/// reward, and visit counts. Every node keeps n(s) = 1 + sum_a n(s,a); leaf
/// visits are counted once the leaf is traversed as an interior node.
inline void backpropagate(std::vector<PathEntry>& path, double reward) {
  for (PathEntry& p : path) {
    p.node->n += 1;
    ChildStats& st = p.node->children[static_cast<std::size_t>(p.child_index)].stats;
    if (st.n == 0) {
      st.w_mean = reward;
      st.w_best = reward;
    } else {
      st.w_mean += (reward - st.w_mean) / static_cast<double>(st.n + 1);
      st.w_best = std::max(st.w_best, reward);
    }
    st.n += 1;
  }
}

// ---------------------------------------------------------------------------
// Search loop
// ---------------------------------------------------------------------------

struct SearchProgress {
  long iteration = 0;
  std::size_t topologies = 0;
  std::optional<double> best_mass;
};

struct SearchResult {
  DiverseSet diverse;
  long iterations = 0;
  long valid_layouts = 0;
  std::vector<double> best_mass_trace;  // best-so-far after each iteration (inf = none)
};

using ProgressFn = std::function<void(const SearchProgress&)>;
using IterationHook = std::function<void(long iteration, const TreeNode& root,
                                         const DiverseSet& diverse)>;

/// Runs the full iteration loop: select to a leaf, complete by random
/// playout, score, store valid layouts, and backpropagate.
inline SearchResult run_search(const CaseConfig& cfg, const SearchParams& params,
                               Rng& rng, const ProgressFn& progress = nullptr,
                               const IterationHook& hook = nullptr) {
  if (params.budget < 1) throw std::invalid_argument("search budget must be >= 1");
  const double kappa = params.kappa_for(cfg);
  const ActionMetric metric = ActionMetric::for_case(cfg);

  SearchResult result;
  auto root = std::make_unique<TreeNode>();
  root->state = initial_state(cfg, params);

  for (long iter = 1; iter <= params.budget; ++iter) {
    std::vector<PathEntry> path;
    TreeNode* node = root.get();
    bool expanded = false;
    while (!node->state.terminal() && !expanded) {
      const Selection sel = select_action(*node, cfg, params, metric, rng);
      path.push_back(PathEntry{node, sel.child_index});
      expanded = sel.expanded;
      node = node->children[static_cast<std::size_t>(sel.child_index)].child.get();
    }

    const TrussLayout layout = node->state.terminal()
                                   ? node->state.layout
                                   : simulate(node->state, cfg, params, rng);
    const Evaluation eval = evaluate_layout(layout, cfg, kappa);
    if (eval.classification == Classification::kValid) {
      result.diverse.offer(layout, eval.mass);
      result.valid_layouts += 1;
    }
    backpropagate(path, eval.reward);

    const auto best = result.diverse.best();
    result.best_mass_trace.push_back(best ? best->mass
                                          : std::numeric_limits<double>::infinity());
    result.iterations = iter;
    if (hook) hook(iter, *root, result.diverse);
    if (progress && params.progress_every > 0 && iter % params.progress_every == 0) {
      SearchProgress p;
      p.iteration = iter;
      p.topologies = result.diverse.topology_count();
      if (best) p.best_mass = best->mass;
      progress(p);
    }
  }
  return result;
}

}  // namespace trussforge::uct
