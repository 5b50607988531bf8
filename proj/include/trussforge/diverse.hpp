// Store of the lightest valid layouts, keyed by topology, plus a global
// lightest list ignoring topology. Bridges the search and refinement stages.
#pragma once

#include <map>
#include <optional>
#include <vector>

#include "trussforge/model.hpp"

namespace trussforge {

struct ScoredLayout {
  TrussLayout layout;
  double mass = 0.0;
};

inline bool same_geometry(const TrussLayout& a, const TrussLayout& b) {
  if (a.nodes.size() != b.nodes.size() || a.bars.size() != b.bars.size()) return false;
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    if (a.nodes[i].position != b.nodes[i].position) return false;
  }
  for (std::size_t i = 0; i < a.bars.size(); ++i) {
    if (a.bars[i].u != b.bars[i].u || a.bars[i].v != b.bars[i].v) return false;
    if (section_area(a.bars[i].section) != section_area(b.bars[i].section)) return false;
  }
  return true;
}

/// Inserts into a mass-sorted list with a fixed capacity; exact duplicates
/// are dropped. Returns whether the entry was stored.
inline bool insert_sorted(std::vector<ScoredLayout>& list, const TrussLayout& g,
                          double mass_kg, std::size_t capacity) {
  auto pos = list.begin();
  while (pos != list.end() && pos->mass <= mass_kg) {
    if (pos->mass == mass_kg && same_geometry(pos->layout, g)) return false;
    ++pos;
  }
  if (list.size() >= capacity && pos == list.end()) return false;
  list.insert(pos, ScoredLayout{g, mass_kg});
  if (list.size() > capacity) list.pop_back();
  return true;
}

class DiverseSet {
 public:
  static constexpr std::size_t kPerTopologyCapacity = 5;
  static constexpr std::size_t kGlobalCapacity = 5;

  /// Offers a valid layout; stores it when it ranks among the lightest for
  /// its topology or globally. Heavier-than-capacity offers are no-ops.
  bool offer(const TrussLayout& g, double mass_kg) {
    const bool kept_topo =
        insert_sorted(by_topology_[topology_key(g)], g, mass_kg, kPerTopologyCapacity);
    const bool kept_global = insert_sorted(lightest_, g, mass_kg, kGlobalCapacity);
    return kept_topo || kept_global;
  }

  bool empty() const { return by_topology_.empty(); }

  std::size_t topology_count() const { return by_topology_.size(); }

  std::size_t layout_count() const {
    std::size_t n = 0;
    for (const auto& [key, list] : by_topology_) n += list.size();
    return n;
  }

  std::optional<ScoredLayout> best() const {
    if (lightest_.empty()) return std::nullopt;
    return lightest_.front();
  }

  /// All stored layouts in deterministic (topology key, mass) order.
  std::vector<const ScoredLayout*> all() const {
    std::vector<const ScoredLayout*> out;
    for (const auto& [key, list] : by_topology_) {
      for (const ScoredLayout& s : list) out.push_back(&s);
    }
    return out;
  }

  const std::map<TopologyKey, std::vector<ScoredLayout>>& by_topology() const {
    return by_topology_;
  }
  const std::vector<ScoredLayout>& lightest() const { return lightest_; }

 private:
  std::map<TopologyKey, std::vector<ScoredLayout>> by_topology_;
  std::vector<ScoredLayout> lightest_;
};

}  // namespace trussforge
