#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "acf/bounds.hpp"
#include "acf/data.hpp"
#include "acf/error.hpp"
#include "acf/model.hpp"
#include "acf/util.hpp"

namespace acf {

struct BeliefValue {
  double value = 0.0;
  ItemIndex argmax = -1;
};

/// V(P) = max over candidates of the posterior mean rating; ties go to the lowest index.
template <CfModel M>
BeliefValue belief_value(const M& m, const typename M::State& s, std::span<const ItemIndex> candidates) {
  require(!candidates.empty(), ErrorCode::contract, "belief_value: empty candidate set");
  BeliefValue best{-std::numeric_limits<double>::infinity(), -1};
  for (ItemIndex j : candidates) {
    const double v = m.predict(s, j).mean;
    if (v > best.value || (v == best.value && j < best.argmax)) best = {v, j};
  }
  return best;
}

template <CfModel M>
ItemIndex recommend(const M& m, const typename M::State& s, std::span<const ItemIndex> candidates) {
  return belief_value(m, s, candidates).argmax;
}

/// Pruning inputs for EVOI: the mean-change table and which form of the test to apply.
struct PruningConfig {
  const MeanChangeBounds* tables = nullptr;
  PruneMode mode = PruneMode::per_response;
};

struct EvoiResult {
  double value = 0.0;
  std::size_t targets_considered = 0;
  std::size_t targets_pruned = 0;
};

/// Current posterior means of `targets`, stored at their item index (NaN elsewhere).
template <CfModel M>
std::vector<double> target_means(const M& m, const typename M::State& s, std::span<const ItemIndex> targets) {
  std::vector<double> means(m.n_items(), std::numeric_limits<double>::quiet_NaN());
  for (ItemIndex j : targets) means[static_cast<std::size_t>(j)] = m.predict(s, j).mean;
  return means;
}

/// EVOI(q) = sum_r P(R_q = r) max_{j in targets \ q} E[R_j | r] - max_{j in targets} E[R_j].
/// `means` must hold the current means of every target (see target_means). With no target
/// other than q, no decision can change and the result is 0.
template <CfModel M>
EvoiResult evoi_detail(const M& m, const typename M::State& s, ItemIndex q, std::span<const ItemIndex> targets,
                       std::span<const double> means, const PruningConfig& pruning = {}) {
  require(!s.observations().contains(q), ErrorCode::contract, "evoi: query " + std::to_string(q) + " already observed");
  EvoiResult out;
  double current = -std::numeric_limits<double>::infinity();
  ItemIndex reference = -1;
  double ref_mean = -std::numeric_limits<double>::infinity();
  for (ItemIndex j : targets) {
    const double v = means[static_cast<std::size_t>(j)];
    current = std::max(current, v);
    if (j != q && (v > ref_mean || (v == ref_mean && j < reference))) {
      ref_mean = v;
      reference = j;
    }
  }
  if (reference < 0) return out;

  const RatingPosterior pred = m.predict(s, q);
  std::vector<ItemIndex> inner;
  inner.reserve(targets.size());
  if (pruning.tables) {
    auto pruned = prune_targets(means, pred, q, reference, targets, *pruning.tables, pruning.mode);
    out.targets_pruned = pruned.size();
    std::size_t p = 0;
    for (ItemIndex j : targets) {
      if (j == q) continue;
      while (p < pruned.size() && pruned[p] < j) ++p;
      if (p < pruned.size() && pruned[p] == j) continue;
      inner.push_back(j);
    }
  } else {
    for (ItemIndex j : targets)
      if (j != q) inner.push_back(j);
  }
  out.targets_considered = inner.size();

  double expected = 0.0;
  for (Rating r = 1; r <= m.rho(); ++r) {
    const double pr = pred.probs[static_cast<std::size_t>(r - 1)];
    if (pr <= 0.0) continue;
    const auto next = m.observe(s, q, r);
    double best = -std::numeric_limits<double>::infinity();
    for (ItemIndex j : inner) best = std::max(best, m.predict(next, j).mean);
    expected += pr * best;
  }
  out.value = expected - current;
  return out;
}

template <CfModel M>
double evoi(const M& m, const typename M::State& s, ItemIndex q, std::span<const ItemIndex> targets,
            const PruningConfig& pruning = {}) {
  const auto means = target_means(m, s, targets);
  return evoi_detail(m, s, q, targets, means, pruning).value;
}

template <CfModel M>
double evoi(const M& m, const typename M::State& s, ItemIndex q) {
  const auto targets = s.observations().unobserved();
  return evoi(m, s, q, targets);
}

enum class StrategyKind { evoi, entropy, random };

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::evoi: return "evoi";
    case StrategyKind::entropy: return "entropy";
    case StrategyKind::random: return "random";
  }
  return "unknown";
}

inline StrategyKind parse_strategy(const std::string& s) {
  if (s == "evoi") return StrategyKind::evoi;
  if (s == "entropy") return StrategyKind::entropy;
  if (s == "random") return StrategyKind::random;
  throw Error(ErrorCode::validation, "unknown strategy '" + s + "'");
}

struct StrategyConfig {
  StrategyKind kind = StrategyKind::evoi;
  /// Querying stops when the best EVOI falls below this value.
  double evoi_threshold = 0.0;
  /// Optional restriction of the query candidates (e.g. a prototype set), ascending.
  std::vector<ItemIndex> restrict_to;
  PruningConfig pruning;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct QueryDecision {
  std::optional<ItemIndex> chosen_query;
  std::vector<ItemIndex> candidates;
  /// Strategy score per candidate (EVOI, entropy, or 0 for random).
  std::vector<double> scores;
  bool stop = false;
  std::string reason;
  std::size_t targets_pruned = 0;
  std::size_t targets_considered = 0;

  double best_score() const {
    if (!chosen_query) return 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i] == *chosen_query) return scores[i];
    return 0.0;
  }
};

/// Shannon entropy (nats) of each item's add-one smoothed training rating histogram.
inline std::vector<double> item_entropies(const RatingsDataset& d) {
  std::vector<double> out;
  out.reserve(d.n_items);
  for (const auto& h : d.rating_histograms()) {
    double total = 0.0;
    for (auto c : h) total += static_cast<double>(c) + 1.0;
    double e = 0.0;
    for (auto c : h) {
      const double p = (static_cast<double>(c) + 1.0) / total;
      e -= p * std::log(p);
    }
    out.push_back(e);
  }
  return out;
}

/// Argmax with lowest-index tie-break; candidates are ascending so the first maximum wins.
inline std::size_t argmax_first(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

/// Picks the next query among `candidates` (ascending item indices). EVOI maxes over
/// `targets`; entropy reads `entropies` (item_entropies of the training data); random draws from
/// a generator seeded by cfg.seed and the state's observation sequence, so a given state always
/// yields the same choice.
template <CfModel M>
QueryDecision select_query(const M& m, const typename M::State& s, const StrategyConfig& cfg,
                           std::span<const ItemIndex> candidates, std::span<const ItemIndex> targets,
                           std::span<const double> entropies = {}) {
  require(cfg.evoi_threshold >= 0.0, ErrorCode::validation, "evoi_threshold must be >= 0");
  QueryDecision d;
  d.candidates.assign(candidates.begin(), candidates.end());
  if (d.candidates.empty()) {
    d.stop = true;
    d.reason = "no unobserved candidate items";
    return d;
  }
  d.scores.assign(d.candidates.size(), 0.0);
  switch (cfg.kind) {
    case StrategyKind::evoi: {
      const auto means = target_means(m, s, targets);
      std::vector<EvoiResult> res(d.candidates.size());
      parallel_for(d.candidates.size(), cfg.threads,
                   [&](std::size_t i) { res[i] = evoi_detail(m, s, d.candidates[i], targets, means, cfg.pruning); });
      for (std::size_t i = 0; i < res.size(); ++i) {
        d.scores[i] = res[i].value;
        d.targets_pruned += res[i].targets_pruned;
        d.targets_considered += res[i].targets_considered;
      }
      const std::size_t best = argmax_first(d.scores);
      d.chosen_query = d.candidates[best];
      if (d.scores[best] < cfg.evoi_threshold) {
        d.stop = true;
        d.reason = "best EVOI below threshold";
      }
      break;
    }
    case StrategyKind::entropy: {
      require(entropies.size() == m.n_items(), ErrorCode::contract, "entropy strategy needs per-item entropies");
      for (std::size_t i = 0; i < d.candidates.size(); ++i)
        d.scores[i] = entropies[static_cast<std::size_t>(d.candidates[i])];
      d.chosen_query = d.candidates[argmax_first(d.scores)];
      break;
    }
    case StrategyKind::random: {
      std::uint64_t h = fnv1a64(std::to_string(cfg.seed));
      for (ItemIndex j : s.observations().order()) h = fnv1a64(std::to_string(j) + ",", h);
      std::mt19937_64 rng(h);
      std::uniform_int_distribution<std::size_t> pick(0, d.candidates.size() - 1);
      d.chosen_query = d.candidates[pick(rng)];
      break;
    }
  }
  return d;
}

/// Candidates default to every unobserved item (intersected with cfg.restrict_to when set);
/// targets are every unobserved item.
template <CfModel M>
QueryDecision select_query(const M& m, const typename M::State& s, const StrategyConfig& cfg,
                           std::span<const double> entropies = {}) {
  const auto targets = s.observations().unobserved();
  std::vector<ItemIndex> candidates;
  if (cfg.restrict_to.empty()) {
    candidates = targets;
  } else {
    std::set_intersection(targets.begin(), targets.end(), cfg.restrict_to.begin(), cfg.restrict_to.end(),
                          std::back_inserter(candidates));
  }
  return select_query(m, s, cfg, candidates, targets, entropies);
}

}  // namespace acf
