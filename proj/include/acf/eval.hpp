#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "acf/bounds.hpp"
#include "acf/data.hpp"
#include "acf/error.hpp"
#include "acf/mcvq.hpp"
#include "acf/model.hpp"
#include "acf/strategies.hpp"
#include "acf/util.hpp"

namespace acf {

/// A held-out item together with the user's true rating.
struct HeldOut {
  ItemIndex item = 0;
  Rating rating = 0;
};

/// Best true rating among `held_out` minus the true rating of the model's top held-out item.
template <CfModel M>
double model_loss(const M& m, const typename M::State& s, std::span<const HeldOut> held_out) {
  require(!held_out.empty(), ErrorCode::contract, "model_loss: empty held-out set");
  std::vector<ItemIndex> items;
  Rating best = 0;
  for (const auto& h : held_out) {
    items.push_back(h.item);
    best = std::max(best, h.rating);
  }
  const ItemIndex pick = recommend(m, s, items);
  for (const auto& h : held_out)
    if (h.item == pick) return static_cast<double>(best - h.rating);
  throw Error(ErrorCode::internal, "model_loss: recommended item not in held-out set");
}

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline Summary summarize(std::span<const double> v) {
  Summary s;
  s.n = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return s;
}

struct PairedTest {
  std::size_t n = 0;
  double mean_difference = 0.0;
  double t = 0.0;
  /// One-sided p-value for H1: mean(a - b) > 0.
  double p_value = 1.0;
};

inline PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::contract, "paired_t_test: samples must be paired");
  PairedTest out;
  out.n = a.size();
  if (a.size() < 2) return out;
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const Summary s = summarize(d);
  out.mean_difference = s.mean;
  if (s.stderr_ == 0.0) {
    out.t = s.mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    out.p_value = s.mean > 0.0 ? 0.0 : 1.0;
    return out;
  }
  out.t = s.mean / s.stderr_;
  boost::math::students_t dist(static_cast<double>(a.size() - 1));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.t));
  return out;
}

/// One query-selection series of an experiment: a strategy, optionally restricted to a subset
/// of items (ascending), e.g. a prototype set.
struct SeriesSpec {
  std::string name;
  StrategyKind kind = StrategyKind::evoi;
  std::vector<ItemIndex> restrict_to;
};

struct ExperimentConfig {
  std::vector<SeriesSpec> series{{"evoi", StrategyKind::evoi, {}},
                                 {"entropy", StrategyKind::entropy, {}},
                                 {"random", StrategyKind::random, {}}};
  std::vector<std::size_t> kappa_sizes{1, 2, 3, 5, 10};
  std::uint64_t seed = 0;
  PruneMode pruning_mode = PruneMode::expected;
  unsigned threads = 1;
};

/// Improvements of one series at one kappa in one run. `users` are test-user indices, in the
/// same order for every series of the run, so cells can be paired.
struct LossCell {
  std::string series;
  std::size_t kappa = 0;
  std::size_t run = 0;
  std::vector<UserIndex> users;
  std::vector<double> prior_loss;
  std::vector<double> improvements;
  std::size_t skipped_users = 0;
  std::size_t restriction_fallbacks = 0;
  /// Hash of every user's revealed (item, rating) sequence at this kappa.
  std::uint64_t revealed_hash = 0;

  Summary summary() const { return summarize(improvements); }
  /// Sum of improvements divided by the number of test users, skipped users counting as 0.
  double normalized_total() const {
    const double n = static_cast<double>(users.size() + skipped_users);
    return n > 0 ? std::accumulate(improvements.begin(), improvements.end(), 0.0) / n : 0.0;
  }
};

struct LossRecord {
  std::vector<LossCell> cells;

  const LossCell* find(const std::string& series, std::size_t kappa, std::size_t run) const {
    for (const auto& c : cells)
      if (c.series == series && c.kappa == kappa && c.run == run) return &c;
    return nullptr;
  }
  /// Improvements of a series at kappa concatenated over runs (pairable across series).
  std::vector<double> pooled(const std::string& series, std::size_t kappa) const {
    std::vector<double> out;
    for (const auto& c : cells)
      if (c.series == series && c.kappa == kappa) out.insert(out.end(), c.improvements.begin(), c.improvements.end());
    return out;
  }
  std::vector<std::string> series_names() const {
    std::vector<std::string> out;
    for (const auto& c : cells)
      if (std::find(out.begin(), out.end(), c.series) == out.end()) out.push_back(c.series);
    return out;
  }
  std::vector<std::size_t> kappas() const {
    std::vector<std::size_t> out;
    for (const auto& c : cells)
      if (std::find(out.begin(), out.end(), c.kappa) == out.end()) out.push_back(c.kappa);
    std::sort(out.begin(), out.end());
    return out;
  }
  void append(const LossRecord& other) { cells.insert(cells.end(), other.cells.begin(), other.cells.end()); }
};

/// Held-out entries of a test user at kappa, ascending by item.
inline std::vector<HeldOut> held_out_ratings(const std::vector<std::vector<std::pair<ItemIndex, Rating>>>& rows,
                                             const ReplayMask& mask, std::size_t u, std::size_t kappa) {
  std::vector<HeldOut> out;
  const auto& row = rows[u];
  for (ItemIndex j : mask.held_out(u, kappa)) {
    auto it = std::lower_bound(row.begin(), row.end(), std::pair<ItemIndex, Rating>{j, 0});
    require(it != row.end() && it->first == j, ErrorCode::internal, "replay schedule item missing from test data");
    out.push_back({j, it->second});
  }
  return out;
}

/// The replay protocol: at each kappa, reveal the first kappa scheduled ratings of every test
/// user, let each series choose one query among the held-out items, reveal its true rating and
/// measure the loss over the remaining held-out items. Every series sees the same revealed data.
/// Users with fewer than two held-out items at some kappa are skipped there.
template <CfModel M>
LossRecord run_query_experiment(const M& m, const RatingsDataset& train, const RatingsDataset& test,
                                const ReplayMask& mask, const ExperimentConfig& cfg, std::size_t run = 0) {
  require(test.n_items == m.n_items(), ErrorCode::validation, "test data and model disagree on item count");
  for (std::size_t i = 1; i < cfg.kappa_sizes.size(); ++i)
    require(cfg.kappa_sizes[i - 1] < cfg.kappa_sizes[i], ErrorCode::validation, "kappa sizes must be ascending");
  const auto entropies = item_entropies(train);
  const auto rows = test.by_user();
  const std::size_t U = test.n_users, S = cfg.series.size();
  LossRecord rec;
  for (std::size_t kappa : cfg.kappa_sizes) {
    require(kappa > 0, ErrorCode::validation, "kappa sizes must be positive");
    std::vector<std::vector<double>> prior(U, std::vector<double>(S)), improve(U, std::vector<double>(S));
    std::vector<std::vector<char>> fallback(U, std::vector<char>(S, 0));
    std::vector<char> used(U, 0);
    std::vector<std::uint64_t> hashes(U, 0);
    parallel_for(U, cfg.threads, [&](std::size_t u) {
      const auto held = held_out_ratings(rows, mask, u, kappa);
      if (held.size() < 2) return;
      used[u] = 1;
      auto state = m.initial_state();
      std::uint64_t h = fnv1a64(std::to_string(u) + ":");
      for (ItemIndex j : mask.known(u, kappa)) {
        auto it = std::lower_bound(rows[u].begin(), rows[u].end(), std::pair<ItemIndex, Rating>{j, 0});
        state = m.observe(state, j, it->second);
        h = fnv1a64(std::to_string(j) + "=" + std::to_string(it->second) + ";", h);
      }
      hashes[u] = h;
      std::vector<ItemIndex> held_items;
      for (const auto& x : held) held_items.push_back(x.item);
      const double loss0 = model_loss(m, state, held);
      for (std::size_t si = 0; si < S; ++si) {
        const auto& spec = cfg.series[si];
        StrategyConfig sc;
        sc.kind = spec.kind;
        sc.seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * (run + 1)) ^ (static_cast<std::uint64_t>(u) << 20) ^ kappa;
        std::vector<ItemIndex> cands = held_items;
        if (!spec.restrict_to.empty()) {
          std::vector<ItemIndex> r;
          std::set_intersection(held_items.begin(), held_items.end(), spec.restrict_to.begin(), spec.restrict_to.end(),
                                std::back_inserter(r));
          if (r.empty())
            fallback[u][si] = 1;
          else
            cands = std::move(r);
        }
        const auto d = select_query(m, state, sc, cands, held_items, entropies);
        const ItemIndex q = *d.chosen_query;
        std::vector<HeldOut> rest;
        Rating rq = 0;
        for (const auto& x : held) {
          if (x.item == q)
            rq = x.rating;
          else
            rest.push_back(x);
        }
        const auto next = m.observe(state, q, rq);
        prior[u][si] = loss0;
        improve[u][si] = loss0 - model_loss(m, next, rest);
      }
    });
    std::uint64_t revealed = 0xcbf29ce484222325ULL;
    for (std::size_t u = 0; u < U; ++u)
      if (used[u]) revealed = fnv1a64(hex64(hashes[u]), revealed);
    for (std::size_t si = 0; si < S; ++si) {
      LossCell c;
      c.series = cfg.series[si].name;
      c.kappa = kappa;
      c.run = run;
      c.revealed_hash = revealed;
      for (std::size_t u = 0; u < U; ++u) {
        if (!used[u]) {
          ++c.skipped_users;
          continue;
        }
        c.users.push_back(static_cast<UserIndex>(u));
        c.prior_loss.push_back(prior[u][si]);
        c.improvements.push_back(improve[u][si]);
        c.restriction_fallbacks += static_cast<std::size_t>(fallback[u][si]);
      }
      rec.cells.push_back(std::move(c));
    }
  }
  return rec;
}

struct PruningPoint {
  std::size_t kappa = 0;
  std::size_t users = 0;
  /// Mean over users and candidate queries of pruned / (M - kappa - 1).
  double fraction = 0.0;
  double stderr_ = 0.0;
};

/// Fraction of potential targets that the bound tables exclude when evaluating each unobserved
/// query, per kappa, using each test user's first kappa scheduled ratings.
template <CfModel M>
std::vector<PruningPoint> run_pruning_experiment(const M& m, const RatingsDataset& test, const ReplayMask& mask,
                                                 const MeanChangeBounds& tables, std::span<const std::size_t> kappas,
                                                 PruneMode mode = PruneMode::expected, unsigned threads = 1) {
  const auto rows = test.by_user();
  const std::size_t U = test.n_users, Mi = m.n_items();
  std::vector<PruningPoint> out;
  for (std::size_t kappa : kappas) {
    std::vector<double> frac(U, -1.0);
    parallel_for(U, threads, [&](std::size_t u) {
      if (mask.schedules[u].size() < kappa) return;
      auto state = m.initial_state();
      for (ItemIndex j : mask.known(u, kappa)) {
        auto it = std::lower_bound(rows[u].begin(), rows[u].end(), std::pair<ItemIndex, Rating>{j, 0});
        state = m.observe(state, j, it->second);
      }
      const auto targets = state.observations().unobserved();
      if (targets.size() < 2) return;
      const auto means = target_means(m, state, targets);
      const BeliefValue best = belief_value(m, state, targets);
      double acc = 0.0;
      for (ItemIndex q : targets) {
        ItemIndex ref = best.argmax;
        if (q == ref) {
          double v = -std::numeric_limits<double>::infinity();
          for (ItemIndex j : targets)
            if (j != q && means[static_cast<std::size_t>(j)] > v) {
              v = means[static_cast<std::size_t>(j)];
              ref = j;
            }
        }
        const auto pruned = prune_targets(means, m.predict(state, q), q, ref, targets, tables, mode);
        acc += static_cast<double>(pruned.size()) / static_cast<double>(Mi - state.observations().size() - 1);
      }
      frac[u] = acc / static_cast<double>(targets.size());
    });
    std::vector<double> v;
    for (double f : frac)
      if (f >= 0.0) v.push_back(f);
    const Summary s = summarize(v);
    out.push_back({kappa, s.n, s.mean, s.stderr_});
  }
  return out;
}

/// The query experiment with extra EVOI series restricted to each prototype set (named by
/// `labels`), alongside unrestricted EVOI and random for reference.
template <CfModel M>
LossRecord run_prototype_experiment(const M& m, const RatingsDataset& train, const RatingsDataset& test,
                                    const ReplayMask& mask, const std::vector<std::vector<ItemIndex>>& protosets,
                                    const std::vector<std::string>& labels, ExperimentConfig cfg, std::size_t run = 0) {
  require(protosets.size() == labels.size(), ErrorCode::contract, "one label per prototype set");
  cfg.series = {{"evoi", StrategyKind::evoi, {}}, {"random", StrategyKind::random, {}}};
  for (std::size_t i = 0; i < protosets.size(); ++i) {
    auto members = protosets[i];
    std::sort(members.begin(), members.end());
    cfg.series.push_back({labels[i], StrategyKind::evoi, std::move(members)});
  }
  return run_query_experiment(m, train, test, mask, cfg, run);
}

// ---------------------------------------------------------------------------------------------
// Reporting.

/// Plot data: one row per (series, kappa) pooled over runs.
inline std::string format_plot_data(const LossRecord& rec) {
  std::ostringstream o;
  o << "series,kappa,mean,stderr,n,normalized_total\n";
  for (const auto& name : rec.series_names())
    for (std::size_t k : rec.kappas()) {
      const auto v = rec.pooled(name, k);
      const auto s = summarize(v);
      double total = 0.0, users = 0.0;
      for (const auto& c : rec.cells)
        if (c.series == name && c.kappa == k) {
          total += std::accumulate(c.improvements.begin(), c.improvements.end(), 0.0);
          users += static_cast<double>(c.users.size() + c.skipped_users);
        }
      o << name << ',' << k << ',' << format_fixed(s.mean) << ',' << format_fixed(s.stderr_) << ',' << s.n << ','
        << format_fixed(users > 0 ? total / users : 0.0) << '\n';
    }
  return o.str();
}

inline std::string format_pruning_data(std::span<const PruningPoint> pts) {
  std::ostringstream o;
  o << "kappa,fraction,stderr,users\n";
  for (const auto& p : pts) o << p.kappa << ',' << format_fixed(p.fraction) << ',' << format_fixed(p.stderr_) << ',' << p.users << '\n';
  return o.str();
}

struct PlotSeries {
  std::string name;
  std::vector<double> x, y, err;
};

/// Minimal static line chart with error bars.
inline std::string render_svg(const std::vector<PlotSeries>& series, const std::string& title, const std::string& xlabel,
                              const std::string& ylabel) {
  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i] - e);
      y1 = std::max(y1, s.y[i] + e);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
      << format_fixed(yv, 3) << "</text>\n";
  }
  for (const auto& s : series)
    for (double xv : s.x)
      o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << xv
        << "</text>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel
    << "</text>\n";
  o << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
    << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* c = colors[si % 6];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size() && i < s.err.size(); ++i)
      o << "<line x1=\"" << px(s.x[i]) << "\" y1=\"" << py(s.y[i] - s.err[i]) << "\" x2=\"" << px(s.x[i]) << "\" y2=\""
        << py(s.y[i] + s.err[i]) << "\" stroke=\"" << c << "\"/>\n";
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 18 * (si + 1) << "\" fill=\"" << c << "\" font-size=\"12\">"
      << s.name << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::vector<PlotSeries> plot_series(const LossRecord& rec) {
  std::vector<PlotSeries> out;
  for (const auto& name : rec.series_names()) {
    PlotSeries s{name, {}, {}, {}};
    for (std::size_t k : rec.kappas()) {
      const auto sm = summarize(rec.pooled(name, k));
      s.x.push_back(static_cast<double>(k));
      s.y.push_back(sm.mean);
      s.err.push_back(sm.stderr_);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Synthetic ground truth.

struct SeparatedTruthSpec {
  std::size_t n_items = 50, n_types = 3, n_attitudes = 2;
  int rho = 6;
  /// Mass of each item's dominant type; the rest is spread evenly.
  double type_purity = 0.96;
  double rating_var = 0.3;
  /// Minimum gap between the rating means of two attitudes of the same (item, type).
  double min_attitude_gap = 2.0;
  std::uint64_t seed = 0;
};

/// An MCVQ model with near one-hot item types, uniform attitude priors and attitude-specific
/// rating means spread across the scale, so that a few ratings identify a user's attitudes.
inline McvqModel make_separated_truth(const SeparatedTruthSpec& spec) {
  const std::size_t M = spec.n_items, K = spec.n_types, L = spec.n_attitudes;
  require(M > 0 && K > 0 && L > 0 && spec.rho > 1, ErrorCode::validation, "separated truth: bad dimensions");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(1.0, static_cast<double>(spec.rho));
  std::vector<double> td(M * K), ap(K * L, 1.0 / static_cast<double>(L)), mu(M * K * L), var(M * K * L, spec.rating_var);
  for (std::size_t j = 0; j < M; ++j) {
    const std::size_t dom = j % K;
    for (std::size_t k = 0; k < K; ++k)
      td[j * K + k] = K == 1 ? 1.0 : (k == dom ? spec.type_purity : (1.0 - spec.type_purity) / static_cast<double>(K - 1));
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> means;
      for (int tries = 0; means.size() < L; ++tries) {
        const double v = unif(rng);
        bool ok = true;
        if (tries < 1000)
          for (double w : means) ok = ok && std::abs(v - w) >= spec.min_attitude_gap;
        if (ok) means.push_back(v);
      }
      for (std::size_t l = 0; l < L; ++l) mu[(j * K + k) * L + l] = means[l];
    }
  }
  return McvqModel::from_gaussians(M, K, L, spec.rho, std::move(td), std::move(ap), std::move(mu), std::move(var));
}

}  // namespace acf
