#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "acf/error.hpp"
#include "acf/mcvq.hpp"
#include "acf/model.hpp"
#include "acf/simplex.hpp"
#include "acf/util.hpp"

namespace acf {

/// How the contrast attitude l_x of the two-point worst case is evaluated.
enum class ContrastPolicy : std::uint8_t {
  /// Stationary point of the shift expression itself; the exact supremum over all attitude rows.
  worst_case_contrast = 0,
  /// The closed-form p exactly as printed, which is the stationary point for l_x rather than l.
  printed_stationary_point = 1,
};

/// Which routine produced an attitude-shift table entry.
enum class BoundPath : std::uint8_t { closed_form = 0, numeric = 1 };

struct BoundOptions {
  /// Adds sum_l delta_kl = 0 per VQ to the mean-change LP.
  bool tighten = false;
  ContrastPolicy contrast = ContrastPolicy::worst_case_contrast;
  /// Random attitude rows checked per (q, r, k) against the closed form, alongside a direct
  /// numeric maximization; any excess switches the entry to the numeric path. 0 disables it.
  std::size_t audit_samples = 0;
  std::uint64_t audit_seed = 0;
  unsigned threads = 1;
};

/// Delta^{q r}_{kl}: bound on |P(A_k = l | response r to q) - P(A_k = l)| for any user.
struct AttitudeShiftBounds {
  std::size_t n_items = 0, n_types = 0, n_attitudes = 0;
  int rho = 0;
  std::vector<double> values;       // [q][r-1][k][l]
  std::vector<std::uint8_t> paths;  // BoundPath per entry

  std::size_t index(std::size_t q, Rating r, std::size_t k, std::size_t l) const {
    return ((q * static_cast<std::size_t>(rho) + static_cast<std::size_t>(r - 1)) * n_types + k) * n_attitudes + l;
  }
  double at(std::size_t q, Rating r, std::size_t k, std::size_t l) const { return values[index(q, r, k, l)]; }
  /// The K x L block for (q, r).
  std::span<const double> block(std::size_t q, Rating r) const {
    return {values.data() + index(q, r, 0, 0), n_types * n_attitudes};
  }
  friend bool operator==(const AttitudeShiftBounds&, const AttitudeShiftBounds&) = default;
};

/// Delta^{q r}_j: bound on the change of target j's mean rating after response r to q.
struct MeanChangeBounds {
  std::size_t n_items = 0;
  int rho = 0;
  std::vector<double> values;  // [j][q][r-1]

  double at(std::size_t j, std::size_t q, Rating r) const {
    return values[(j * n_items + q) * static_cast<std::size_t>(rho) + static_cast<std::size_t>(r - 1)];
  }
  double& at(std::size_t j, std::size_t q, Rating r) {
    return values[(j * n_items + q) * static_cast<std::size_t>(rho) + static_cast<std::size_t>(r - 1)];
  }
  friend bool operator==(const MeanChangeBounds&, const MeanChangeBounds&) = default;
};

struct BoundTables {
  AttitudeShiftBounds shift;
  MeanChangeBounds mean_change;
  bool tighten = false;
  ContrastPolicy contrast = ContrastPolicy::worst_case_contrast;
  friend bool operator==(const BoundTables&, const BoundTables&) = default;
};

namespace detail {

/// Extremum of p*a/(p*a + (1-p)*b) - p over p in [0, 1] for a two-attitude row, where a and b
/// are the update factors of l and of the contrast l_x.
inline double two_point_shift(double a, double b, ContrastPolicy policy) {
  if (a == b || a + b <= 0.0) return 0.0;
  double p = 0.0;
  if (policy == ContrastPolicy::worst_case_contrast) {
    p = (std::sqrt(a * b) - b) / (a - b);
  } else {
    p = (a - std::sqrt(a * b)) / (a - b);
  }
  p = std::clamp(p, 0.0, 1.0);
  const double denom = p * a + (1.0 - p) * b;
  if (denom <= 0.0) return 1.0;  // b == 0 and p == 0: the supremum is approached in the limit
  return std::abs(p * a / denom - p);
}

}  // namespace detail

/// Worst case over every attitude row of the shift of P(A_k = l) after response r_q to q.
/// F (other VQs at their priors) and H_l' = P(T_q = k) theta^{r_q}_{qkl'} use the same floored
/// theta as the attitude update, so the bound covers exactly what the update can do.
inline double attitude_shift_bound(const McvqModel& m, ItemIndex q, Rating r_q, std::size_t k, std::size_t l,
                                   ContrastPolicy policy = ContrastPolicy::worst_case_contrast) {
  const auto qq = static_cast<std::size_t>(q);
  const double a = m.prior_bracket(qq, r_q, k, l);
  double worst = 0.0;
  for (std::size_t lx = 0; lx < m.n_attitudes(); ++lx) {
    if (lx == l) continue;
    worst = std::max(worst, detail::two_point_shift(a, m.prior_bracket(qq, r_q, k, lx), policy));
  }
  return std::clamp(worst, 0.0, 1.0);
}

/// Realized |posterior - prior| of P(A_k = l) for one attitude row under the fixed-prior update.
inline double realized_attitude_shift(const McvqModel& m, ItemIndex q, Rating r_q, std::size_t k, std::size_t l,
                                      std::span<const double> row) {
  double z = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) z += row[i] * m.prior_bracket(static_cast<std::size_t>(q), r_q, k, i);
  return std::abs(row[l] * m.prior_bracket(static_cast<std::size_t>(q), r_q, k, l) / z - row[l]);
}

/// Direct maximization of the realized shift over the attitude simplex by projected gradient
/// ascent from `starts` seeded points (plus the vertices' neighbourhoods).
inline double numeric_attitude_shift_sup(const McvqModel& m, ItemIndex q, Rating r_q, std::size_t k, std::size_t l,
                                         std::size_t starts = 32, std::uint64_t seed = 0) {
  const std::size_t L = m.n_attitudes();
  if (L < 2) return 0.0;
  std::vector<double> B(L);
  for (std::size_t i = 0; i < L; ++i) B[i] = m.prior_bracket(static_cast<std::size_t>(q), r_q, k, i);
  auto project = [](std::vector<double>& v) {
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    // The first index always qualifies; seeding with it keeps theta exact for large entries.
    double css = u[0], theta = u[0] - 1.0;
    for (std::size_t i = 1; i < u.size(); ++i) {
      css += u[i];
      const double t = (css - 1.0) / static_cast<double>(i + 1);
      if (u[i] - t > 0.0) theta = t;
    }
    for (double& x : v) x = std::max(x - theta, 0.0);
  };
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gam(1.0, 1.0);
  double best = 0.0;
  for (double sign : {1.0, -1.0}) {
    for (std::size_t s = 0; s < starts; ++s) {
      std::vector<double> x(L);
      for (double& v : x) v = gam(rng) + 1e-9;
      normalize(x);
      double step = 0.1;
      auto value = [&](const std::vector<double>& v) {
        double z = 0.0;
        for (std::size_t i = 0; i < L; ++i) z += v[i] * B[i];
        return sign * (v[l] * B[l] / z - v[l]);
      };
      double f = value(x);
      for (int it = 0; it < 2000; ++it) {
        double z = 0.0;
        for (std::size_t i = 0; i < L; ++i) z += x[i] * B[i];
        std::vector<double> grad(L);
        for (std::size_t i = 0; i < L; ++i) {
          double gi = -x[l] * B[l] * B[i] / (z * z);
          if (i == l) gi += B[l] / z - 1.0;
          grad[i] = sign * gi;
        }
        std::vector<double> y(L);
        for (std::size_t i = 0; i < L; ++i) y[i] = x[i] + step * grad[i];
        project(y);
        const double fy = value(y);
        if (fy >= f) {
          x = std::move(y);
          f = fy;
          step = std::min(step * 1.5, 4.0);
        } else {
          step *= 0.5;
          if (step < 1e-14) break;
        }
      }
      best = std::max(best, f);
    }
  }
  return std::clamp(best, 0.0, 1.0);
}

/// The compact mean-change LP for target j under per-attitude shift bounds delta (K x L).
/// Variables: p_1..p_rho, q_1..q_rho, delta_11..delta_KL.
struct MeanChangeLp {
  lp::LinearProgram program;
  std::size_t n_variables() const { return program.n_vars; }
  std::size_t n_constraints() const { return program.rows.size(); }
};

inline MeanChangeLp build_mean_change_lp(const McvqModel& m, ItemIndex j, std::span<const double> delta, bool tighten) {
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  const auto R = static_cast<std::size_t>(m.rho());
  require(delta.size() == K * L, ErrorCode::contract, "delta block must have K*L entries");
  const std::size_t n = 2 * R + K * L;
  const auto jj = static_cast<std::size_t>(j);
  MeanChangeLp out;
  auto& P = out.program;
  P.n_vars = n;
  P.objective.assign(n, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    P.objective[r] = -static_cast<double>(r + 1);
    P.objective[R + r] = static_cast<double>(r + 1);
  }
  P.lower.assign(n, 0.0);
  for (std::size_t c = 0; c < K * L; ++c) P.lower[2 * R + c] = -delta[c];
  auto unit = [&](std::size_t v, double coef) {
    std::vector<double> row(n, 0.0);
    row[v] = coef;
    return row;
  };
  // Simplex constraints on p and q.
  for (std::size_t v = 0; v < 2 * R; ++v) {
    P.add(unit(v, 1.0), lp::Relation::greater_equal, 0.0);
    P.add(unit(v, 1.0), lp::Relation::less_equal, 1.0);
  }
  for (std::size_t block = 0; block < 2; ++block) {
    std::vector<double> row(n, 0.0);
    for (std::size_t r = 0; r < R; ++r) row[block * R + r] = 1.0;
    P.add(std::move(row), lp::Relation::equal, 1.0);
  }
  // Box on the attitude changes.
  for (std::size_t c = 0; c < K * L; ++c) {
    P.add(unit(2 * R + c, 1.0), lp::Relation::greater_equal, -delta[c]);
    P.add(unit(2 * R + c, 1.0), lp::Relation::less_equal, delta[c]);
  }
  // q_r - p_r = sum_k P(T_j = k) sum_l theta^r_{jkl} delta_kl.
  for (std::size_t r = 0; r < R; ++r) {
    std::vector<double> row(n, 0.0);
    row[R + r] = 1.0;
    row[r] = -1.0;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l)
        row[2 * R + k * L + l] = -m.type_prob(jj, k) * m.theta(jj, k, l, static_cast<Rating>(r + 1));
    P.add(std::move(row), lp::Relation::equal, 0.0);
  }
  if (tighten) {
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> row(n, 0.0);
      for (std::size_t l = 0; l < L; ++l) row[2 * R + k * L + l] = 1.0;
      P.add(std::move(row), lp::Relation::equal, 0.0);
    }
  }
  return out;
}

/// Maximum increase of target j's mean rating (the maximum decrease has the same magnitude).
inline double mean_change_bound_lp(const McvqModel& m, ItemIndex j, std::span<const double> delta, bool tighten = false) {
  auto lp_spec = build_mean_change_lp(m, j, delta, tighten);
  auto sol = lp::solve(lp_spec.program);
  if (sol.status != lp::Status::optimal)
    throw Error(ErrorCode::internal, "mean-change LP did not reach an optimum for target " + std::to_string(j));
  return std::clamp(sol.objective, 0.0, static_cast<double>(m.rho() - 1));
}

inline double mean_change_bound_lp(const McvqModel& m, ItemIndex j, ItemIndex q, Rating r,
                                   const AttitudeShiftBounds& delta, bool tighten = false) {
  require(j != q, ErrorCode::contract, "mean_change_bound_lp: target equals query");
  return mean_change_bound_lp(m, j, delta.block(static_cast<std::size_t>(q), r), tighten);
}

struct IterativeBound {
  double value = 0.0;
  /// L1 norm of the rating-distribution change at the greedy optimum. When it is at most 2
  /// the greedy point is LP-feasible and the value equals the LP optimum.
  double rating_change_l1 = 0.0;
};

/// O(KL rho) bound: in weighted coordinates y_kl = P(T_j = k) delta_kl the LP objective is
/// sum m_jkl y_kl with m_jkl the mean rating of attitude l. Dropping the L1 coupling between p
/// and q leaves |y_kl| <= P(T_j = k) Delta_kl and sum y = 0, solved by moving budget from the
/// lowest-mean attitudes to the highest-mean ones.
inline IterativeBound mean_change_bound_iterative_detail(const McvqModel& m, ItemIndex j, std::span<const double> delta) {
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  const auto R = static_cast<std::size_t>(m.rho());
  const auto jj = static_cast<std::size_t>(j);
  std::vector<double> mean(K * L, 0.0), cap(K * L), y(K * L);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < L; ++l) {
      for (Rating r = 1; r <= m.rho(); ++r) mean[k * L + l] += r * m.theta(jj, k, l, r);
      cap[k * L + l] = m.type_prob(jj, k) * delta[k * L + l];
      y[k * L + l] = -cap[k * L + l];
    }
  std::vector<std::size_t> order(K * L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  double need = std::accumulate(cap.begin(), cap.end(), 0.0);
  for (std::size_t c : order) {
    if (need <= 0.0) break;
    const double raise = std::min(2.0 * cap[c], need);
    y[c] += raise;
    need -= raise;
  }
  IterativeBound out;
  for (std::size_t c = 0; c < K * L; ++c) out.value += mean[c] * y[c];
  out.value = std::clamp(out.value, 0.0, static_cast<double>(m.rho() - 1));
  std::vector<double> d(R, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t r = 0; r < R; ++r) d[r] += y[k * L + l] * m.theta(jj, k, l, static_cast<Rating>(r + 1));
  for (double v : d) out.rating_change_l1 += std::abs(v);
  return out;
}

inline double mean_change_bound_iterative(const McvqModel& m, ItemIndex j, std::span<const double> delta) {
  return mean_change_bound_iterative_detail(m, j, delta).value;
}

inline double mean_change_bound_iterative(const McvqModel& m, ItemIndex j, ItemIndex q, Rating r,
                                          const AttitudeShiftBounds& delta) {
  return mean_change_bound_iterative(m, j, delta.block(static_cast<std::size_t>(q), r));
}

/// sum_k P(T_j = k) sum_l Delta_kl (m_jkl - 1): the bound obtained by pushing absolute values
/// through the rating-distribution change before any LP.
inline double coarse_mean_change_bound(const McvqModel& m, ItemIndex j, std::span<const double> delta) {
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  const auto jj = static_cast<std::size_t>(j);
  double v = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < L; ++l) {
      double mean = 0.0;
      for (Rating r = 1; r <= m.rho(); ++r) mean += r * m.theta(jj, k, l, r);
      v += m.type_prob(jj, k) * delta[k * L + l] * (mean - 1.0);
    }
  return v;
}

inline AttitudeShiftBounds compute_attitude_shift_bounds(const McvqModel& m, const BoundOptions& opt = {}) {
  AttitudeShiftBounds t;
  t.n_items = m.n_items();
  t.n_types = m.n_types();
  t.n_attitudes = m.n_attitudes();
  t.rho = m.rho();
  t.values.assign(t.n_items * static_cast<std::size_t>(t.rho) * t.n_types * t.n_attitudes, 0.0);
  t.paths.assign(t.values.size(), static_cast<std::uint8_t>(BoundPath::closed_form));
  const std::size_t K = t.n_types, L = t.n_attitudes;
  parallel_for(t.n_items, opt.threads, [&](std::size_t q) {
    std::mt19937_64 rng(opt.audit_seed ^ (0x9e3779b97f4a7c15ULL * (q + 1)));
    std::gamma_distribution<double> gam(0.5, 1.0);
    std::vector<double> row(L);
    for (Rating r = 1; r <= t.rho; ++r)
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t l = 0; l < L; ++l)
          t.values[t.index(q, r, k, l)] = attitude_shift_bound(m, static_cast<ItemIndex>(q), r, k, l, opt.contrast);
        if (opt.audit_samples == 0) continue;
        // Audit: the largest shift seen on random rows and by direct maximization. Any excess
        // over the closed form moves the entry to the numeric path.
        std::vector<double> seen(L, 0.0);
        for (std::size_t s = 0; s < opt.audit_samples; ++s) {
          for (double& x : row) x = gam(rng) + 1e-300;
          normalize(row);
          for (std::size_t l = 0; l < L; ++l)
            seen[l] = std::max(seen[l], realized_attitude_shift(m, static_cast<ItemIndex>(q), r, k, l, row));
        }
        for (std::size_t l = 0; l < L; ++l) {
          const std::size_t idx = t.index(q, r, k, l);
          const double numeric = numeric_attitude_shift_sup(m, static_cast<ItemIndex>(q), r, k, l, 8, opt.audit_seed + idx);
          const double best = std::max(seen[l], numeric);
          if (best > t.values[idx] + 1e-12) {
            t.values[idx] = std::min(best, 1.0);
            t.paths[idx] = static_cast<std::uint8_t>(BoundPath::numeric);
          }
        }
      }
  });
  return t;
}

/// Offline, user-independent tables for every (q, r, k, l) and (j, q, r). Entries with j == q are
/// filled by the same LP for uniformity; pruning never reads them.
inline BoundTables precompute_bound_tables(const McvqModel& m, const BoundOptions& opt = {}) {
  BoundTables out;
  out.tighten = opt.tighten;
  out.contrast = opt.contrast;
  out.shift = compute_attitude_shift_bounds(m, opt);
  const std::size_t M = m.n_items();
  out.mean_change.n_items = M;
  out.mean_change.rho = m.rho();
  out.mean_change.values.assign(M * M * static_cast<std::size_t>(m.rho()), 0.0);
  parallel_for(M, opt.threads, [&](std::size_t j) {
    for (std::size_t q = 0; q < M; ++q)
      for (Rating r = 1; r <= m.rho(); ++r)
        out.mean_change.at(j, q, r) =
            mean_change_bound_lp(m, static_cast<ItemIndex>(j), out.shift.block(q, r), opt.tighten);
  });
  return out;
}

enum class PruneMode {
  /// Expected form: V_j* - sum_r P(r) D^{qr}_j* > V_j + sum_r P(r) D^{qr}_j.
  expected,
  /// Per response: min_r (V_j* - D^{qr}_j*) > max_r (V_j + D^{qr}_j). Sound for every response.
  per_response,
};

/// Targets whose posterior need not be computed when evaluating query q. `means` holds current
/// posterior means indexed by item, `query_pred` is P(R_q = r). `reference` is the item whose
/// post-query mean the pruned targets cannot beat; it is never pruned. Ties are kept.
inline std::vector<ItemIndex> prune_targets(std::span<const double> means, const RatingPosterior& query_pred,
                                            ItemIndex q, ItemIndex reference, std::span<const ItemIndex> targets,
                                            const MeanChangeBounds& tables, PruneMode mode) {
  const int rho = tables.rho;
  const auto qq = static_cast<std::size_t>(q), ref = static_cast<std::size_t>(reference);
  auto expected_delta = [&](std::size_t j) {
    double v = 0.0;
    for (Rating r = 1; r <= rho; ++r) v += query_pred.probs[static_cast<std::size_t>(r - 1)] * tables.at(j, qq, r);
    return v;
  };
  auto extreme_delta = [&](std::size_t j) {
    double v = 0.0;
    for (Rating r = 1; r <= rho; ++r) v = std::max(v, tables.at(j, qq, r));
    return v;
  };
  const double ref_floor =
      means[ref] - (mode == PruneMode::expected ? expected_delta(ref) : extreme_delta(ref));
  std::vector<ItemIndex> pruned;
  for (ItemIndex j : targets) {
    if (j == reference || j == q) continue;
    const auto jj = static_cast<std::size_t>(j);
    const double ceiling = means[jj] + (mode == PruneMode::expected ? expected_delta(jj) : extreme_delta(jj));
    if (ref_floor > ceiling) pruned.push_back(j);
  }
  return pruned;
}

// ---------------------------------------------------------------------------------------------
// Bound-table file (binary, little-endian host order):
//   magic "ACFB", u32 version = 1,
//   u32 M, u32 K, u32 L, u32 rho, u8 tighten, u8 contrast policy, u16 reserved,
//   f64 shift[M*rho*K*L], u8 path[M*rho*K*L], f64 mean_change[M*M*rho],
//   u64 fnv1a64 of all preceding bytes.

namespace detail {

template <class T>
void put(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(std::string_view in, std::size_t& pos) {
  require(pos + sizeof(T) <= in.size(), ErrorCode::parse, "bound table: truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string serialize_bound_tables(const BoundTables& t) {
  std::string out = "ACFB";
  detail::put<std::uint32_t>(out, 1);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shift.n_items));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shift.n_types));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shift.n_attitudes));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shift.rho));
  detail::put<std::uint8_t>(out, t.tighten ? 1 : 0);
  detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.contrast));
  detail::put<std::uint16_t>(out, 0);
  for (double v : t.shift.values) detail::put(out, v);
  for (auto p : t.shift.paths) detail::put(out, p);
  for (double v : t.mean_change.values) detail::put(out, v);
  detail::put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

inline BoundTables deserialize_bound_tables(std::string_view in) {
  require(in.size() >= 4 + 8 && in.substr(0, 4) == "ACFB", ErrorCode::parse, "bound table: bad magic");
  const std::size_t body = in.size() - 8;
  std::size_t pos = body;
  require(detail::take<std::uint64_t>(in, pos) == fnv1a64(in.substr(0, body)), ErrorCode::parse,
          "bound table: checksum mismatch");
  pos = 4;
  require(detail::take<std::uint32_t>(in, pos) == 1, ErrorCode::parse, "bound table: unsupported version");
  BoundTables t;
  t.shift.n_items = detail::take<std::uint32_t>(in, pos);
  t.shift.n_types = detail::take<std::uint32_t>(in, pos);
  t.shift.n_attitudes = detail::take<std::uint32_t>(in, pos);
  t.shift.rho = static_cast<int>(detail::take<std::uint32_t>(in, pos));
  t.tighten = detail::take<std::uint8_t>(in, pos) != 0;
  t.contrast = static_cast<ContrastPolicy>(detail::take<std::uint8_t>(in, pos));
  detail::take<std::uint16_t>(in, pos);
  const std::size_t ns = t.shift.n_items * static_cast<std::size_t>(t.shift.rho) * t.shift.n_types * t.shift.n_attitudes;
  const std::size_t nm = t.shift.n_items * t.shift.n_items * static_cast<std::size_t>(t.shift.rho);
  require(body - pos == ns * 9 + nm * 8, ErrorCode::parse, "bound table: size does not match dimensions");
  t.shift.values.resize(ns);
  t.shift.paths.resize(ns);
  for (auto& v : t.shift.values) v = detail::take<double>(in, pos);
  for (auto& p : t.shift.paths) p = detail::take<std::uint8_t>(in, pos);
  t.mean_change.n_items = t.shift.n_items;
  t.mean_change.rho = t.shift.rho;
  t.mean_change.values.resize(nm);
  for (auto& v : t.mean_change.values) v = detail::take<double>(in, pos);
  return t;
}

inline void save_bound_tables(const std::string& path, const BoundTables& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  const auto bytes = serialize_bound_tables(t);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline BoundTables load_bound_tables(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "bound tables not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_bound_tables(ss.str());
}

}  // namespace acf
