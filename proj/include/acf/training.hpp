#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "acf/data.hpp"
#include "acf/error.hpp"
#include "acf/mcvq.hpp"
#include "acf/naive_bayes.hpp"
#include "acf/util.hpp"

namespace acf {

struct TrainConfig {
  std::size_t n_types = 12;       // K
  std::size_t n_attitudes = 4;    // L
  std::size_t n_components = 40;  // C, naive Bayes only
  std::size_t max_iters = 15;
  /// Stop when the relative objective improvement falls below tol (0 disables).
  double tol = 0.0;
  std::uint64_t seed = 0;
  /// Dirichlet pseudo-count added to every multinomial count in the M-step.
  double smoothing = 0.1;
  /// Minimum Gaussian variance. Ratings are integers, so a small floor lets one cell collapse
  /// onto a single rating value and steal mass from its neighbours.
  double var_floor = 0.25;
  /// Coordinate-ascent sweeps over (type responsibilities, attitude posteriors) per E-step.
  std::size_t e_sweeps = 2;
  /// Independent initializations; the run with the best final objective wins.
  std::size_t restarts = 1;
  /// Standard deviation of the noise added to per-item means at initialization.
  double init_noise = 0.75;
  unsigned threads = 1;
};

struct TrainResult {
  std::vector<double> trace;
  /// Iterations whose objective dropped by more than the monotonicity tolerance.
  std::vector<std::size_t> flagged_iterations;
  std::vector<std::string> warnings;
};

struct McvqFit : TrainResult {
  McvqModel model;
};

struct NaiveBayesFit : TrainResult {
  NaiveBayesModel model;
  /// Unpenalized data log-likelihood per iteration (trace adds the Dirichlet log-prior).
  std::vector<double> log_likelihood;
};

namespace detail {

inline std::vector<double> dirichlet(std::mt19937_64& rng, std::size_t n, double alpha) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = std::max(g(rng), 1e-12);
  normalize(v);
  return v;
}

inline double log_gauss(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

inline void check_trainable(const RatingsDataset& d) {
  require(!d.observations.empty(), ErrorCode::validation, "training dataset is empty");
  d.validate();
}

}  // namespace detail

/// Mean-field variational EM for MCVQ with Gaussian rating likelihoods.
///
/// Per user i the variational posterior factorizes as prod_k q(A_ik) prod_j q(T_ij); the
/// objective is the evidence lower bound plus the Dirichlet log-prior of the smoothing counts.
/// The E-step alternates exact block updates of q(T_ij) and q(A_ik), warm-started from the
/// previous iteration, and the M-step is closed form, so the trace never decreases.
inline McvqFit fit_mcvq(const RatingsDataset& d, const TrainConfig& cfg) {
  detail::check_trainable(d);
  require(cfg.n_types > 0 && cfg.n_attitudes > 0 && cfg.max_iters > 0, ErrorCode::validation,
          "K, L and max_iters must be positive");
  require(cfg.smoothing >= 0.0 && cfg.var_floor > 0.0 && cfg.tol >= 0.0, ErrorCode::validation,
          "smoothing, var_floor and tol must be non-negative (var_floor positive)");
  const std::size_t M = d.n_items, K = cfg.n_types, L = cfg.n_attitudes, U = d.n_users;
  const int rho = d.rho;
  const double s = cfg.smoothing;

  std::vector<std::string> warnings;
  {
    std::set<Rating> support;
    for (const auto& o : d.observations) support.insert(o.rating);
    if (K * L > support.size())
      warnings.push_back("K*L = " + std::to_string(K * L) + " exceeds the " + std::to_string(support.size()) +
                         " distinct ratings present");
  }

  const auto rows = d.by_user();
  std::vector<std::size_t> offset(U + 1, 0);
  for (std::size_t u = 0; u < U; ++u) offset[u + 1] = offset[u] + rows[u].size();

  double gmean = 0.0, gvar = 0.0;
  for (const auto& o : d.observations) gmean += o.rating;
  gmean /= static_cast<double>(d.observations.size());
  for (const auto& o : d.observations) gvar += (o.rating - gmean) * (o.rating - gmean);
  gvar = std::max(gvar / static_cast<double>(d.observations.size()), cfg.var_floor);
  std::vector<double> item_sum(M, 0.0), item_n(M, 0.0);
  for (const auto& o : d.observations) {
    item_sum[static_cast<std::size_t>(o.item)] += o.rating;
    item_n[static_cast<std::size_t>(o.item)] += 1.0;
  }

  McvqFit best;
  bool have_best = false;
  for (std::size_t restart = 0; restart < std::max<std::size_t>(cfg.restarts, 1); ++restart) {
    std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ULL * restart);
    std::normal_distribution<double> noise(0.0, cfg.init_noise);
    std::vector<double> T(M * K), A(K * L), mu(M * K * L), var(M * K * L, gvar);
    for (std::size_t j = 0; j < M; ++j) {
      auto row = detail::dirichlet(rng, K, 2.0);
      std::copy(row.begin(), row.end(), T.begin() + static_cast<std::ptrdiff_t>(j * K));
    }
    for (std::size_t k = 0; k < K; ++k) {
      auto row = detail::dirichlet(rng, L, 2.0);
      std::copy(row.begin(), row.end(), A.begin() + static_cast<std::ptrdiff_t>(k * L));
    }
    for (std::size_t j = 0; j < M; ++j) {
      const double base = item_n[j] > 0 ? item_sum[j] / item_n[j] : gmean;
      for (std::size_t c = 0; c < K * L; ++c)
        mu[j * K * L + c] = std::clamp(base + noise(rng), 1.0, static_cast<double>(rho));
    }
    // Variational parameters: attitude posteriors per user (U x K x L), type responsibilities
    // per observation (N x K), both kept across iterations.
    std::vector<double> pi(U * K * L), tau(offset[U] * K, 1.0 / static_cast<double>(K));
    for (std::size_t u = 0; u < U; ++u)
      for (std::size_t k = 0; k < K; ++k) {
        auto row = detail::dirichlet(rng, L, 1.0);
        std::copy(row.begin(), row.end(), pi.begin() + static_cast<std::ptrdiff_t>((u * K + k) * L));
      }

    std::vector<double> g(offset[U] * K * L);  // log N(r_ij; mu_jkl, var_jkl) per observation
    auto fill_g = [&] {
      for (std::size_t u = 0; u < U; ++u)
        for (std::size_t n = 0; n < rows[u].size(); ++n) {
          const auto [j, r] = rows[u][n];
          const std::size_t jj = static_cast<std::size_t>(j), base = (offset[u] + n) * K * L;
          for (std::size_t c = 0; c < K * L; ++c) g[base + c] = detail::log_gauss(r, mu[jj * K * L + c], var[jj * K * L + c]);
        }
    };

    auto update_tau = [&](std::size_t u) {
      std::vector<double> lw(K);
      for (std::size_t n = 0; n < rows[u].size(); ++n) {
        const std::size_t jj = static_cast<std::size_t>(rows[u][n].first), obs = offset[u] + n;
        for (std::size_t k = 0; k < K; ++k) {
          double e = 0.0;
          for (std::size_t l = 0; l < L; ++l) e += pi[(u * K + k) * L + l] * g[obs * K * L + k * L + l];
          lw[k] = std::log(std::max(T[jj * K + k], 1e-300)) + e;
        }
        const double z = log_sum_exp(lw);
        for (std::size_t k = 0; k < K; ++k) tau[obs * K + k] = std::exp(lw[k] - z);
      }
    };
    auto update_pi = [&](std::size_t u) {
      std::vector<double> lw(L);
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t l = 0; l < L; ++l) {
          double e = std::log(std::max(A[k * L + l], 1e-300));
          for (std::size_t n = 0; n < rows[u].size(); ++n) {
            const std::size_t obs = offset[u] + n;
            e += tau[obs * K + k] * g[obs * K * L + k * L + l];
          }
          lw[l] = e;
        }
        const double z = log_sum_exp(lw);
        for (std::size_t l = 0; l < L; ++l) pi[(u * K + k) * L + l] = std::exp(lw[l] - z);
      }
    };
    auto xlogx_ratio = [](double q, double p) { return q > 0.0 ? q * (std::log(std::max(p, 1e-300)) - std::log(q)) : 0.0; };
    auto objective = [&] {
      std::vector<double> per_user(U, 0.0);
      parallel_for(U, cfg.threads, [&](std::size_t u) {
        double v = 0.0;
        for (std::size_t c = 0; c < K * L; ++c) v += xlogx_ratio(pi[u * K * L + c], A[c]);
        for (std::size_t n = 0; n < rows[u].size(); ++n) {
          const std::size_t jj = static_cast<std::size_t>(rows[u][n].first), obs = offset[u] + n;
          for (std::size_t k = 0; k < K; ++k) {
            const double t = tau[obs * K + k];
            v += xlogx_ratio(t, T[jj * K + k]);
            double e = 0.0;
            for (std::size_t l = 0; l < L; ++l) e += pi[(u * K + k) * L + l] * g[obs * K * L + k * L + l];
            v += t * e;
          }
        }
        per_user[u] = v;
      });
      double total = 0.0;
      for (double v : per_user) total += v;
      if (s > 0.0) {
        for (double t : T) total += s * std::log(std::max(t, 1e-300));
        for (double a : A) total += s * std::log(std::max(a, 1e-300));
      }
      return total;
    };

    McvqFit fit;
    fit.warnings = warnings;
    fill_g();
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
      // E-step.
      parallel_for(U, cfg.threads, [&](std::size_t u) {
        for (std::size_t sweep = 0; sweep < std::max<std::size_t>(cfg.e_sweeps, 1); ++sweep) {
          update_tau(u);
          update_pi(u);
        }
      });
      // M-step, accumulated in a fixed order.
      std::vector<double> tcount(M * K, s), acount(K * L, s), w(M * K * L, 0.0), wr(M * K * L, 0.0),
          wrr(M * K * L, 0.0);
      for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t c = 0; c < K * L; ++c) acount[c] += pi[u * K * L + c];
        for (std::size_t n = 0; n < rows[u].size(); ++n) {
          const auto [j, r] = rows[u][n];
          const std::size_t jj = static_cast<std::size_t>(j), obs = offset[u] + n;
          for (std::size_t k = 0; k < K; ++k) {
            const double t = tau[obs * K + k];
            tcount[jj * K + k] += t;
            for (std::size_t l = 0; l < L; ++l) {
              const double wt = t * pi[(u * K + k) * L + l];
              const std::size_t c = jj * K * L + k * L + l;
              w[c] += wt;
              wr[c] += wt * r;
              wrr[c] += wt * r * r;
            }
          }
        }
      }
      for (std::size_t j = 0; j < M; ++j) normalize(std::span<double>(tcount.data() + j * K, K));
      for (std::size_t k = 0; k < K; ++k) normalize(std::span<double>(acount.data() + k * L, L));
      T = std::move(tcount);
      A = std::move(acount);
      for (std::size_t c = 0; c < M * K * L; ++c) {
        if (w[c] < 1e-10) continue;
        const double m1 = wr[c] / w[c];
        const double v = std::max(wrr[c] / w[c] - m1 * m1, 0.0);
        mu[c] = std::clamp(m1, 1.0, static_cast<double>(rho));
        var[c] = std::max(v, cfg.var_floor);
      }
      fill_g();
      const double obj = objective();
      if (!fit.trace.empty() && obj < fit.trace.back() - 1e-6 * std::max(1.0, std::abs(fit.trace.back())))
        fit.flagged_iterations.push_back(iter);
      fit.trace.push_back(obj);
      if (cfg.tol > 0.0 && fit.trace.size() >= 2) {
        const double prev = fit.trace[fit.trace.size() - 2];
        if ((obj - prev) / std::max(std::abs(prev), 1e-300) < cfg.tol) break;
      }
    }
    fit.model = McvqModel::from_gaussians(M, K, L, rho, T, A, mu, var);
    if (!have_best || fit.trace.back() > best.trace.back()) {
      best = std::move(fit);
      have_best = true;
    }
  }
  return best;
}

/// EM for the latent-class mixture with Dirichlet smoothing on mixing weights and phi.
/// The trace is the penalized log-likelihood, which exact EM never decreases.
inline NaiveBayesFit fit_naive_bayes(const RatingsDataset& d, const TrainConfig& cfg) {
  detail::check_trainable(d);
  require(cfg.n_components > 0 && cfg.max_iters > 0, ErrorCode::validation, "C and max_iters must be positive");
  require(cfg.smoothing >= 0.0, ErrorCode::validation, "smoothing must be non-negative");
  const std::size_t M = d.n_items, C = cfg.n_components, U = d.n_users;
  const auto R = static_cast<std::size_t>(d.rho);
  const double s = cfg.smoothing;
  const auto rows = d.by_user();

  NaiveBayesFit best;
  bool have_best = false;
  for (std::size_t restart = 0; restart < std::max<std::size_t>(cfg.restarts, 1); ++restart) {
    std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ULL * restart);
    std::vector<double> resp(U * C);
    for (std::size_t u = 0; u < U; ++u) {
      auto row = detail::dirichlet(rng, C, 1.0);
      std::copy(row.begin(), row.end(), resp.begin() + static_cast<std::ptrdiff_t>(u * C));
    }
    std::vector<double> mix(C), phi(M * C * R);
    auto m_step = [&] {
      std::vector<double> mc(C, s), pc(M * C * R, s);
      for (std::size_t u = 0; u < U; ++u)
        for (std::size_t c = 0; c < C; ++c) {
          const double w = resp[u * C + c];
          mc[c] += w;
          for (const auto& [j, r] : rows[u]) pc[(static_cast<std::size_t>(j) * C + c) * R + static_cast<std::size_t>(r - 1)] += w;
        }
      normalize(mc);
      for (std::size_t i = 0; i < M * C; ++i) {
        std::span<double> row(pc.data() + i * R, R);
        if (normalize(row) <= 0.0)
          for (double& x : row) x = 1.0 / static_cast<double>(R);
      }
      mix = std::move(mc);
      phi = std::move(pc);
    };
    // E-step on the current parameters; returns the data log-likelihood.
    auto e_step = [&] {
      std::vector<double> ll(U, 0.0);
      parallel_for(U, cfg.threads, [&](std::size_t u) {
        std::vector<double> lw(C);
        for (std::size_t c = 0; c < C; ++c) {
          double v = std::log(std::max(mix[c], 1e-300));
          for (const auto& [j, r] : rows[u])
            v += std::log(std::max(phi[(static_cast<std::size_t>(j) * C + c) * R + static_cast<std::size_t>(r - 1)], 1e-300));
          lw[c] = v;
        }
        const double z = log_sum_exp(lw);
        ll[u] = z;
        for (std::size_t c = 0; c < C; ++c) resp[u * C + c] = std::exp(lw[c] - z);
      });
      double total = 0.0;
      for (double v : ll) total += v;
      return total;
    };
    auto log_prior = [&] {
      if (s == 0.0) return 0.0;
      double v = 0.0;
      for (double x : mix) v += s * std::log(std::max(x, 1e-300));
      for (double x : phi) v += s * std::log(std::max(x, 1e-300));
      return v;
    };

    NaiveBayesFit fit;
    m_step();
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
      const double ll = e_step();
      const double obj = ll + log_prior();
      if (!fit.trace.empty() && obj < fit.trace.back() - 1e-9 * std::max(1.0, std::abs(fit.trace.back())))
        fit.flagged_iterations.push_back(iter);
      fit.trace.push_back(obj);
      fit.log_likelihood.push_back(ll);
      if (cfg.tol > 0.0 && fit.trace.size() >= 2) {
        const double prev = fit.trace[fit.trace.size() - 2];
        if ((obj - prev) / std::max(std::abs(prev), 1e-300) < cfg.tol) break;
      }
      if (iter + 1 < cfg.max_iters) m_step();
    }
    fit.model = NaiveBayesModel(M, C, d.rho, mix, phi);
    if (!have_best || fit.trace.back() > best.trace.back()) {
      best = std::move(fit);
      have_best = true;
    }
  }
  return best;
}

}  // namespace acf
