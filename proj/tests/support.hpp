#pragma once

// Random instance generators and direct-formula oracles shared by the unit and acceptance
// suites. The oracles re-derive every quantity from the raw parameter arrays in linear space,
// without touching the library's cached brackets or log-space accumulation.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "acf/mcvq.hpp"
#include "acf/naive_bayes.hpp"

namespace acf::testing {

inline std::vector<double> dirichlet_row(std::mt19937_64& rng, std::size_t n, double alpha = 1.0) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += (x = g(rng) + 1e-6);
  for (auto& x : v) x /= s;
  return v;
}

inline std::vector<double> dirichlet_rows(std::mt19937_64& rng, std::size_t rows, std::size_t n, double alpha = 1.0) {
  std::vector<double> out;
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = dirichlet_row(rng, n, alpha);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

inline McvqModel random_mcvq(std::mt19937_64& rng, std::size_t M, std::size_t K, std::size_t L, int rho,
                             double alpha = 1.0) {
  return McvqModel::from_multinomials(M, K, L, rho, dirichlet_rows(rng, M, K, alpha), dirichlet_rows(rng, K, L, alpha),
                                      dirichlet_rows(rng, M * K * L, static_cast<std::size_t>(rho), alpha));
}

inline McvqModel random_gaussian_mcvq(std::mt19937_64& rng, std::size_t M, std::size_t K, std::size_t L, int rho) {
  std::uniform_real_distribution<double> mean(1.0, rho), var(0.1, 1.5);
  std::vector<double> mu(M * K * L), vv(M * K * L);
  for (auto& x : mu) x = mean(rng);
  for (auto& x : vv) x = var(rng);
  return McvqModel::from_gaussians(M, K, L, rho, dirichlet_rows(rng, M, K), dirichlet_rows(rng, K, L), mu, vv);
}

inline NaiveBayesModel random_nb(std::mt19937_64& rng, std::size_t M, std::size_t C, int rho) {
  return NaiveBayesModel(M, C, rho, dirichlet_row(rng, C), dirichlet_rows(rng, M * C, static_cast<std::size_t>(rho)));
}

/// Random observation set of `n` distinct items.
inline Observations random_observations(std::mt19937_64& rng, std::size_t M, int rho, std::size_t n) {
  std::vector<ItemIndex> items(M);
  for (std::size_t j = 0; j < M; ++j) items[j] = static_cast<ItemIndex>(j);
  std::shuffle(items.begin(), items.end(), rng);
  std::uniform_int_distribution<int> r(1, rho);
  Observations o(M);
  for (std::size_t i = 0; i < n && i < M; ++i) o.add(items[i], r(rng));
  return o;
}

namespace oracle {

/// Bracket factor with the cross-VQ mixture taken at the attitude prior.
inline double bracket(const McvqModel& m, std::size_t j, Rating r, std::size_t k, std::size_t l) {
  double f = 0.0;
  for (std::size_t k2 = 0; k2 < m.n_types(); ++k2) {
    if (k2 == k) continue;
    double inner = 0.0;
    for (std::size_t l2 = 0; l2 < m.n_attitudes(); ++l2) inner += m.attitude_prior(k2, l2) * m.theta(j, k2, l2, r);
    f += m.type_prob(j, k2) * inner;
  }
  return f + m.type_prob(j, k) * m.theta(j, k, l, r);
}

/// P(A_k = l | r_kappa) = alpha prod_j bracket * prior, in linear space.
inline std::vector<double> attitudes(const McvqModel& m, const Observations& o) {
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  std::vector<double> post(K * L);
  for (std::size_t k = 0; k < K; ++k) {
    double z = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      double v = m.attitude_prior(k, l);
      for (ItemIndex j : o.order()) v *= bracket(m, static_cast<std::size_t>(j), o.rating(j), k, l);
      post[k * L + l] = v;
      z += v;
    }
    for (std::size_t l = 0; l < L; ++l) post[k * L + l] /= z;
  }
  return post;
}

inline std::vector<double> rating_probs(const McvqModel& m, const std::vector<double>& post, std::size_t j) {
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  std::vector<double> p(static_cast<std::size_t>(m.rho()), 0.0);
  for (int r = 1; r <= m.rho(); ++r)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l)
        p[static_cast<std::size_t>(r - 1)] += m.type_prob(j, k) * post[k * L + l] * m.theta(j, k, l, r);
  return p;
}

/// The expanded one-step posterior of target j after response r_q to q.
inline std::vector<double> after_response(const McvqModel& m, const std::vector<double>& post, std::size_t q,
                                          Rating rq, std::size_t j) {
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  std::vector<double> p(static_cast<std::size_t>(m.rho()), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double z = 0.0;
    for (std::size_t l = 0; l < L; ++l) z += post[k * L + l] * bracket(m, q, rq, k, l);
    for (std::size_t l = 0; l < L; ++l) {
      const double w = m.type_prob(j, k) * post[k * L + l] * bracket(m, q, rq, k, l) / z;
      for (int r = 1; r <= m.rho(); ++r) p[static_cast<std::size_t>(r - 1)] += w * m.theta(j, k, l, r);
    }
  }
  return p;
}

inline std::vector<double> nb_posterior(const NaiveBayesModel& m, const Observations& o) {
  std::vector<double> post(m.n_components());
  double z = 0.0;
  for (std::size_t c = 0; c < m.n_components(); ++c) {
    double v = m.mixing(c);
    for (ItemIndex j : o.order()) v *= m.phi(static_cast<std::size_t>(j), c, o.rating(j));
    post[c] = v;
    z += v;
  }
  for (auto& v : post) v /= z;
  return post;
}

inline std::vector<double> nb_rating_probs(const NaiveBayesModel& m, const std::vector<double>& post, std::size_t j) {
  std::vector<double> p(static_cast<std::size_t>(m.rho()), 0.0);
  for (std::size_t c = 0; c < m.n_components(); ++c)
    for (int r = 1; r <= m.rho(); ++r) p[static_cast<std::size_t>(r - 1)] += post[c] * m.phi(j, c, r);
  return p;
}

inline double mean_of(const std::vector<double>& p) {
  double v = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) v += static_cast<double>(i + 1) * p[i];
  return v;
}

}  // namespace oracle

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? d : INFINITY;
}

}  // namespace acf::testing
