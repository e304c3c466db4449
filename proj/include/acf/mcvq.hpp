#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "acf/error.hpp"
#include "acf/model.hpp"
#include "acf/util.hpp"

namespace acf {

/// Gaussian rating density binned onto 1..rho with half-integer edges. The outer bins absorb
/// the tails. var == 0 is a point mass at the clamped, rounded mean.
inline std::vector<double> bin_gaussian(double mean, double var, int rho) {
  require(rho >= 1, ErrorCode::validation, "rho must be >= 1");
  require(var >= 0.0 && std::isfinite(var), ErrorCode::validation, "variance must be finite and >= 0");
  require(std::isfinite(mean), ErrorCode::validation, "mean must be finite");
  std::vector<double> p(static_cast<std::size_t>(rho), 0.0);
  if (rho == 1) {
    p[0] = 1.0;
    return p;
  }
  if (var == 0.0) {
    double r = std::clamp(std::round(mean), 1.0, static_cast<double>(rho));
    p[static_cast<std::size_t>(r) - 1] = 1.0;
    return p;
  }
  const double scale = std::sqrt(2.0 * var);
  // P(X <= x) and P(X > x) via erfc so that both tails keep full relative precision.
  auto lower = [&](double x) { return 0.5 * std::erfc(-(x - mean) / scale); };
  auto upper = [&](double x) { return 0.5 * std::erfc((x - mean) / scale); };
  auto mass = [&](double a, double b) {
    if (a >= mean) return upper(a) - upper(b);
    if (b <= mean) return lower(b) - lower(a);
    return 1.0 - lower(a) - upper(b);
  };
  p[0] = lower(1.5);
  for (int r = 2; r < rho; ++r) p[static_cast<std::size_t>(r) - 1] = mass(r - 0.5, r + 0.5);
  p[static_cast<std::size_t>(rho) - 1] = upper(rho - 0.5);
  for (double& x : p) x = std::max(x, 0.0);
  normalize(p);
  return p;
}

/// How the cross-VQ term of the attitude update weighs the other VQs' attitudes.
enum class AttitudeConvention {
  /// Other VQs enter at the model's attitude priors. User-independent factors, order-independent
  /// updates, and batch == incremental.
  fixed_prior,
  /// Other VQs enter at the user's current posteriors. A batch update iterates to a fixed point.
  current_posterior,
};

class McvqModel;

/// A user's observed ratings and the per-VQ attitude posterior P(A_k = l | r_kappa).
class UserState {
 public:
  UserState() = default;

  const Observations& observations() const { return obs_; }
  std::size_t n_types() const { return n_types_; }
  std::size_t n_attitudes() const { return n_attitudes_; }

  double attitude(std::size_t k, std::size_t l) const { return posterior_[k * n_attitudes_ + l]; }
  const std::vector<double>& attitude_posterior() const { return posterior_; }
  /// Unnormalized log rows (each row shifted so its max is 0).
  const std::vector<double>& log_weights() const { return log_weights_; }

 private:
  friend class McvqModel;
  friend UserState update_attitudes(const McvqModel&, const Observations&);
  friend UserState incremental_update(const McvqModel&, const UserState&, ItemIndex, Rating);

  Observations obs_;
  std::size_t n_types_ = 0;
  std::size_t n_attitudes_ = 0;
  std::vector<double> log_weights_;
  std::vector<double> posterior_;
};

/// Multiple-cause vector quantization CF model. Items mix over K types; each user holds,
/// per type, a distribution over L attitudes; theta[j,k,l,r] = P(R_j = r | T_j = k, A_k = l).
class McvqModel {
 public:
  using State = UserState;

  McvqModel() = default;

  /// Builds the multinomials by binning each (mean, var) pair.
  static McvqModel from_gaussians(std::size_t n_items, std::size_t n_types, std::size_t n_attitudes, int rho,
                                  std::vector<double> type_dist, std::vector<double> attitude_prior,
                                  std::vector<double> rating_mean, std::vector<double> rating_var) {
    McvqModel m;
    m.init_dims(n_items, n_types, n_attitudes, rho);
    m.type_dist_ = std::move(type_dist);
    m.attitude_prior_ = std::move(attitude_prior);
    m.rating_mean_ = std::move(rating_mean);
    m.rating_var_ = std::move(rating_var);
    require(m.rating_mean_.size() == m.n_cells() && m.rating_var_.size() == m.n_cells(), ErrorCode::validation,
            "rating mean/var arrays must have M*K*L entries");
    m.theta_.assign(m.n_cells() * static_cast<std::size_t>(rho), 0.0);
    for (std::size_t c = 0; c < m.n_cells(); ++c) {
      auto p = bin_gaussian(m.rating_mean_[c], m.rating_var_[c], rho);
      std::copy(p.begin(), p.end(), m.theta_.begin() + static_cast<std::ptrdiff_t>(c * static_cast<std::size_t>(rho)));
    }
    m.binned_ = true;
    m.finish();
    return m;
  }

  /// Uses the given multinomials directly; mean/var are their moments and binned() is false.
  static McvqModel from_multinomials(std::size_t n_items, std::size_t n_types, std::size_t n_attitudes, int rho,
                                     std::vector<double> type_dist, std::vector<double> attitude_prior,
                                     std::vector<double> theta) {
    McvqModel m;
    m.init_dims(n_items, n_types, n_attitudes, rho);
    m.type_dist_ = std::move(type_dist);
    m.attitude_prior_ = std::move(attitude_prior);
    m.theta_ = std::move(theta);
    require(m.theta_.size() == m.n_cells() * static_cast<std::size_t>(rho), ErrorCode::validation,
            "theta must have M*K*L*rho entries");
    m.rating_mean_.assign(m.n_cells(), 0.0);
    m.rating_var_.assign(m.n_cells(), 0.0);
    for (std::size_t c = 0; c < m.n_cells(); ++c) {
      double mu = 0.0, sq = 0.0;
      for (int r = 1; r <= rho; ++r) {
        double p = m.theta_[c * static_cast<std::size_t>(rho) + static_cast<std::size_t>(r - 1)];
        mu += r * p;
        sq += r * r * p;
      }
      m.rating_mean_[c] = mu;
      m.rating_var_[c] = std::max(0.0, sq - mu * mu);
    }
    m.binned_ = false;
    m.finish();
    return m;
  }

  std::size_t n_items() const { return n_items_; }
  std::size_t n_types() const { return n_types_; }
  std::size_t n_attitudes() const { return n_attitudes_; }
  int rho() const { return rho_; }
  bool binned() const { return binned_; }

  AttitudeConvention convention() const { return convention_; }
  void set_convention(AttitudeConvention c) { convention_ = c; }

  double type_prob(std::size_t j, std::size_t k) const { return type_dist_[j * n_types_ + k]; }
  double attitude_prior(std::size_t k, std::size_t l) const { return attitude_prior_[k * n_attitudes_ + l]; }
  double rating_mean(std::size_t j, std::size_t k, std::size_t l) const { return rating_mean_[cell(j, k, l)]; }
  double rating_var(std::size_t j, std::size_t k, std::size_t l) const { return rating_var_[cell(j, k, l)]; }
  /// theta^r_{jkl}, r in 1..rho.
  double theta(std::size_t j, std::size_t k, std::size_t l, Rating r) const {
    return theta_[cell(j, k, l) * static_cast<std::size_t>(rho_) + static_cast<std::size_t>(r - 1)];
  }

  const std::vector<double>& type_dist() const { return type_dist_; }
  const std::vector<double>& attitude_prior() const { return attitude_prior_; }
  const std::vector<double>& rating_means() const { return rating_mean_; }
  const std::vector<double>& rating_vars() const { return rating_var_; }
  const std::vector<double>& rating_multinomials() const { return theta_; }

  /// Bracket factor of the attitude update under the fixed-prior convention:
  /// sum_{k' != k} P(T_j = k') sum_{l'} P(A_k' = l') theta^r_{jk'l'} + P(T_j = k) theta^r_{jkl},
  /// with theta floored. It does not depend on the user.
  double prior_bracket(std::size_t j, Rating r, std::size_t k, std::size_t l) const {
    return prior_bracket_[((j * static_cast<std::size_t>(rho_) + static_cast<std::size_t>(r - 1)) * n_types_ + k) *
                              n_attitudes_ + l];
  }

  /// Cross-VQ part F of the fixed-prior bracket for (j, r, k).
  double prior_cross_term(std::size_t j, Rating r, std::size_t k) const {
    return prior_cross_[(j * static_cast<std::size_t>(rho_) + static_cast<std::size_t>(r - 1)) * n_types_ + k];
  }

  UserState initial_state() const {
    UserState s;
    s.obs_ = Observations(n_items_);
    s.n_types_ = n_types_;
    s.n_attitudes_ = n_attitudes_;
    s.log_weights_.resize(n_types_ * n_attitudes_);
    for (std::size_t i = 0; i < s.log_weights_.size(); ++i) s.log_weights_[i] = std::log(attitude_prior_[i]);
    renormalize(s);
    return s;
  }

  RatingPosterior predict(const UserState& s, ItemIndex j) const;
  UserState observe(const UserState& s, ItemIndex j, Rating r) const;

  /// Throws validation errors if any distribution is off the simplex (tolerance 1e-9).
  void validate() const {
    auto check_rows = [](const std::vector<double>& v, std::size_t width, const char* what) {
      for (std::size_t row = 0; row * width < v.size(); ++row) {
        double s = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
          double x = v[row * width + i];
          require(x >= 0.0 && std::isfinite(x), ErrorCode::validation, std::string(what) + " has a negative entry");
          s += x;
        }
        require(std::abs(s - 1.0) <= 1e-9, ErrorCode::validation,
                std::string(what) + " row " + std::to_string(row) + " does not sum to 1");
      }
    };
    check_rows(type_dist_, n_types_, "type_dist");
    check_rows(attitude_prior_, n_attitudes_, "attitude_prior");
    check_rows(theta_, static_cast<std::size_t>(rho_), "rating_multinomial");
    for (double v : rating_var_) require(v >= 0.0, ErrorCode::validation, "negative rating variance");
  }

  /// Unnormalized log bracket factor for observing (j, r) in VQ k at attitude l, where the other
  /// VQs are weighted by `others` (K x L row-major; attitude priors or current posteriors).
  double log_bracket(std::size_t j, Rating r, std::size_t k, std::size_t l, const std::vector<double>& others) const {
    double cross = 0.0;
    for (std::size_t k2 = 0; k2 < n_types_; ++k2) {
      if (k2 == k) continue;
      double mix = 0.0;
      for (std::size_t l2 = 0; l2 < n_attitudes_; ++l2)
        mix += others[k2 * n_attitudes_ + l2] * floored_theta(j, k2, l2, r);
      cross += type_prob(j, k2) * mix;
    }
    return std::log(cross + type_prob(j, k) * floored_theta(j, k, l, r));
  }

  double floored_theta(std::size_t j, std::size_t k, std::size_t l, Rating r) const {
    return std::max(theta(j, k, l, r), kProbabilityFloor);
  }

  friend bool operator==(const McvqModel& a, const McvqModel& b) {
    return a.n_items_ == b.n_items_ && a.n_types_ == b.n_types_ && a.n_attitudes_ == b.n_attitudes_ &&
           a.rho_ == b.rho_ && a.binned_ == b.binned_ && a.type_dist_ == b.type_dist_ &&
           a.attitude_prior_ == b.attitude_prior_ && a.rating_mean_ == b.rating_mean_ &&
           a.rating_var_ == b.rating_var_ && a.theta_ == b.theta_;
  }

  /// Normalizes the log rows of s into its posterior; throws if a row has no finite entry.
  void renormalize(UserState& s) const {
    s.posterior_.assign(s.log_weights_.size(), 0.0);
    for (std::size_t k = 0; k < n_types_; ++k) {
      double* row = s.log_weights_.data() + k * n_attitudes_;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < n_attitudes_; ++l) mx = std::max(mx, row[l]);
      if (!std::isfinite(mx))
        throw Error(ErrorCode::degeneracy, "attitude posterior for VQ " + std::to_string(k) + " underflowed to zero");
      double total = 0.0;
      for (std::size_t l = 0; l < n_attitudes_; ++l) {
        row[l] -= mx;
        total += std::exp(row[l]);
      }
      for (std::size_t l = 0; l < n_attitudes_; ++l) s.posterior_[k * n_attitudes_ + l] = std::exp(row[l]) / total;
    }
  }

 private:
  std::size_t cell(std::size_t j, std::size_t k, std::size_t l) const { return (j * n_types_ + k) * n_attitudes_ + l; }
  std::size_t n_cells() const { return n_items_ * n_types_ * n_attitudes_; }

  void init_dims(std::size_t n_items, std::size_t n_types, std::size_t n_attitudes, int rho) {
    require(n_items > 0 && n_types > 0 && n_attitudes > 0 && rho > 0, ErrorCode::validation,
            "model dimensions must be positive");
    n_items_ = n_items;
    n_types_ = n_types;
    n_attitudes_ = n_attitudes;
    rho_ = rho;
  }

  void finish() {
    require(type_dist_.size() == n_items_ * n_types_, ErrorCode::validation, "type_dist must have M*K entries");
    require(attitude_prior_.size() == n_types_ * n_attitudes_, ErrorCode::validation,
            "attitude_prior must have K*L entries");
    validate();
    const auto R = static_cast<std::size_t>(rho_);
    prior_cross_.assign(n_items_ * R * n_types_, 0.0);
    prior_bracket_.assign(n_items_ * R * n_types_ * n_attitudes_, 0.0);
    for (std::size_t j = 0; j < n_items_; ++j) {
      for (Rating r = 1; r <= rho_; ++r) {
        const std::size_t base = j * R + static_cast<std::size_t>(r - 1);
        for (std::size_t k = 0; k < n_types_; ++k) {
          double cross = 0.0;
          for (std::size_t k2 = 0; k2 < n_types_; ++k2) {
            if (k2 == k) continue;
            double mix = 0.0;
            for (std::size_t l2 = 0; l2 < n_attitudes_; ++l2)
              mix += attitude_prior(k2, l2) * floored_theta(j, k2, l2, r);
            cross += type_prob(j, k2) * mix;
          }
          prior_cross_[base * n_types_ + k] = cross;
          for (std::size_t l = 0; l < n_attitudes_; ++l)
            prior_bracket_[(base * n_types_ + k) * n_attitudes_ + l] = cross + type_prob(j, k) * floored_theta(j, k, l, r);
        }
      }
    }
  }

  std::size_t n_items_ = 0, n_types_ = 0, n_attitudes_ = 0;
  int rho_ = 0;
  bool binned_ = false;
  AttitudeConvention convention_ = AttitudeConvention::fixed_prior;
  std::vector<double> type_dist_, attitude_prior_, rating_mean_, rating_var_, theta_;
  std::vector<double> prior_cross_, prior_bracket_;
};

/// P(R_j = r | r_kappa) = sum_k P(T_j = k) sum_l P(A_k = l | r_kappa) theta^r_{jkl}.
inline RatingPosterior rating_posterior(const McvqModel& m, const UserState& u, ItemIndex j) {
  require(j >= 0 && static_cast<std::size_t>(j) < m.n_items(), ErrorCode::contract, "item index out of range");
  require(!u.observations().contains(j), ErrorCode::contract,
          "rating_posterior: item " + std::to_string(j) + " is already observed");
  const auto jj = static_cast<std::size_t>(j);
  std::vector<double> probs(static_cast<std::size_t>(m.rho()), 0.0);
  for (std::size_t k = 0; k < m.n_types(); ++k) {
    const double tk = m.type_prob(jj, k);
    if (tk == 0.0) continue;
    for (std::size_t l = 0; l < m.n_attitudes(); ++l) {
      const double w = tk * u.attitude(k, l);
      for (Rating r = 1; r <= m.rho(); ++r) probs[static_cast<std::size_t>(r - 1)] += w * m.theta(jj, k, l, r);
    }
  }
  return RatingPosterior::from_probs(std::move(probs));
}

namespace detail {

inline void check_rating(const McvqModel& m, ItemIndex j, Rating r) {
  require(j >= 0 && static_cast<std::size_t>(j) < m.n_items(), ErrorCode::contract,
          "item index " + std::to_string(j) + " out of range");
  require(r >= 1 && r <= m.rho(), ErrorCode::validation,
          "rating " + std::to_string(r) + " outside 1.." + std::to_string(m.rho()));
}

}  // namespace detail

/// Attitude posteriors from scratch for the observed ratings. Under the fixed-prior convention
/// this is the closed-form product; under current_posterior it iterates to a fixed point.
inline UserState update_attitudes(const McvqModel& m, const Observations& observed) {
  require(observed.n_items() == m.n_items(), ErrorCode::contract, "observation set sized for a different model");
  UserState s = m.initial_state();
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  for (ItemIndex j : observed.order()) {
    detail::check_rating(m, j, observed.rating(j));
    s.obs_.add(j, observed.rating(j));
  }
  auto accumulate = [&](const std::vector<double>* others) {
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l) s.log_weights_[k * L + l] = std::log(m.attitude_prior(k, l));
    for (ItemIndex j : observed.order()) {
      const auto jj = static_cast<std::size_t>(j);
      const Rating r = observed.rating(j);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < L; ++l)
          s.log_weights_[k * L + l] +=
              others ? m.log_bracket(jj, r, k, l, *others) : std::log(m.prior_bracket(jj, r, k, l));
    }
    m.renormalize(s);
  };
  if (m.convention() == AttitudeConvention::fixed_prior) {
    accumulate(nullptr);
    return s;
  }
  accumulate(nullptr);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> prev = s.posterior_;
    accumulate(&prev);
    double change = 0.0;
    for (std::size_t i = 0; i < prev.size(); ++i) change = std::max(change, std::abs(prev[i] - s.posterior_[i]));
    if (change < 1e-13) break;
  }
  return s;
}

/// Adds one observation by multiplying a single bracket factor into each VQ row.
inline UserState incremental_update(const McvqModel& m, const UserState& u, ItemIndex q, Rating r_q) {
  detail::check_rating(m, q, r_q);
  require(!u.observations().contains(q), ErrorCode::contract,
          "incremental_update: item " + std::to_string(q) + " is already observed");
  UserState s = u;
  s.obs_.add(q, r_q);
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  const auto qq = static_cast<std::size_t>(q);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < L; ++l)
      s.log_weights_[k * L + l] += m.convention() == AttitudeConvention::fixed_prior
                                       ? std::log(m.prior_bracket(qq, r_q, k, l))
                                       : m.log_bracket(qq, r_q, k, l, u.posterior_);
  m.renormalize(s);
  return s;
}

/// P(R_j = r | R_q = r_q, r_kappa): the target's predictive after a hypothesized response.
inline RatingPosterior posterior_after_response(const McvqModel& m, const UserState& u, ItemIndex q, Rating r_q,
                                                ItemIndex j) {
  require(q != j, ErrorCode::contract, "posterior_after_response: query and target must differ");
  require(!u.observations().contains(j), ErrorCode::contract, "posterior_after_response: target already observed");
  return rating_posterior(m, incremental_update(m, u, q, r_q), j);
}

/// Z_k(r_q) = sum_l P(A_k = l | r_kappa) B_kl(r_q), the fixed-prior normalizer of VQ k's row
/// after response r_q. These weights sum to 1 over r_q for each k, and each attitude row is the
/// Z-weighted mixture of its post-response rows. They equal the predictive P(R_q = r_q) at the
/// prior (empty kappa) but not in general.
inline double fixed_prior_response_weight(const McvqModel& m, const UserState& u, ItemIndex q, Rating r_q,
                                          std::size_t k) {
  detail::check_rating(m, q, r_q);
  double z = 0.0;
  for (std::size_t l = 0; l < m.n_attitudes(); ++l)
    z += u.attitude(k, l) * m.prior_bracket(static_cast<std::size_t>(q), r_q, k, l);
  return z;
}

inline RatingPosterior McvqModel::predict(const UserState& s, ItemIndex j) const { return rating_posterior(*this, s, j); }

inline UserState McvqModel::observe(const UserState& s, ItemIndex j, Rating r) const {
  return incremental_update(*this, s, j, r);
}

}  // namespace acf
