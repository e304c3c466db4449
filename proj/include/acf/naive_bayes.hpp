#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "acf/error.hpp"
#include "acf/model.hpp"
#include "acf/util.hpp"

namespace acf {

class NaiveBayesModel;
class NbUserState;
NbUserState nb_update(const NaiveBayesModel&, const Observations&);

/// Observed ratings plus the posterior over latent user classes.
class NbUserState {
 public:
  const Observations& observations() const { return obs_; }
  const std::vector<double>& component_posterior() const { return posterior_; }
  const std::vector<double>& log_weights() const { return log_weights_; }

 private:
  friend class NaiveBayesModel;
  friend NbUserState nb_update(const NaiveBayesModel&, const Observations&);
  Observations obs_;
  std::vector<double> log_weights_;
  std::vector<double> posterior_;
};

/// Latent-class mixture: P(c) and phi[j,c,r] = P(R_j = r | c).
class NaiveBayesModel {
 public:
  using State = NbUserState;

  NaiveBayesModel() = default;

  NaiveBayesModel(std::size_t n_items, std::size_t n_components, int rho, std::vector<double> mixing,
                  std::vector<double> phi)
      : n_items_(n_items), n_components_(n_components), rho_(rho), mixing_(std::move(mixing)), phi_(std::move(phi)) {
    require(n_items > 0 && n_components > 0 && rho > 0, ErrorCode::validation, "model dimensions must be positive");
    require(mixing_.size() == n_components_, ErrorCode::validation, "mixing must have C entries");
    require(phi_.size() == n_items_ * n_components_ * static_cast<std::size_t>(rho_), ErrorCode::validation,
            "phi must have M*C*rho entries");
    validate();
  }

  std::size_t n_items() const { return n_items_; }
  std::size_t n_components() const { return n_components_; }
  int rho() const { return rho_; }
  double mixing(std::size_t c) const { return mixing_[c]; }
  double phi(std::size_t j, std::size_t c, Rating r) const {
    return phi_[(j * n_components_ + c) * static_cast<std::size_t>(rho_) + static_cast<std::size_t>(r - 1)];
  }
  const std::vector<double>& mixing_weights() const { return mixing_; }
  const std::vector<double>& rating_multinomials() const { return phi_; }

  void validate() const {
    auto check = [](const double* v, std::size_t n, const std::string& what) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        require(v[i] >= 0.0 && std::isfinite(v[i]), ErrorCode::validation, what + " has a negative entry");
        s += v[i];
      }
      require(std::abs(s - 1.0) <= 1e-9, ErrorCode::validation, what + " does not sum to 1");
    };
    check(mixing_.data(), n_components_, "mixing");
    const auto R = static_cast<std::size_t>(rho_);
    for (std::size_t i = 0; i * R < phi_.size(); ++i) check(phi_.data() + i * R, R, "phi row " + std::to_string(i));
  }

  NbUserState initial_state() const {
    NbUserState s;
    s.obs_ = Observations(n_items_);
    s.log_weights_.resize(n_components_);
    for (std::size_t c = 0; c < n_components_; ++c) s.log_weights_[c] = std::log(mixing_[c]);
    renormalize(s);
    return s;
  }

  RatingPosterior predict(const NbUserState& s, ItemIndex j) const;
  NbUserState observe(const NbUserState& s, ItemIndex j, Rating r) const;

  friend bool operator==(const NaiveBayesModel&, const NaiveBayesModel&) = default;

 private:
  friend NbUserState nb_update(const NaiveBayesModel&, const Observations&);

  void check_rating(ItemIndex j, Rating r) const {
    require(j >= 0 && static_cast<std::size_t>(j) < n_items_, ErrorCode::contract, "item index out of range");
    require(r >= 1 && r <= rho_, ErrorCode::validation, "rating " + std::to_string(r) + " out of range");
  }

  void add_factor(NbUserState& s, ItemIndex j, Rating r) const {
    for (std::size_t c = 0; c < n_components_; ++c)
      s.log_weights_[c] += std::log(std::max(phi(static_cast<std::size_t>(j), c, r), kProbabilityFloor));
  }

  static void renormalize(NbUserState& s) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : s.log_weights_) mx = std::max(mx, x);
    if (!std::isfinite(mx)) throw Error(ErrorCode::degeneracy, "component posterior underflowed to zero");
    double total = 0.0;
    for (double& x : s.log_weights_) {
      x -= mx;
      total += std::exp(x);
    }
    s.posterior_.resize(s.log_weights_.size());
    for (std::size_t c = 0; c < s.log_weights_.size(); ++c) s.posterior_[c] = std::exp(s.log_weights_[c]) / total;
  }

  std::size_t n_items_ = 0, n_components_ = 0;
  int rho_ = 0;
  std::vector<double> mixing_, phi_;
};

/// P(c | r_kappa) proportional to P(c) prod_j phi^{r_j}_{jc}, accumulated in log space.
inline NbUserState nb_update(const NaiveBayesModel& m, const Observations& observed) {
  NbUserState s = m.initial_state();
  for (ItemIndex j : observed.order()) {
    m.check_rating(j, observed.rating(j));
    s.obs_.add(j, observed.rating(j));
    m.add_factor(s, j, observed.rating(j));
  }
  NaiveBayesModel::renormalize(s);
  return s;
}

inline RatingPosterior nb_rating_posterior(const NaiveBayesModel& m, const NbUserState& u, ItemIndex j) {
  require(j >= 0 && static_cast<std::size_t>(j) < m.n_items(), ErrorCode::contract, "item index out of range");
  require(!u.observations().contains(j), ErrorCode::contract,
          "nb_rating_posterior: item " + std::to_string(j) + " is already observed");
  std::vector<double> probs(static_cast<std::size_t>(m.rho()), 0.0);
  const auto& post = u.component_posterior();
  for (std::size_t c = 0; c < m.n_components(); ++c)
    for (Rating r = 1; r <= m.rho(); ++r)
      probs[static_cast<std::size_t>(r - 1)] += post[c] * m.phi(static_cast<std::size_t>(j), c, r);
  return RatingPosterior::from_probs(std::move(probs));
}

inline RatingPosterior NaiveBayesModel::predict(const NbUserState& s, ItemIndex j) const {
  return nb_rating_posterior(*this, s, j);
}

inline NbUserState NaiveBayesModel::observe(const NbUserState& s, ItemIndex j, Rating r) const {
  check_rating(j, r);
  require(!s.observations().contains(j), ErrorCode::contract, "item " + std::to_string(j) + " already observed");
  NbUserState out = s;
  out.obs_.add(j, r);
  add_factor(out, j, r);
  renormalize(out);
  return out;
}

}  // namespace acf
