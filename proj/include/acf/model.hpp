#pragma once

#include <concepts>
#include <cstddef>
#include <vector>

#include "acf/error.hpp"
#include "acf/util.hpp"

namespace acf {

/// Predictive distribution over ratings 1..rho; probs[r - 1] holds P(R = r).
struct RatingPosterior {
  std::vector<double> probs;
  double mean = 0.0;

  static RatingPosterior from_probs(std::vector<double> p) {
    RatingPosterior out;
    out.probs = std::move(p);
    for (std::size_t r = 0; r < out.probs.size(); ++r) out.mean += static_cast<double>(r + 1) * out.probs[r];
    return out;
  }
};

/// The set kappa of rated items for one user, in the order the ratings arrived.
class Observations {
 public:
  Observations() = default;
  explicit Observations(std::size_t n_items) : rating_(n_items, 0) {}

  std::size_t n_items() const { return rating_.size(); }
  bool contains(ItemIndex j) const { return rating_.at(static_cast<std::size_t>(j)) != 0; }
  Rating rating(ItemIndex j) const { return rating_.at(static_cast<std::size_t>(j)); }
  const std::vector<ItemIndex>& order() const { return order_; }
  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }

  void add(ItemIndex j, Rating r) {
    require(j >= 0 && static_cast<std::size_t>(j) < rating_.size(), ErrorCode::contract,
            "item index " + std::to_string(j) + " out of range");
    require(r >= 1, ErrorCode::validation, "rating must be >= 1");
    require(!contains(j), ErrorCode::contract, "item " + std::to_string(j) + " already observed");
    rating_[static_cast<std::size_t>(j)] = r;
    order_.push_back(j);
  }

  /// Unobserved items in ascending index order.
  std::vector<ItemIndex> unobserved() const {
    std::vector<ItemIndex> out;
    for (std::size_t j = 0; j < rating_.size(); ++j)
      if (rating_[j] == 0) out.push_back(static_cast<ItemIndex>(j));
    return out;
  }

  friend bool operator==(const Observations&, const Observations&) = default;

 private:
  std::vector<Rating> rating_;
  std::vector<ItemIndex> order_;
};

/// What the query strategies need from a CF model: a prior user state, a predictive
/// rating distribution for an unobserved item, and a state transition on a new rating.
template <class M>
concept CfModel = requires(const M& m, const typename M::State& s, ItemIndex j, Rating r) {
  { m.n_items() } -> std::convertible_to<std::size_t>;
  { m.rho() } -> std::convertible_to<int>;
  { m.initial_state() } -> std::same_as<typename M::State>;
  { m.predict(s, j) } -> std::same_as<RatingPosterior>;
  { m.observe(s, j, r) } -> std::same_as<typename M::State>;
  { s.observations() } -> std::convertible_to<const Observations&>;
};

}  // namespace acf
