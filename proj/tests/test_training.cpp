#include <catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "acf/eval.hpp"
#include "acf/training.hpp"
#include "support.hpp"

using namespace acf;
using Catch::Approx;

namespace {

RatingsDataset small_dataset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto truth = testing::random_gaussian_mcvq(rng, 12, 2, 2, 5);
  return generate_synthetic(truth, 150, 0.6, seed + 1);
}

// Mean of the rating distribution a model actually emits for cell (j, k, l).
double emitted_mean(const McvqModel& m, std::size_t j, std::size_t k, std::size_t l) {
  double v = 0.0;
  for (int r = 1; r <= m.rho(); ++r) v += r * m.theta(j, k, l, r);
  return v;
}

// Samples users from a latent-class mixture with every item rated.
RatingsDataset sample_nb(const NaiveBayesModel& m, std::size_t users, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RatingsDataset d;
  d.n_users = users;
  d.n_items = m.n_items();
  d.rho = m.rho();
  std::discrete_distribution<std::size_t> comp(m.mixing_weights().begin(), m.mixing_weights().end());
  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t c = comp(rng);
    for (std::size_t j = 0; j < m.n_items(); ++j) {
      std::vector<double> row;
      for (int r = 1; r <= m.rho(); ++r) row.push_back(m.phi(j, c, r));
      std::discrete_distribution<int> rd(row.begin(), row.end());
      d.observations.push_back({static_cast<UserIndex>(u), static_cast<ItemIndex>(j), rd(rng) + 1});
    }
  }
  return d;
}

}  // namespace

TEST_CASE("naive Bayes EM is monotone over 15 iterations", "[training]") {
  const auto d = small_dataset(3);
  TrainConfig cfg;
  cfg.n_components = 4;
  cfg.max_iters = 15;
  cfg.seed = 9;
  const auto fit = fit_naive_bayes(d, cfg);
  REQUIRE(fit.trace.size() == 15);
  for (std::size_t i = 1; i < fit.trace.size(); ++i)
    CHECK(fit.trace[i] >= fit.trace[i - 1] - 1e-9 * std::max(1.0, std::abs(fit.trace[i - 1])));
  CHECK(fit.flagged_iterations.empty());
}

TEST_CASE("naive Bayes with one component is the smoothed histogram", "[training]") {
  const auto d = small_dataset(4);
  TrainConfig cfg;
  cfg.n_components = 1;
  cfg.max_iters = 1;
  cfg.smoothing = 0.5;
  const auto fit = fit_naive_bayes(d, cfg);
  const auto hist = d.rating_histograms();
  for (std::size_t j = 0; j < d.n_items; ++j) {
    const double n = std::accumulate(hist[j].begin(), hist[j].end(), 0.0);
    for (int r = 1; r <= d.rho; ++r)
      CHECK(fit.model.phi(j, 0, r) ==
            Approx((hist[j][static_cast<std::size_t>(r - 1)] + 0.5) / (n + 0.5 * d.rho)).margin(1e-12));
  }
  CHECK(fit.model.mixing(0) == Approx(1.0));
}

TEST_CASE("naive Bayes recovers a separated two-component mixture", "[training]") {
  const std::size_t M = 10, C = 2;
  const int rho = 5;
  std::vector<double> phi;
  for (std::size_t j = 0; j < M; ++j) {
    // Component 0 leans low, component 1 leans high; the lean flips with item parity.
    const std::vector<double> low{0.5, 0.3, 0.1, 0.05, 0.05}, high{0.05, 0.05, 0.1, 0.3, 0.5};
    const auto& a = j % 2 ? high : low;
    const auto& b = j % 2 ? low : high;
    phi.insert(phi.end(), a.begin(), a.end());
    phi.insert(phi.end(), b.begin(), b.end());
  }
  const NaiveBayesModel truth(M, C, rho, {0.4, 0.6}, phi);
  const auto d = sample_nb(truth, 4000, 21);
  TrainConfig cfg;
  cfg.n_components = 2;
  cfg.max_iters = 40;
  cfg.restarts = 3;
  cfg.seed = 5;
  const auto fit = fit_naive_bayes(d, cfg);
  double best = INFINITY;
  for (std::size_t flip = 0; flip < 2; ++flip) {
    double worst = 0.0;
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        double tv = 0.0;
        for (int r = 1; r <= rho; ++r) tv += std::abs(fit.model.phi(j, c ^ flip, r) - truth.phi(j, c, r));
        worst = std::max(worst, tv / 2.0);
      }
    best = std::min(best, worst);
  }
  CHECK(best <= 0.05);
}

TEST_CASE("MCVQ variational objective is monotone", "[training]") {
  const auto d = small_dataset(7);
  TrainConfig cfg;
  cfg.n_types = 2;
  cfg.n_attitudes = 2;
  cfg.max_iters = 15;
  cfg.seed = 2;
  const auto fit = fit_mcvq(d, cfg);
  REQUIRE(fit.trace.size() == 15);
  for (std::size_t i = 1; i < fit.trace.size(); ++i)
    CHECK(fit.trace[i] >= fit.trace[i - 1] - 1e-6 * std::max(1.0, std::abs(fit.trace[i - 1])));
  CHECK(fit.flagged_iterations.empty());
}

TEST_CASE("training is deterministic given the seed", "[training]") {
  const auto d = small_dataset(8);
  TrainConfig cfg;
  cfg.n_types = 2;
  cfg.n_attitudes = 2;
  cfg.n_components = 3;
  cfg.max_iters = 5;
  cfg.seed = 77;
  const auto a = fit_mcvq(d, cfg), b = fit_mcvq(d, cfg);
  CHECK(a.trace == b.trace);
  CHECK(a.model.rating_means() == b.model.rating_means());
  cfg.threads = 3;
  const auto c = fit_mcvq(d, cfg);
  CHECK(a.model.rating_means() == c.model.rating_means());
  const auto n1 = fit_naive_bayes(d, cfg), n2 = fit_naive_bayes(d, cfg);
  CHECK(n1.model.rating_multinomials() == n2.model.rating_multinomials());
  cfg.seed = 78;
  CHECK(fit_mcvq(d, cfg).model.rating_means() != a.model.rating_means());
}

TEST_CASE("MCVQ recovers well-separated parameters", "[training]") {
  SeparatedTruthSpec spec;
  spec.n_items = 20;
  spec.n_types = 2;
  spec.n_attitudes = 2;
  spec.rho = 6;
  spec.seed = 31;
  const auto truth = make_separated_truth(spec);
  const auto d = generate_synthetic(truth, 2000, 0.5, 32);
  TrainConfig cfg;
  cfg.n_types = 2;
  cfg.n_attitudes = 2;
  cfg.max_iters = 40;
  cfg.restarts = 3;
  cfg.seed = 4;
  const auto fit = fit_mcvq(d, cfg);
  CHECK(fit.flagged_iterations.empty());

  // Align types globally and attitudes per type; compare the dominant type of each item, the
  // only cells with enough data to pin down a mean.
  double best = INFINITY;
  for (std::size_t tp = 0; tp < 2; ++tp) {
    double worst = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t fk = k ^ tp;
      double per_type = INFINITY;
      for (std::size_t ap = 0; ap < 2; ++ap) {
        double w = 0.0;
        for (std::size_t j = k; j < spec.n_items; j += 2)
          for (std::size_t l = 0; l < 2; ++l)
            w = std::max(w, std::abs(fit.model.rating_mean(j, fk, l ^ ap) - emitted_mean(truth, j, k, l)));
        per_type = std::min(per_type, w);
      }
      worst = std::max(worst, per_type);
    }
    best = std::min(best, worst);
  }
  CHECK(best <= 0.15);
}

TEST_CASE("training rejects bad input", "[training]") {
  RatingsDataset empty;
  empty.n_items = 3;
  empty.rho = 5;
  TrainConfig cfg;
  CHECK_THROWS_AS(fit_mcvq(empty, cfg), Error);
  CHECK_THROWS_AS(fit_naive_bayes(empty, cfg), Error);
  auto d = small_dataset(1);
  cfg.n_types = 0;
  CHECK_THROWS_AS(fit_mcvq(d, cfg), Error);
  cfg.n_types = 10;
  cfg.n_attitudes = 4;
  cfg.max_iters = 1;
  CHECK_FALSE(fit_mcvq(d, cfg).warnings.empty());
}
