#include <catch_amalgamated.hpp>

#include "acf/strategies.hpp"
#include "support.hpp"

using namespace acf;
using Catch::Approx;

namespace {

std::vector<ItemIndex> all_items(std::size_t M) {
  std::vector<ItemIndex> v(M);
  for (std::size_t j = 0; j < M; ++j) v[j] = static_cast<ItemIndex>(j);
  return v;
}

// Every attitude shares theta, so no response moves any posterior.
McvqModel invariant_model(std::mt19937_64& rng, std::size_t M, int rho) {
  std::vector<double> theta;
  for (std::size_t j = 0; j < M; ++j) {
    const auto row = testing::dirichlet_row(rng, static_cast<std::size_t>(rho));
    for (int c = 0; c < 2 * 2; ++c) theta.insert(theta.end(), row.begin(), row.end());
  }
  return McvqModel::from_multinomials(M, 2, 2, rho, testing::dirichlet_rows(rng, M, 2), {0.3, 0.7, 0.5, 0.5}, theta);
}

// Brute-force EVOI from the oracle formulas, inner max over targets other than q.
double oracle_evoi(const McvqModel& m, const std::vector<double>& post, std::size_t q, const std::vector<ItemIndex>& targets) {
  double current = -INFINITY;
  for (ItemIndex j : targets)
    current = std::max(current, testing::oracle::mean_of(testing::oracle::rating_probs(m, post, static_cast<std::size_t>(j))));
  const auto pq = testing::oracle::rating_probs(m, post, q);
  double expected = 0.0;
  for (Rating r = 1; r <= m.rho(); ++r) {
    double best = -INFINITY;
    for (ItemIndex j : targets)
      if (static_cast<std::size_t>(j) != q)
        best = std::max(best, testing::oracle::mean_of(testing::oracle::after_response(m, post, q, r, static_cast<std::size_t>(j))));
    expected += pq[static_cast<std::size_t>(r - 1)] * best;
  }
  return expected - current;
}

}  // namespace

TEST_CASE("belief value examples", "[strategies]") {
  SECTION("point mass at 4") {
    std::vector<double> theta;
    for (int c = 0; c < 2; ++c) theta.insert(theta.end(), {0.0, 0.0, 0.0, 1.0, 0.0, 0.0});
    const auto m = McvqModel::from_multinomials(1, 1, 2, 6, {1.0}, {0.5, 0.5}, theta);
    const std::vector<ItemIndex> c{0};
    const auto v = belief_value(m, m.initial_state(), c);
    CHECK(v.value == Approx(4.0).margin(1e-12));
    CHECK(v.argmax == 0);
    CHECK(recommend(m, m.initial_state(), c) == 0);
  }
  SECTION("uniform posteriors tie to the lowest index") {
    std::vector<double> theta(3 * 2 * 6, 1.0 / 6.0);
    const auto m = McvqModel::from_multinomials(3, 1, 2, 6, {1.0, 1.0, 1.0}, {0.5, 0.5}, theta);
    const std::vector<ItemIndex> c{2, 1};
    const auto v = belief_value(m, m.initial_state(), c);
    CHECK(v.value == Approx(3.5).margin(1e-12));
    CHECK(v.argmax == 1);
  }
  SECTION("random instances against the exhaustive mean") {
    std::mt19937_64 rng(1);
    for (int inst = 0; inst < 20; ++inst) {
      const auto m = testing::random_mcvq(rng, 8, 2, 3, 5);
      const auto obs = testing::random_observations(rng, 8, 5, 3);
      const auto s = update_attitudes(m, obs);
      const auto post = testing::oracle::attitudes(m, obs);
      const auto cands = obs.unobserved();
      double best = -INFINITY;
      ItemIndex arg = -1;
      for (ItemIndex j : cands) {
        const double v = testing::oracle::mean_of(testing::oracle::rating_probs(m, post, static_cast<std::size_t>(j)));
        if (v > best) best = v, arg = j;
      }
      const auto v = belief_value(m, s, cands);
      CHECK(v.value == Approx(best).margin(1e-12));
      CHECK(v.argmax == arg);
    }
  }
  SECTION("empty candidates") {
    std::mt19937_64 rng(2);
    const auto m = testing::random_mcvq(rng, 3, 1, 2, 3);
    CHECK_THROWS_AS(belief_value(m, m.initial_state(), std::vector<ItemIndex>{}), Error);
  }
}

TEST_CASE("evoi matches the brute-force formula", "[strategies]") {
  std::mt19937_64 rng(3);
  for (int inst = 0; inst < 20; ++inst) {
    const auto m = testing::random_mcvq(rng, 6, 2, 2, 4, 0.5);
    const auto obs = testing::random_observations(rng, 6, 4, static_cast<std::size_t>(inst % 3));
    const auto s = update_attitudes(m, obs);
    const auto post = testing::oracle::attitudes(m, obs);
    const auto targets = obs.unobserved();
    for (ItemIndex q : targets)
      CHECK(evoi(m, s, q) == Approx(oracle_evoi(m, post, static_cast<std::size_t>(q), targets)).margin(1e-12));
  }
}

TEST_CASE("evoi zero cases", "[strategies]") {
  std::mt19937_64 rng(4);
  SECTION("posterior-invariant model") {
    const auto m = invariant_model(rng, 5, 4);
    const auto s = m.initial_state();
    const auto all = all_items(5);
    const ItemIndex top = belief_value(m, s, all).argmax;
    for (ItemIndex q : all)
      if (q != top) CHECK(evoi(m, s, q) == Approx(0.0).margin(1e-12));
  }
  SECTION("single rating value") {
    const auto m = testing::random_mcvq(rng, 4, 2, 2, 1);
    const auto s = m.initial_state();
    for (ItemIndex q = 0; q < 4; ++q) CHECK(evoi(m, s, q) == Approx(0.0).margin(1e-12));
  }
  SECTION("no other target") {
    const auto m = testing::random_mcvq(rng, 3, 2, 2, 3);
    const std::vector<ItemIndex> only{1};
    CHECK(evoi(m, m.initial_state(), 1, only) == 0.0);
  }
  SECTION("observed query") {
    const auto m = testing::random_mcvq(rng, 3, 2, 2, 3);
    const auto s = m.observe(m.initial_state(), 0, 2);
    CHECK_THROWS_AS(evoi(m, s, 0), Error);
  }
}

TEST_CASE("naive Bayes evoi is non-negative off the argmax", "[strategies]") {
  std::mt19937_64 rng(5);
  for (int inst = 0; inst < 30; ++inst) {
    const auto m = testing::random_nb(rng, 7, 3, 5);
    const auto s = nb_update(m, testing::random_observations(rng, 7, 5, static_cast<std::size_t>(inst % 4)));
    const auto targets = s.observations().unobserved();
    const ItemIndex top = belief_value(m, s, targets).argmax;
    double best = -INFINITY;
    for (ItemIndex q : targets) {
      if (q == top) continue;
      const double v = evoi(m, s, q);
      CHECK(v >= -1e-10);
      best = std::max(best, v);
    }
    if (targets.size() > 1) CHECK(best >= -1e-10);
  }
}

TEST_CASE("per-response pruning leaves evoi unchanged", "[strategies]") {
  std::mt19937_64 rng(6);
  std::size_t pruned = 0;
  for (int inst = 0; inst < 12; ++inst) {
    const std::size_t M = inst < 6 ? 10 : 30;
    const auto m = testing::random_mcvq(rng, M, 2, 2, 4, 0.3);
    const auto tables = precompute_bound_tables(m);
    for (int user = 0; user < 3; ++user) {
      const auto s = update_attitudes(m, testing::random_observations(rng, M, 4, static_cast<std::size_t>(user * 2)));
      const auto targets = s.observations().unobserved();
      const auto means = target_means(m, s, targets);
      StrategyConfig plain, fast;
      fast.pruning = {&tables.mean_change, PruneMode::per_response};
      for (ItemIndex q : targets) {
        const auto a = evoi_detail(m, s, q, targets, means);
        const auto b = evoi_detail(m, s, q, targets, means, fast.pruning);
        CHECK(std::abs(a.value - b.value) <= 1e-12);
        CHECK(b.targets_considered + b.targets_pruned == a.targets_considered);
        pruned += b.targets_pruned;
      }
      const auto da = select_query(m, s, plain), db = select_query(m, s, fast);
      CHECK(da.chosen_query == db.chosen_query);
      CHECK(da.stop == db.stop);
    }
  }
  CHECK(pruned > 0);
}

TEST_CASE("entropy strategy prefers spread histograms", "[strategies]") {
  RatingsDataset d;
  d.n_users = 12;
  d.n_items = 2;
  d.rho = 6;
  for (int u = 0; u < 12; ++u) {
    d.observations.push_back({u, 0, u % 6 + 1});
    d.observations.push_back({u, 1, 4});
  }
  const auto h = item_entropies(d);
  CHECK(h[0] == Approx(std::log(6.0)).margin(1e-12));
  CHECK(h[1] < h[0]);
  std::mt19937_64 rng(7);
  const auto m = testing::random_mcvq(rng, 2, 1, 2, 6);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::entropy;
  const auto dec = select_query(m, m.initial_state(), cfg, h);
  REQUIRE(dec.chosen_query);
  CHECK(*dec.chosen_query == 0);
  CHECK_FALSE(dec.stop);
}

TEST_CASE("random strategy is reproducible", "[strategies]") {
  std::mt19937_64 rng(8);
  const auto m = testing::random_mcvq(rng, 20, 2, 2, 5);
  StrategyConfig cfg;
  cfg.kind = StrategyKind::random;
  cfg.seed = 42;
  auto run = [&](std::uint64_t seed) {
    cfg.seed = seed;
    std::vector<ItemIndex> seq;
    auto s = m.initial_state();
    for (int i = 0; i < 8; ++i) {
      const auto dec = select_query(m, s, cfg);
      REQUIRE(dec.chosen_query);
      CHECK_FALSE(s.observations().contains(*dec.chosen_query));
      seq.push_back(*dec.chosen_query);
      s = m.observe(s, *dec.chosen_query, 3);
    }
    return seq;
  };
  CHECK(run(42) == run(42));
  CHECK(run(42) != run(43));
}

TEST_CASE("evoi strategy threshold and candidate handling", "[strategies]") {
  std::mt19937_64 rng(9);
  const auto m = testing::random_mcvq(rng, 8, 2, 2, 5, 0.5);
  const auto s = m.initial_state();
  StrategyConfig cfg;
  auto dec = select_query(m, s, cfg);
  REQUIRE(dec.chosen_query);
  CHECK(dec.candidates.size() == 8);
  const std::size_t best = argmax_first(dec.scores);
  CHECK(*dec.chosen_query == dec.candidates[best]);
  for (double v : dec.scores) CHECK(std::isfinite(v));

  // Positive affine rescaling keeps the argmax.
  std::vector<double> scaled;
  for (double v : dec.scores) scaled.push_back(3.0 * v + 7.0);
  CHECK(argmax_first(scaled) == best);

  cfg.evoi_threshold = dec.best_score() + 1.0;
  const auto stopped = select_query(m, s, cfg);
  CHECK(stopped.stop);
  CHECK(stopped.reason == "best EVOI below threshold");

  cfg.evoi_threshold = 0.0;
  cfg.restrict_to = {1, 3, 5};
  dec = select_query(m, s, cfg);
  CHECK(dec.candidates == std::vector<ItemIndex>{1, 3, 5});

  cfg.evoi_threshold = -1.0;
  CHECK_THROWS_AS(select_query(m, s, cfg), Error);

  auto full = s;
  for (ItemIndex j = 0; j < 8; ++j) full = m.observe(full, j, 2);
  cfg.evoi_threshold = 0.0;
  cfg.restrict_to.clear();
  const auto none = select_query(m, full, cfg);
  CHECK(none.stop);
  CHECK_FALSE(none.chosen_query);

  CHECK(parse_strategy("entropy") == StrategyKind::entropy);
  CHECK(to_string(StrategyKind::random) == "random");
  CHECK_THROWS_AS(parse_strategy("greedy"), Error);
}

TEST_CASE("parallel candidate evaluation is deterministic", "[strategies]") {
  std::mt19937_64 rng(10);
  const auto m = testing::random_mcvq(rng, 15, 3, 2, 5);
  const auto s = m.observe(m.initial_state(), 4, 5);
  StrategyConfig cfg;
  const auto a = select_query(m, s, cfg);
  cfg.threads = 4;
  const auto b = select_query(m, s, cfg);
  CHECK(a.scores == b.scores);
  CHECK(a.chosen_query == b.chosen_query);
}
