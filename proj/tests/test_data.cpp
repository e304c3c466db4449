#include <catch_amalgamated.hpp>

#include <map>
#include <set>
#include <sstream>

#include "acf/data.hpp"
#include "support.hpp"

using namespace acf;
using namespace acf::testing;

namespace {

RatingsDataset parse(const std::string& text, CsvSchema schema = {}) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

// One pass of user then item thresholding over the observations, without compaction.
std::set<std::pair<int, int>> single_pass(const std::set<std::pair<int, int>>& obs, std::size_t mu, std::size_t mi) {
  std::map<int, std::size_t> uc, ic;
  for (auto [u, i] : obs) ++uc[u];
  std::set<std::pair<int, int>> a;
  for (auto [u, i] : obs)
    if (uc[u] >= mu) a.insert({u, i});
  for (auto [u, i] : a) ++ic[i];
  std::set<std::pair<int, int>> b;
  for (auto [u, i] : a)
    if (ic[i] >= mi) b.insert({u, i});
  return b;
}

}  // namespace

TEST_CASE("load_csv reads a three-line file", "[data]") {
  auto d = parse("user,item,rating\nu1,i1,4\nu1,i2,6\nu2,i1,1\n");
  CHECK(d.n_users == 2);
  CHECK(d.n_items == 2);
  CHECK(d.observations.size() == 3);
  CHECK(d.item_label(1) == "i2");
  CHECK(d.observations[1] == Observation{0, 1, 6});
}

TEST_CASE("duplicate rows keep the last rating", "[data]") {
  auto d = parse("user,item,rating\nu1,i1,2\nu1,i1,5\n");
  REQUIRE(d.observations.size() == 1);
  CHECK(d.observations[0].rating == 5);
}

TEST_CASE("ratings outside the scale are validation errors", "[data]") {
  try {
    parse("user,item,rating\nu1,i1,7\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
  }
}

TEST_CASE("malformed rows report their line number", "[data]") {
  try {
    parse("user,item,rating\nu1,i1,3\nu2,i2\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("user,item,rating\nu1,i1,x\n"), Error);
}

TEST_CASE("load_csv on a missing file is not_found", "[data]") {
  try {
    load_csv("/nonexistent/ratings.csv", {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
  }
}

TEST_CASE("csv round trip preserves the dataset", "[data]") {
  std::mt19937_64 rng(3);
  auto gt = random_gaussian_mcvq(rng, 7, 2, 2, 6);
  auto d = generate_synthetic(gt, 20, 0.5, 9);
  std::ostringstream out;
  write_csv(out, d, true);
  auto back = parse(out.str());
  CHECK(back.observations.size() == d.observations.size());
  auto triples = [](const RatingsDataset& x) {
    std::set<std::tuple<std::string, std::string, int>> t;
    for (const auto& o : x.observations)
      t.insert({x.user_labels[static_cast<std::size_t>(o.user)], x.item_label(o.item), o.rating});
    return t;
  };
  CHECK(triples(back) == triples(d));
}

TEST_CASE("density_filter with vacuous thresholds keeps everything", "[data]") {
  auto d = parse("user,item,rating\nu1,i1,4\nu1,i2,6\nu2,i1,1\n");
  SplitSpec s;
  auto f = density_filter(d, s);
  CHECK(f.observations == d.observations);
  CHECK(f.n_users == 2);
}

TEST_CASE("density_filter drops a sparse user", "[data]") {
  auto d = parse("user,item,rating\nu1,i1,4\nu1,i2,6\nu1,i3,2\nu2,i1,1\nu2,i2,3\n");
  SplitSpec s;
  s.min_ratings_per_user = 3;
  auto f = density_filter(d, s);
  CHECK(f.n_users == 1);
  CHECK(f.user_labels == std::vector<std::string>{"u1"});
}

TEST_CASE("density_filter cascades to a fixed point", "[data]") {
  // Removing u3 (2 ratings) leaves i3 with one rating; dropping i3 then leaves u1 with 2.
  const std::string text =
      "user,item,rating\n"
      "u1,i1,1\nu1,i2,2\nu1,i3,3\n"
      "u2,i1,1\nu2,i2,2\nu2,i4,1\n"
      "u3,i3,5\nu3,i4,5\n"
      "u4,i1,2\nu4,i2,2\nu4,i4,3\n";
  auto d = parse(text);
  SplitSpec s;
  s.min_ratings_per_user = 3;
  s.min_ratings_per_item = 2;
  auto f = density_filter(d, s);

  std::set<std::pair<int, int>> obs;
  for (const auto& o : d.observations) obs.insert({o.user, o.item});
  auto prev = obs;
  while (true) {
    auto next = single_pass(prev, 3, 2);
    if (next == prev) break;
    prev = next;
  }
  CHECK(f.observations.size() == prev.size());
  std::set<std::string> items(f.item_labels.begin(), f.item_labels.end());
  CHECK(items == std::set<std::string>{"i1", "i2", "i4"});
  CHECK(f.n_users == 2);

  s.iterate_to_fixed_point = false;
  CHECK(density_filter(d, s).observations.size() == single_pass(obs, 3, 2).size());
}

TEST_CASE("density_filter is idempotent", "[data]") {
  std::mt19937_64 rng(5);
  auto gt = random_gaussian_mcvq(rng, 30, 2, 2, 6);
  auto d = generate_synthetic(gt, 60, 0.3, 17);
  SplitSpec s;
  s.min_ratings_per_user = 6;
  s.min_ratings_per_item = 12;
  auto once = density_filter(d, s);
  CHECK(once.n_users < d.n_users);
  auto twice = density_filter(once, s);
  CHECK(once == twice);
}

TEST_CASE("density_filter reports an empty result", "[data]") {
  auto d = parse("user,item,rating\nu1,i1,4\n");
  SplitSpec s;
  s.min_ratings_per_user = 5;
  CHECK_THROWS_WITH(density_filter(d, s), Catch::Matchers::ContainsSubstring("filter eliminated all data"));
}

TEST_CASE("make_split is deterministic, disjoint and complete", "[data]") {
  std::mt19937_64 rng(7);
  auto gt = random_gaussian_mcvq(rng, 12, 2, 2, 6);
  auto d = generate_synthetic(gt, 40, 0.6, 1);
  SplitSpec s;
  s.n_test_users = 10;
  s.seed = 99;
  auto a = make_split(d, s), b = make_split(d, s);
  CHECK(a == b);
  CHECK(a.test.n_users == 10);
  CHECK(a.train.n_users == 30);
  std::set<int> train_users(a.train_origin.begin(), a.train_origin.end());
  for (int u : a.test_origin) CHECK(train_users.count(u) == 0);
  CHECK(a.train.observations.size() + a.test.observations.size() == d.observations.size());
  // Schedules partition each test user's rated items.
  auto rows = a.test.by_user();
  for (std::size_t u = 0; u < a.test.n_users; ++u) {
    std::set<int> sched(a.mask.schedules[u].begin(), a.mask.schedules[u].end());
    CHECK(sched.size() == rows[u].size());
    auto known = a.mask.known(u, 2);
    auto held = a.mask.held_out(u, 2);
    CHECK(known.size() + held.size() == rows[u].size());
  }
  CHECK(a.train.item_labels == d.item_labels);
}

TEST_CASE("make_split with no test users returns the data as train", "[data]") {
  std::mt19937_64 rng(8);
  auto d = generate_synthetic(random_gaussian_mcvq(rng, 5, 1, 2, 6), 8, 0.8, 2);
  SplitSpec s;
  auto sp = make_split(d, s);
  CHECK(sp.test.n_users == 0);
  CHECK(sp.train.observations == d.observations);
  s.n_test_users = 8;
  CHECK_THROWS_AS(make_split(d, s), Error);
}

TEST_CASE("split manifest round trip", "[data]") {
  std::mt19937_64 rng(9);
  auto d = generate_synthetic(random_gaussian_mcvq(rng, 6, 1, 2, 6), 12, 0.7, 3);
  SplitSpec s;
  s.n_test_users = 4;
  s.seed = 5;
  auto sp = make_split(d, s);
  auto text = format_split_manifest(sp);
  auto m = parse_split_manifest(text);
  CHECK(m.seed == 5);
  CHECK(m.mask == sp.mask);
  CHECK(m.test_origin == sp.test_origin);
  CHECK(m.item_labels == sp.train.item_labels);
  text[20] ^= 1;
  CHECK_THROWS_AS(parse_split_manifest(text), Error);
}

TEST_CASE("synthetic generation: density one rates every pair", "[data]") {
  std::mt19937_64 rng(10);
  auto gt = random_gaussian_mcvq(rng, 6, 2, 2, 6);
  auto d = generate_synthetic(gt, 15, 1.0, 4);
  CHECK(d.observations.size() == 90);
  CHECK(generate_synthetic(gt, 15, 1.0, 4) == d);
}

TEST_CASE("synthetic generation with point masses reproduces rounded means", "[data]") {
  const std::size_t M = 4;
  std::vector<double> mu{1.2, 2.6, 4.4, 5.9}, var(M, 0.0);
  auto gt = McvqModel::from_gaussians(M, 1, 1, 6, std::vector<double>(M, 1.0), {1.0}, mu, var);
  auto d = generate_synthetic(gt, 10, 1.0, 1);
  for (const auto& o : d.observations) CHECK(o.rating == static_cast<int>(std::lround(mu[static_cast<std::size_t>(o.item)])));
}

TEST_CASE("synthetic rating histograms match the analytic marginal", "[data]") {
  std::mt19937_64 rng(12);
  auto gt = random_gaussian_mcvq(rng, 3, 2, 3, 6);
  const std::size_t U = 10000;
  auto d = generate_synthetic(gt, U, 1.0, 77);
  auto hist = d.rating_histograms();
  for (std::size_t j = 0; j < 3; ++j)
    for (int r = 1; r <= 6; ++r) {
      double p = 0.0;
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < 3; ++l) p += gt.type_prob(j, k) * gt.attitude_prior(k, l) * gt.theta(j, k, l, r);
      // Ratings of one item are independent across users, so the binomial standard error applies.
      const double se = std::sqrt(p * (1 - p) / U);
      const double freq = static_cast<double>(hist[j][static_cast<std::size_t>(r - 1)]) / U;
      CHECK(std::abs(freq - p) <= 3 * se + 1e-12);
    }
}
