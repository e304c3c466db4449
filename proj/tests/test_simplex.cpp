#include <catch_amalgamated.hpp>

#include <random>

#include "acf/simplex.hpp"

using namespace acf::lp;
using Catch::Approx;

TEST_CASE("textbook maximization", "[lp]") {
  // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36
  LinearProgram p;
  p.n_vars = 2;
  p.objective = {3, 5};
  p.add({1, 0}, Relation::less_equal, 4);
  p.add({0, 2}, Relation::less_equal, 12);
  p.add({3, 2}, Relation::less_equal, 18);
  auto s = solve(p);
  REQUIRE(s.status == Status::optimal);
  CHECK(s.objective == Approx(36));
  CHECK(s.x[0] == Approx(2));
  CHECK(s.x[1] == Approx(6));
}

TEST_CASE("equality, >= rows and shifted lower bounds", "[lp]") {
  // max x - y  s.t. x + y = 1, x >= 0.2, y >= -0.5 (lower bound), x <= 3
  LinearProgram p;
  p.n_vars = 2;
  p.objective = {1, -1};
  p.lower = {0.0, -0.5};
  p.add({1, 1}, Relation::equal, 1);
  p.add({1, 0}, Relation::greater_equal, 0.2);
  p.add({1, 0}, Relation::less_equal, 3);
  auto s = solve(p);
  REQUIRE(s.status == Status::optimal);
  CHECK(s.x[0] == Approx(1.5));
  CHECK(s.x[1] == Approx(-0.5));
  CHECK(s.objective == Approx(2.0));
}

TEST_CASE("infeasible and unbounded programs are reported", "[lp]") {
  LinearProgram a;
  a.n_vars = 1;
  a.objective = {1};
  a.add({1}, Relation::less_equal, 1);
  a.add({1}, Relation::greater_equal, 2);
  CHECK(solve(a).status == Status::infeasible);

  LinearProgram b;
  b.n_vars = 2;
  b.objective = {1, 0};
  b.add({1, -1}, Relation::less_equal, 1);
  CHECK(solve(b).status == Status::unbounded);
}

TEST_CASE("redundant equalities are tolerated", "[lp]") {
  LinearProgram p;
  p.n_vars = 3;
  p.objective = {1, 2, 3};
  p.add({1, 1, 1}, Relation::equal, 1);
  p.add({2, 2, 2}, Relation::equal, 2);
  p.add({0, 0, 1}, Relation::less_equal, 0.5);
  auto s = solve(p);
  REQUIRE(s.status == Status::optimal);
  CHECK(s.objective == Approx(2.5));
}

TEST_CASE("random box-constrained programs match the closed form", "[lp]") {
  // max c.x subject to 0 <= x_i <= u_i has optimum sum max(c_i, 0) u_i.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1, 1), B(0.1, 2);
  for (int t = 0; t < 50; ++t) {
    LinearProgram p;
    p.n_vars = 6;
    double expect = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      p.objective.push_back(U(rng));
      std::vector<double> row(6, 0.0);
      row[i] = 1;
      const double u = B(rng);
      p.add(row, Relation::less_equal, u);
      p.add(row, Relation::greater_equal, 0);
      expect += std::max(p.objective.back(), 0.0) * u;
    }
    auto s = solve(p);
    REQUIRE(s.status == Status::optimal);
    CHECK(s.objective == Approx(expect).margin(1e-12));
  }
}
