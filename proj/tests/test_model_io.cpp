#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "acf/model_io.hpp"
#include "support.hpp"

using namespace acf;
using namespace acf::testing;

TEST_CASE("MCVQ model round trip is bit exact", "[model_io]") {
  std::mt19937_64 rng(1);
  for (auto m : {random_gaussian_mcvq(rng, 5, 2, 3, 6), random_mcvq(rng, 4, 3, 2, 5)}) {
    auto text = serialize_model(m);
    auto back = std::get<McvqModel>(deserialize_model(text));
    CHECK(back == m);
    CHECK(serialize_model(back) == text);
  }
}

TEST_CASE("naive Bayes model round trip is bit exact", "[model_io]") {
  std::mt19937_64 rng(2);
  auto m = random_nb(rng, 6, 3, 6);
  auto back = std::get<NaiveBayesModel>(deserialize_model(serialize_model(m)));
  CHECK(back == m);
}

TEST_CASE("corrupted model files are rejected", "[model_io]") {
  std::mt19937_64 rng(3);
  auto text = serialize_model(random_gaussian_mcvq(rng, 3, 2, 2, 6));
  auto bad = text;
  bad[40] = bad[40] == '1' ? '2' : '1';
  CHECK_THROWS_AS(deserialize_model(bad), Error);
  CHECK_THROWS_AS(deserialize_model("ACF-MODEL 1\n"), Error);
}

TEST_CASE("missing model file reports model not found", "[model_io]") {
  try {
    load_model("/nonexistent/model.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
    CHECK(std::string(e.what()).find("model not found") != std::string::npos);
  }
}

TEST_CASE("save and load through the filesystem", "[model_io]") {
  std::mt19937_64 rng(4);
  auto m = random_gaussian_mcvq(rng, 3, 1, 2, 6);
  const auto path = (std::filesystem::temp_directory_path() / "acf_model_io_test.txt").string();
  save_model(path, m);
  CHECK(std::get<McvqModel>(load_model(path)) == m);
  std::filesystem::remove(path);
}
