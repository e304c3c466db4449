#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "acf/error.hpp"
#include "acf/mcvq.hpp"
#include "acf/util.hpp"

namespace acf {

/// v_q[(k * L + l) * rho + (r - 1)] = P(T_q = k) theta^r_{qkl}.
inline std::vector<double> signature(const McvqModel& m, ItemIndex q) {
  const std::size_t K = m.n_types(), L = m.n_attitudes();
  const auto R = static_cast<std::size_t>(m.rho());
  const auto qq = static_cast<std::size_t>(q);
  require(qq < m.n_items(), ErrorCode::contract, "signature: item out of range");
  std::vector<double> v(K * L * R);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t r = 0; r < R; ++r)
        v[(k * L + l) * R + r] = m.type_prob(qq, k) * m.theta(qq, k, l, static_cast<Rating>(r + 1));
  return v;
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::contract, "l1_distance: signature lengths differ");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

/// Symmetric M x M matrix of signature distances, row-major.
inline std::vector<double> signature_distances(const McvqModel& m, unsigned threads = 1) {
  const std::size_t M = m.n_items();
  std::vector<std::vector<double>> sig(M);
  for (std::size_t j = 0; j < M; ++j) sig[j] = signature(m, static_cast<ItemIndex>(j));
  std::vector<double> d(M * M, 0.0);
  parallel_for(M, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < M; ++j) d[i * M + j] = l1_distance(sig[i], sig[j]);
  });
  return d;
}

struct PrototypeSet {
  /// Retained items in the order they were accepted.
  std::vector<ItemIndex> members;
  double beta = 0.0;
  /// Covering radius: max over items of the distance to the nearest member.
  double epsilon = 0.0;
  /// Training rating count per item, which fixed the visiting order.
  std::vector<std::size_t> popularity;

  std::vector<ItemIndex> sorted_members() const {
    auto s = members;
    std::sort(s.begin(), s.end());
    return s;
  }
  friend bool operator==(const PrototypeSet&, const PrototypeSet&) = default;
};

/// Items in descending popularity, ties by ascending index.
inline std::vector<ItemIndex> popularity_order(std::span<const std::size_t> popularity) {
  std::vector<ItemIndex> order(popularity.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ItemIndex a, ItemIndex b) {
    return popularity[static_cast<std::size_t>(a)] > popularity[static_cast<std::size_t>(b)];
  });
  return order;
}

/// Greedy net: visit items by popularity and accept one when its distance to every accepted
/// member is at least beta.
inline PrototypeSet select_prototypes(std::span<const double> distances, std::size_t n_items,
                                      std::span<const std::size_t> popularity, double beta) {
  require(beta >= 0.0, ErrorCode::validation, "beta must be >= 0");
  require(distances.size() == n_items * n_items && popularity.size() == n_items, ErrorCode::contract,
          "select_prototypes: dimension mismatch");
  PrototypeSet p;
  p.beta = beta;
  p.popularity.assign(popularity.begin(), popularity.end());
  for (ItemIndex j : popularity_order(popularity)) {
    const auto jj = static_cast<std::size_t>(j);
    bool far = true;
    for (ItemIndex c : p.members)
      if (distances[jj * n_items + static_cast<std::size_t>(c)] < beta) {
        far = false;
        break;
      }
    if (far) p.members.push_back(j);
  }
  for (std::size_t j = 0; j < n_items; ++j) {
    double nearest = std::numeric_limits<double>::infinity();
    for (ItemIndex c : p.members) nearest = std::min(nearest, distances[j * n_items + static_cast<std::size_t>(c)]);
    p.epsilon = std::max(p.epsilon, nearest);
  }
  return p;
}

inline PrototypeSet select_prototypes(const McvqModel& m, std::span<const std::size_t> popularity, double beta,
                                      unsigned threads = 1) {
  return select_prototypes(signature_distances(m, threads), m.n_items(), popularity, beta);
}

/// A beta just above one of the observed pairwise distances whose greedy net keeps at most
/// `fraction` of the items. The greedy member count is not guaranteed monotone in beta, so the
/// bisection finds a boundary rather than the global smallest such beta; the returned value
/// always satisfies the retention limit.
inline double beta_for_retention(std::span<const double> distances, std::size_t n_items,
                                 std::span<const std::size_t> popularity, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::validation, "retention fraction must be in (0, 1]");
  std::vector<double> cand(distances.begin(), distances.end());
  cand.push_back(0.0);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  const double target = fraction * static_cast<double>(n_items);
  // Just above an observed distance, the ">= beta" test flips for that pair.
  auto beta_at = [&](std::size_t i) { return std::nextafter(cand[i], std::numeric_limits<double>::infinity()); };
  auto fits = [&](std::size_t i) {
    return static_cast<double>(select_prototypes(distances, n_items, popularity, beta_at(i)).members.size()) <= target;
  };
  std::size_t lo = 0, hi = cand.size() - 1;
  if (!fits(hi)) return cand.back() + 1.0;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (fits(mid))
      hi = mid;
    else
      lo = mid + 1;
  }
  return beta_at(lo);
}

/// f(eps, r) = 12 eps / P(r): heuristic bound on the EVOI difference between two queries at
/// signature distance eps, given response r. An approximation, not a verified inequality.
inline double evoi_difference_bound(double epsilon, double p_r) {
  require(p_r > 0.0, ErrorCode::validation, "evoi_difference_bound: response probability must be positive");
  require(epsilon >= 0.0, ErrorCode::validation, "evoi_difference_bound: epsilon must be >= 0");
  return 12.0 * epsilon / p_r;
}

/// Aggregate bound |V^q - V^q'| <= 12 eps. Composing the per-response f literally as
/// sum_r P(r) f(eps, r) would give 12 eps times the number of responses with P(r) > 0; the
/// stated aggregate is used instead. Requires at least one response with positive probability.
inline double evoi_difference_bound_expected(double epsilon, std::span<const double> response_probs) {
  require(std::any_of(response_probs.begin(), response_probs.end(), [](double p) { return p > 0.0; }),
          ErrorCode::validation, "evoi_difference_bound: no response has positive probability");
  require(epsilon >= 0.0, ErrorCode::validation, "evoi_difference_bound: epsilon must be >= 0");
  return 12.0 * epsilon;
}

// Prototype file (text):
//   ACF-PROTOTYPES 1
//   beta <hexfloat>
//   epsilon <hexfloat>
//   items <M>
//   popularity <c_0> ... <c_{M-1}>
//   members <n> <j_1> ... <j_n>
//   checksum <fnv1a64>

inline std::string serialize_prototypes(const PrototypeSet& p) {
  std::ostringstream o;
  o << "ACF-PROTOTYPES 1\n";
  o << "beta " << format_double(p.beta) << "\n";
  o << "epsilon " << format_double(p.epsilon) << "\n";
  o << "items " << p.popularity.size() << "\n";
  o << "popularity";
  for (auto c : p.popularity) o << ' ' << c;
  o << "\nmembers " << p.members.size();
  for (auto j : p.members) o << ' ' << j;
  o << "\n";
  std::string body = o.str();
  return body + "checksum " + hex64(fnv1a64(body)) + "\n";
}

inline PrototypeSet deserialize_prototypes(const std::string& text) {
  auto cut = text.rfind("checksum ");
  require(cut != std::string::npos, ErrorCode::parse, "prototype file: missing checksum");
  const std::string body = text.substr(0, cut);
  require(trim(text.substr(cut + 9)) == hex64(fnv1a64(body)), ErrorCode::parse, "prototype file: checksum mismatch");
  std::istringstream in(body);
  std::string line, tag;
  std::getline(in, line);
  require(line == "ACF-PROTOTYPES 1", ErrorCode::parse, "prototype file: unsupported header");
  PrototypeSet p;
  std::string tok;
  in >> tag >> tok;
  require(tag == "beta", ErrorCode::parse, "prototype file: expected beta");
  p.beta = parse_double(tok);
  in >> tag >> tok;
  require(tag == "epsilon", ErrorCode::parse, "prototype file: expected epsilon");
  p.epsilon = parse_double(tok);
  std::size_t n = 0;
  in >> tag >> n;
  require(tag == "items", ErrorCode::parse, "prototype file: expected items");
  in >> tag;
  require(tag == "popularity", ErrorCode::parse, "prototype file: expected popularity");
  p.popularity.resize(n);
  for (auto& c : p.popularity) in >> c;
  std::size_t nm = 0;
  in >> tag >> nm;
  require(tag == "members", ErrorCode::parse, "prototype file: expected members");
  p.members.resize(nm);
  for (auto& j : p.members) {
    in >> j;
    require(j >= 0 && static_cast<std::size_t>(j) < n, ErrorCode::parse, "prototype file: member out of range");
  }
  require(!in.fail(), ErrorCode::parse, "prototype file: truncated");
  return p;
}

inline void save_prototypes(const std::string& path, const PrototypeSet& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  out << serialize_prototypes(p);
}

inline PrototypeSet load_prototypes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "prototype set not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_prototypes(ss.str());
}

}  // namespace acf
