#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "acf/error.hpp"
#include "acf/mcvq.hpp"
#include "acf/util.hpp"

namespace acf {

struct Observation {
  UserIndex user = 0;
  ItemIndex item = 0;
  Rating rating = 0;
  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Sparse (user, item, rating) observations on the integer scale 1..rho. Observations are kept
/// sorted by (user, item), one per pair. Labels carry the external ids through filtering.
struct RatingsDataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  int rho = 0;
  std::vector<Observation> observations;
  std::vector<std::string> user_labels;
  std::vector<std::string> item_labels;

  void validate() const {
    require(rho >= 1, ErrorCode::validation, "rho must be >= 1");
    require(user_labels.empty() || user_labels.size() == n_users, ErrorCode::validation, "user label count mismatch");
    require(item_labels.empty() || item_labels.size() == n_items, ErrorCode::validation, "item label count mismatch");
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const auto& o = observations[i];
      require(o.user >= 0 && static_cast<std::size_t>(o.user) < n_users, ErrorCode::validation, "user index out of range");
      require(o.item >= 0 && static_cast<std::size_t>(o.item) < n_items, ErrorCode::validation, "item index out of range");
      require(o.rating >= 1 && o.rating <= rho, ErrorCode::validation, "rating out of range");
      if (i > 0) {
        const auto& p = observations[i - 1];
        require(std::pair(p.user, p.item) < std::pair(o.user, o.item), ErrorCode::validation,
                "observations must be sorted and unique per (user, item)");
      }
    }
  }

  std::vector<std::vector<std::pair<ItemIndex, Rating>>> by_user() const {
    std::vector<std::vector<std::pair<ItemIndex, Rating>>> out(n_users);
    for (const auto& o : observations) out[static_cast<std::size_t>(o.user)].emplace_back(o.item, o.rating);
    return out;
  }

  std::vector<std::size_t> item_counts() const {
    std::vector<std::size_t> c(n_items, 0);
    for (const auto& o : observations) ++c[static_cast<std::size_t>(o.item)];
    return c;
  }

  std::vector<std::size_t> user_counts() const {
    std::vector<std::size_t> c(n_users, 0);
    for (const auto& o : observations) ++c[static_cast<std::size_t>(o.user)];
    return c;
  }

  /// Per item, counts of each rating value (index r - 1).
  std::vector<std::vector<std::size_t>> rating_histograms() const {
    std::vector<std::vector<std::size_t>> h(n_items, std::vector<std::size_t>(static_cast<std::size_t>(rho), 0));
    for (const auto& o : observations) ++h[static_cast<std::size_t>(o.item)][static_cast<std::size_t>(o.rating - 1)];
    return h;
  }

  std::string item_label(ItemIndex j) const {
    if (item_labels.empty()) return std::to_string(j);
    return item_labels.at(static_cast<std::size_t>(j));
  }

  friend bool operator==(const RatingsDataset&, const RatingsDataset&) = default;
};

/// Column mapping for CSV ingest. Columns are named when the file has a header, else 0-based.
struct CsvSchema {
  std::string user_column = "user";
  std::string item_column = "item";
  std::string rating_column = "rating";
  char delimiter = ',';
  bool has_header = true;
  int rho = 6;
  /// Treat user/item fields as 0-based indices instead of opaque ids.
  bool numeric_ids = false;
  /// With numeric_ids, fixes n_items (0 = max index + 1).
  std::size_t n_items = 0;
};

/// Parses rows into a dataset. Users and items are indexed in order of first appearance
/// (or taken verbatim with numeric_ids). Duplicate (user, item) rows: the last one wins.
inline RatingsDataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<input>") {
  require(schema.rho >= 1, ErrorCode::validation, "rho must be >= 1");
  std::string line;
  std::size_t line_no = 0;
  int ucol = -1, icol = -1, rcol = -1;
  auto resolve_numeric = [&](const std::string& s, const char* which) {
    try {
      return static_cast<int>(parse_int(s));
    } catch (const Error&) {
      throw Error(ErrorCode::validation, std::string("without a header the ") + which + " column must be an index");
    }
  };
  if (schema.has_header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) break;
    }
    auto header = split(line, schema.delimiter);
    for (std::size_t c = 0; c < header.size(); ++c) {
      auto name = trim(header[c]);
      if (name == schema.user_column) ucol = static_cast<int>(c);
      if (name == schema.item_column) icol = static_cast<int>(c);
      if (name == schema.rating_column) rcol = static_cast<int>(c);
    }
    if (ucol < 0 || icol < 0 || rcol < 0)
      throw Error(ErrorCode::parse, source + ": line " + std::to_string(line_no) + ": header lacks user/item/rating columns");
  } else {
    ucol = resolve_numeric(schema.user_column, "user");
    icol = resolve_numeric(schema.item_column, "item");
    rcol = resolve_numeric(schema.rating_column, "rating");
  }
  const int width = std::max({ucol, icol, rcol}) + 1;

  std::unordered_map<std::string, int> user_index, item_index;
  std::vector<std::string> user_labels, item_labels;
  std::map<std::pair<int, int>, Rating> cells;
  int max_user = -1, max_item = -1;
  auto intern = [](std::unordered_map<std::string, int>& idx, std::vector<std::string>& labels, const std::string& key) {
    auto [it, inserted] = idx.emplace(key, static_cast<int>(labels.size()));
    if (inserted) labels.push_back(key);
    return it->second;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = source + ": line " + std::to_string(line_no);
    auto fields = split(line, schema.delimiter);
    if (static_cast<int>(fields.size()) < width)
      throw Error(ErrorCode::parse, where + ": expected at least " + std::to_string(width) + " fields");
    const std::string u = trim(fields[static_cast<std::size_t>(ucol)]);
    const std::string i = trim(fields[static_cast<std::size_t>(icol)]);
    const std::string rs = trim(fields[static_cast<std::size_t>(rcol)]);
    if (u.empty() || i.empty()) throw Error(ErrorCode::parse, where + ": empty user or item id");
    long long r = 0;
    try {
      r = parse_int(rs);
    } catch (const Error&) {
      throw Error(ErrorCode::parse, where + ": rating '" + rs + "' is not an integer");
    }
    if (r < 1 || r > schema.rho)
      throw Error(ErrorCode::validation,
                  where + ": rating " + std::to_string(r) + " outside 1.." + std::to_string(schema.rho));
    int ui = 0, ii = 0;
    if (schema.numeric_ids) {
      try {
        ui = static_cast<int>(parse_int(u));
        ii = static_cast<int>(parse_int(i));
      } catch (const Error&) {
        throw Error(ErrorCode::parse, where + ": numeric ids expected");
      }
      if (ui < 0 || ii < 0) throw Error(ErrorCode::parse, where + ": negative index");
      if (schema.n_items > 0 && static_cast<std::size_t>(ii) >= schema.n_items)
        throw Error(ErrorCode::validation, where + ": item index beyond n_items");
      max_user = std::max(max_user, ui);
      max_item = std::max(max_item, ii);
    } else {
      ui = intern(user_index, user_labels, u);
      ii = intern(item_index, item_labels, i);
    }
    cells[{ui, ii}] = static_cast<Rating>(r);
  }

  RatingsDataset d;
  d.rho = schema.rho;
  if (schema.numeric_ids) {
    d.n_users = static_cast<std::size_t>(max_user + 1);
    d.n_items = schema.n_items > 0 ? schema.n_items : static_cast<std::size_t>(max_item + 1);
  } else {
    d.n_users = user_labels.size();
    d.n_items = item_labels.size();
    d.user_labels = std::move(user_labels);
    d.item_labels = std::move(item_labels);
  }
  d.observations.reserve(cells.size());
  for (const auto& [key, r] : cells) d.observations.push_back({key.first, key.second, r});
  return d;
}

inline RatingsDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path);
  return parse_csv(in, schema, path);
}

/// Writes "user,item,rating" rows; ids are indices unless labels are requested and present.
inline void write_csv(std::ostream& out, const RatingsDataset& d, bool use_labels = false) {
  out << "user,item,rating\n";
  for (const auto& o : d.observations) {
    if (use_labels && !d.user_labels.empty())
      out << d.user_labels[static_cast<std::size_t>(o.user)];
    else
      out << o.user;
    out << ',';
    if (use_labels && !d.item_labels.empty())
      out << d.item_labels[static_cast<std::size_t>(o.item)];
    else
      out << o.item;
    out << ',' << o.rating << '\n';
  }
}

inline void save_csv(const std::string& path, const RatingsDataset& d, bool use_labels = false) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  write_csv(out, d, use_labels);
}

struct SplitSpec {
  std::size_t min_ratings_per_user = 1;
  std::size_t min_ratings_per_item = 1;
  std::size_t n_test_users = 0;
  std::uint64_t seed = 0;
  /// false: one pass, users first then items.
  bool iterate_to_fixed_point = true;
};

/// Keeps the users and items selected by the masks and compacts their indices.
inline RatingsDataset restrict_dataset(const RatingsDataset& d, const std::vector<bool>& keep_user,
                                       const std::vector<bool>& keep_item) {
  std::vector<int> umap(d.n_users, -1), imap(d.n_items, -1);
  RatingsDataset out;
  out.rho = d.rho;
  for (std::size_t u = 0; u < d.n_users; ++u)
    if (keep_user[u]) {
      umap[u] = static_cast<int>(out.n_users++);
      if (!d.user_labels.empty()) out.user_labels.push_back(d.user_labels[u]);
    }
  for (std::size_t i = 0; i < d.n_items; ++i)
    if (keep_item[i]) {
      imap[i] = static_cast<int>(out.n_items++);
      out.item_labels.push_back(d.item_labels.empty() ? std::to_string(i) : d.item_labels[i]);
    }
  if (d.user_labels.empty()) {
    for (std::size_t u = 0; u < d.n_users; ++u)
      if (keep_user[u]) out.user_labels.push_back(std::to_string(u));
  }
  for (const auto& o : d.observations) {
    int u = umap[static_cast<std::size_t>(o.user)], i = imap[static_cast<std::size_t>(o.item)];
    if (u >= 0 && i >= 0) out.observations.push_back({u, i, o.rating});
  }
  return out;
}

/// Drops users with fewer than min_ratings_per_user ratings and items with fewer than
/// min_ratings_per_item, repeating until nothing changes (or once, users then items).
inline RatingsDataset density_filter(const RatingsDataset& d, const SplitSpec& spec) {
  std::vector<bool> keep_user(d.n_users, true), keep_item(d.n_items, true);
  while (true) {
    bool changed = false;
    std::vector<std::size_t> uc(d.n_users, 0), ic(d.n_items, 0);
    for (const auto& o : d.observations)
      if (keep_user[static_cast<std::size_t>(o.user)] && keep_item[static_cast<std::size_t>(o.item)])
        ++uc[static_cast<std::size_t>(o.user)];
    for (std::size_t u = 0; u < d.n_users; ++u)
      if (keep_user[u] && uc[u] < spec.min_ratings_per_user) {
        keep_user[u] = false;
        changed = true;
      }
    for (const auto& o : d.observations)
      if (keep_user[static_cast<std::size_t>(o.user)] && keep_item[static_cast<std::size_t>(o.item)])
        ++ic[static_cast<std::size_t>(o.item)];
    for (std::size_t i = 0; i < d.n_items; ++i)
      if (keep_item[i] && ic[i] < spec.min_ratings_per_item) {
        keep_item[i] = false;
        changed = true;
      }
    if (!changed || !spec.iterate_to_fixed_point) break;
  }
  RatingsDataset out = restrict_dataset(d, keep_user, keep_item);
  // Users can lose every rating when all their items are dropped in the single-pass mode.
  if (out.observations.empty()) throw Error(ErrorCode::validation, "filter eliminated all data");
  return out;
}

/// Per test user, a fixed order over the user's rated items; the first kappa entries are the
/// revealed ("known") ratings and the rest are held out.
struct ReplayMask {
  std::vector<std::vector<ItemIndex>> schedules;

  std::vector<ItemIndex> known(std::size_t user, std::size_t kappa) const {
    const auto& s = schedules.at(user);
    return {s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min(kappa, s.size()))};
  }
  std::vector<ItemIndex> held_out(std::size_t user, std::size_t kappa) const {
    const auto& s = schedules.at(user);
    if (kappa >= s.size()) return {};
    std::vector<ItemIndex> out(s.begin() + static_cast<std::ptrdiff_t>(kappa), s.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  friend bool operator==(const ReplayMask&, const ReplayMask&) = default;
};

struct Split {
  RatingsDataset train;
  RatingsDataset test;
  ReplayMask mask;
  /// Index of each train/test user in the dataset that was split.
  std::vector<UserIndex> train_origin;
  std::vector<UserIndex> test_origin;
  std::uint64_t seed = 0;
  friend bool operator==(const Split&, const Split&) = default;
};

/// Moves n_test_users randomly chosen users into the test set and draws each test user's
/// replay schedule as a seeded permutation of their rated items.
inline Split make_split(const RatingsDataset& d, const SplitSpec& spec) {
  require(spec.n_test_users < d.n_users, ErrorCode::validation,
          "n_test_users (" + std::to_string(spec.n_test_users) + ") exceeds available users (" +
              std::to_string(d.n_users) + ")");
  std::mt19937_64 rng(spec.seed);
  std::vector<UserIndex> users(d.n_users);
  std::iota(users.begin(), users.end(), 0);
  std::shuffle(users.begin(), users.end(), rng);
  std::vector<bool> is_test(d.n_users, false);
  for (std::size_t i = 0; i < spec.n_test_users; ++i) is_test[static_cast<std::size_t>(users[i])] = true;

  Split s;
  s.seed = spec.seed;
  std::vector<bool> all_items(d.n_items, true), train_users(d.n_users), test_users(d.n_users);
  for (std::size_t u = 0; u < d.n_users; ++u) {
    train_users[u] = !is_test[u];
    test_users[u] = is_test[u];
    (is_test[u] ? s.test_origin : s.train_origin).push_back(static_cast<UserIndex>(u));
  }
  s.train = restrict_dataset(d, train_users, all_items);
  s.test = restrict_dataset(d, test_users, all_items);
  auto rows = s.test.by_user();
  s.mask.schedules.resize(s.test.n_users);
  for (std::size_t u = 0; u < s.test.n_users; ++u) {
    auto& sched = s.mask.schedules[u];
    for (const auto& [item, r] : rows[u]) sched.push_back(item);
    std::shuffle(sched.begin(), sched.end(), rng);
  }
  return s;
}

/// Samples a dataset from an MCVQ model: one hard attitude per user per VQ, then for each
/// (user, item) kept with probability `density`, a type from P(T_j) and a rating from theta.
inline RatingsDataset generate_synthetic(const McvqModel& gt, std::size_t n_users, double density,
                                         std::uint64_t seed) {
  require(density > 0.0 && density <= 1.0, ErrorCode::validation, "density must be in (0, 1]");
  require(n_users > 0, ErrorCode::validation, "n_users must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](auto&& prob, std::size_t n) {
    double u = unif(rng), acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += prob(i);
      if (u < acc) return i;
    }
    // Round-off: return the last category with nonzero mass.
    for (std::size_t i = n; i-- > 0;)
      if (prob(i) > 0.0) return i;
    return n - 1;
  };
  const std::size_t M = gt.n_items(), K = gt.n_types(), L = gt.n_attitudes();
  RatingsDataset d;
  d.n_users = n_users;
  d.n_items = M;
  d.rho = gt.rho();
  for (std::size_t u = 0; u < n_users; ++u) d.user_labels.push_back("u" + std::to_string(u));
  for (std::size_t j = 0; j < M; ++j) d.item_labels.push_back("i" + std::to_string(j));
  std::vector<std::size_t> attitude(K);
  for (std::size_t u = 0; u < n_users; ++u) {
    for (std::size_t k = 0; k < K; ++k) attitude[k] = draw([&](std::size_t l) { return gt.attitude_prior(k, l); }, L);
    for (std::size_t j = 0; j < M; ++j) {
      if (density < 1.0 && unif(rng) >= density) continue;
      std::size_t k = draw([&](std::size_t kk) { return gt.type_prob(j, kk); }, K);
      std::size_t r = draw([&](std::size_t rr) { return gt.theta(j, k, attitude[k], static_cast<Rating>(rr + 1)); },
                           static_cast<std::size_t>(gt.rho()));
      d.observations.push_back({static_cast<UserIndex>(u), static_cast<ItemIndex>(j), static_cast<Rating>(r + 1)});
    }
  }
  return d;
}

// ---------------------------------------------------------------------------------------------
// Split manifest: a versioned text file recording the seed, the compaction tables (item and
// user labels with their index in the split dataset) and every test user's replay schedule.
// The last line is "checksum <fnv1a64 of all preceding bytes>".

inline std::string format_split_manifest(const Split& s) {
  auto check_label = [](const std::string& l) {
    require(l.find_first_of("\t\n\r") == std::string::npos, ErrorCode::validation,
            "labels may not contain tabs or newlines");
    return l;
  };
  std::ostringstream o;
  o << "ACF-SPLIT 1\n";
  o << "seed " << s.seed << "\n";
  o << "rho " << s.train.rho << "\n";
  o << "items " << s.train.n_items << "\n";
  for (std::size_t j = 0; j < s.train.n_items; ++j) o << j << '\t' << check_label(s.train.item_label(static_cast<ItemIndex>(j))) << '\n';
  o << "train_users " << s.train.n_users << "\n";
  for (std::size_t u = 0; u < s.train.n_users; ++u)
    o << s.train_origin[u] << '\t' << check_label(s.train.user_labels.empty() ? std::to_string(u) : s.train.user_labels[u]) << '\n';
  o << "test_users " << s.test.n_users << "\n";
  for (std::size_t u = 0; u < s.test.n_users; ++u) {
    o << s.test_origin[u] << '\t' << check_label(s.test.user_labels.empty() ? std::to_string(u) : s.test.user_labels[u]) << '\t';
    const auto& sched = s.mask.schedules[u];
    for (std::size_t i = 0; i < sched.size(); ++i) o << (i ? " " : "") << sched[i];
    o << '\n';
  }
  std::string body = o.str();
  return body + "checksum " + hex64(fnv1a64(body)) + "\n";
}

/// Manifest contents without the rating rows (those live in the train/test CSVs).
struct SplitManifest {
  std::uint64_t seed = 0;
  int rho = 0;
  std::vector<std::string> item_labels;
  std::vector<UserIndex> train_origin, test_origin;
  std::vector<std::string> train_labels, test_labels;
  ReplayMask mask;
};

inline SplitManifest parse_split_manifest(const std::string& text) {
  auto cut = text.rfind("checksum ");
  require(cut != std::string::npos, ErrorCode::parse, "split manifest: missing checksum");
  const std::string body = text.substr(0, cut);
  require(trim(text.substr(cut + 9)) == hex64(fnv1a64(body)), ErrorCode::parse, "split manifest: checksum mismatch");
  std::istringstream in(body);
  std::string line;
  auto next = [&]() {
    if (!std::getline(in, line)) throw Error(ErrorCode::parse, "split manifest: truncated");
    return line;
  };
  auto keyed = [&](const std::string& key) {
    auto f = split(next(), ' ');
    require(f.size() == 2 && f[0] == key, ErrorCode::parse, "split manifest: expected '" + key + "'");
    return f[1];
  };
  require(next() == "ACF-SPLIT 1", ErrorCode::parse, "split manifest: unsupported header");
  SplitManifest m;
  m.seed = static_cast<std::uint64_t>(std::stoull(keyed("seed")));
  m.rho = static_cast<int>(parse_int(keyed("rho")));
  auto n_items = static_cast<std::size_t>(parse_int(keyed("items")));
  for (std::size_t j = 0; j < n_items; ++j) {
    auto f = split(next(), '\t');
    require(f.size() == 2 && parse_int(f[0]) == static_cast<long long>(j), ErrorCode::parse, "split manifest: bad item row");
    m.item_labels.push_back(f[1]);
  }
  auto n_train = static_cast<std::size_t>(parse_int(keyed("train_users")));
  for (std::size_t u = 0; u < n_train; ++u) {
    auto f = split(next(), '\t');
    require(f.size() == 2, ErrorCode::parse, "split manifest: bad train user row");
    m.train_origin.push_back(static_cast<UserIndex>(parse_int(f[0])));
    m.train_labels.push_back(f[1]);
  }
  auto n_test = static_cast<std::size_t>(parse_int(keyed("test_users")));
  for (std::size_t u = 0; u < n_test; ++u) {
    auto f = split(next(), '\t');
    require(f.size() == 3, ErrorCode::parse, "split manifest: bad test user row");
    m.test_origin.push_back(static_cast<UserIndex>(parse_int(f[0])));
    m.test_labels.push_back(f[1]);
    std::vector<ItemIndex> sched;
    if (!f[2].empty())
      for (const auto& tok : split(f[2], ' ')) sched.push_back(static_cast<ItemIndex>(parse_int(tok)));
    m.mask.schedules.push_back(std::move(sched));
  }
  return m;
}

}  // namespace acf
