#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "acf/bounds.hpp"
#include "acf/error.hpp"
#include "acf/mcvq.hpp"
#include "acf/model_io.hpp"
#include "acf/naive_bayes.hpp"
#include "acf/prototypes.hpp"
#include "acf/strategies.hpp"

namespace acf {

/// Read-only inputs shared by every session. Loaded once at startup.
struct Catalog {
  /// Models by kind name ("mcvq", "naive_bayes"); the first inserted is the default.
  std::vector<std::pair<std::string, AnyModel>> models;
  /// Mean-change tables for the MCVQ model; enables pruning when present.
  std::optional<BoundTables> tables;
  std::optional<PrototypeSet> prototypes;
  /// Per-item training entropies; required by the entropy strategy.
  std::vector<double> entropies;
  std::vector<std::string> item_labels;

  const AnyModel* find(const std::string& kind) const {
    for (const auto& [k, m] : models)
      if (k == kind) return &m;
    return nullptr;
  }
  std::size_t n_items() const {
    require(!models.empty(), ErrorCode::contract, "catalog has no model");
    return std::visit([](const auto& m) { return m.n_items(); }, models.front().second);
  }
  int rho() const {
    return std::visit([](const auto& m) { return m.rho(); }, models.front().second);
  }
  std::string label(ItemIndex j) const {
    const auto jj = static_cast<std::size_t>(j);
    return jj < item_labels.size() ? item_labels[jj] : std::to_string(j);
  }
};

/// Per-session strategy settings; anything unset falls back to the service defaults.
struct SessionOptions {
  std::optional<std::string> model_kind{};
  std::optional<StrategyKind> strategy{};
  std::optional<double> evoi_threshold{};
  std::optional<bool> use_prototypes{};
  std::optional<std::uint64_t> seed{};
};

struct ServiceConfig {
  StrategyKind strategy = StrategyKind::evoi;
  double evoi_threshold = 0.0;
  bool use_prototypes = false;
  std::uint64_t seed = 0;
  /// Ranked queries returned by next_query.
  std::size_t query_top_k = 5;
  /// Append-only session log; empty keeps sessions in memory only.
  std::string store_path;
  unsigned threads = 1;
};

struct HistoryEntry {
  ItemIndex item = 0;
  Rating rating = 0;
  /// EVOI of the item at the state just before it was rated.
  double evoi = 0.0;
};

struct RankedQuery {
  ItemIndex item = 0;
  double score = 0.0;
};

struct QueryResult {
  std::optional<ItemIndex> item;
  double expected_evoi = 0.0;
  bool stop = false;
  std::string reason;
  std::size_t targets_pruned = 0;
  std::size_t targets_considered = 0;
  bool prototype_fallback = false;
  std::vector<RankedQuery> ranked;
};

struct Recommendation {
  ItemIndex item = 0;
  double mean = 0.0;
};

struct SessionSnapshot {
  std::string id;
  std::string model_kind;
  StrategyKind strategy = StrategyKind::evoi;
  double evoi_threshold = 0.0;
  bool use_prototypes = false;
  std::uint64_t seed = 0;
  std::vector<HistoryEntry> history;
  std::int64_t created_ms = 0, updated_ms = 0;
  /// MCVQ: K x L attitude posterior; naive Bayes: class posterior.
  std::vector<double> posterior;
};

namespace detail {

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// 128 random bits from the OS entropy source, as 32 hex digits.
inline std::string random_token() {
  std::random_device rd;
  std::uint64_t a = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  std::uint64_t b = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return hex64(a) + hex64(b);
}

}  // namespace detail

/// Interactive sessions over a fixed catalog. Session mutations are serialized by a per-session
/// mutex; distinct sessions proceed in parallel. Every mutation is appended to the store before
/// it is applied, and the in-memory state is always the replay of the stored history.
class SessionService {
 public:
  using State = std::variant<UserState, NbUserState>;

 private:
  struct Session {
    mutable std::mutex mutex;
    std::string id, model_kind;
    StrategyKind strategy = StrategyKind::evoi;
    double evoi_threshold = 0.0;
    bool use_prototypes = false;
    std::uint64_t seed = 0;
    std::vector<HistoryEntry> history;
    std::int64_t created_ms = 0, updated_ms = 0;
    State state;
  };

  template <class F>
  auto with_model(const Session& s, F&& f) const {
    const AnyModel& am = *catalog_->find(s.model_kind);
    if (const auto* m = std::get_if<McvqModel>(&am)) return f(*m, std::get<UserState>(s.state));
    return f(std::get<NaiveBayesModel>(am), std::get<NbUserState>(s.state));
  }

 public:
  SessionService(std::shared_ptr<const Catalog> catalog, ServiceConfig cfg)
      : catalog_(std::move(catalog)), cfg_(std::move(cfg)) {
    require(catalog_ && !catalog_->models.empty(), ErrorCode::validation, "service needs at least one model");
    for (const auto& [kind, m] : catalog_->models) {
      const auto M = std::visit([](const auto& x) { return x.n_items(); }, m);
      require(M == catalog_->n_items(), ErrorCode::validation, "all served models must share the item set");
    }
    if (!cfg_.store_path.empty()) replay_store();
  }

  const Catalog& catalog() const { return *catalog_; }
  const ServiceConfig& config() const { return cfg_; }

  SessionSnapshot create(const SessionOptions& opt = {}) {
    auto s = std::make_shared<Session>();
    s->model_kind = opt.model_kind.value_or(catalog_->models.front().first);
    const AnyModel* m = catalog_->find(s->model_kind);
    if (!m) throw Error(ErrorCode::not_found, "unknown model '" + s->model_kind + "'");
    s->strategy = opt.strategy.value_or(cfg_.strategy);
    s->evoi_threshold = opt.evoi_threshold.value_or(cfg_.evoi_threshold);
    s->use_prototypes = opt.use_prototypes.value_or(cfg_.use_prototypes);
    s->seed = opt.seed.value_or(cfg_.seed);
    require(s->evoi_threshold >= 0.0, ErrorCode::validation, "evoi_threshold must be >= 0");
    require(s->strategy != StrategyKind::entropy || !catalog_->entropies.empty(), ErrorCode::validation,
            "the entropy strategy needs training data loaded into the service");
    require(!s->use_prototypes || catalog_->prototypes, ErrorCode::validation, "no prototype set is loaded");
    s->id = detail::random_token();
    s->created_ms = s->updated_ms = detail::now_ms();
    s->state = initial_state(*m);
    append(nlohmann::json{{"op", "create"},
                          {"id", s->id},
                          {"model_kind", s->model_kind},
                          {"strategy", to_string(s->strategy)},
                          {"evoi_threshold", s->evoi_threshold},
                          {"use_prototypes", s->use_prototypes},
                          {"seed", s->seed},
                          {"ts", s->created_ms}});
    std::unique_lock lock(map_mutex_);
    sessions_[s->id] = s;
    return snapshot_locked(*s);
  }

  SessionSnapshot get(const std::string& id) const {
    auto s = lookup(id);
    std::lock_guard g(s->mutex);
    return snapshot_locked(*s);
  }

  QueryResult next_query(const std::string& id, std::optional<std::size_t> top_k = std::nullopt) const {
    auto s = lookup(id);
    std::lock_guard g(s->mutex);
    const std::size_t k = top_k.value_or(cfg_.query_top_k);
    require(k >= 1, ErrorCode::validation, "top_k must be >= 1");
    return with_model(*s, [&](const auto& m, const auto& state) { return query_locked(*s, m, state, k); });
  }

  SessionSnapshot submit_rating(const std::string& id, ItemIndex item, Rating rating) {
    auto s = lookup(id);
    std::lock_guard g(s->mutex);
    require(item >= 0 && static_cast<std::size_t>(item) < catalog_->n_items(), ErrorCode::validation,
            "item " + std::to_string(item) + " out of range");
    require(rating >= 1 && rating <= catalog_->rho(), ErrorCode::validation,
            "rating " + std::to_string(rating) + " outside 1.." + std::to_string(catalog_->rho()));
    const bool seen = with_model(*s, [&](const auto&, const auto& st) { return st.observations().contains(item); });
    if (seen) throw Error(ErrorCode::conflict, "item " + std::to_string(item) + " already rated in this session");
    const double v = with_model(*s, [&](const auto& m, const auto& st) {
      const auto targets = st.observations().unobserved();
      return evoi(m, st, item, targets);
    });
    const auto ts = detail::now_ms();
    append(nlohmann::json{{"op", "rate"}, {"id", s->id}, {"item", item}, {"rating", rating}, {"evoi", v}, {"ts", ts}});
    apply_rating(*s, item, rating, v);
    s->updated_ms = ts;
    return snapshot_locked(*s);
  }

  std::vector<Recommendation> recommendations(const std::string& id, std::size_t top_n) const {
    require(top_n >= 1, ErrorCode::validation, "top_n must be >= 1");
    auto s = lookup(id);
    std::lock_guard g(s->mutex);
    return with_model(*s, [&](const auto& m, const auto& st) {
      std::vector<Recommendation> out;
      for (ItemIndex j : st.observations().unobserved()) out.push_back({j, m.predict(st, j).mean});
      std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean > b.mean; });
      if (out.size() > top_n) out.resize(top_n);
      return out;
    });
  }

  /// Rebuilds a session's state from its history alone, for the replay invariant.
  State replayed_state(const std::string& id) const {
    auto s = lookup(id);
    std::lock_guard g(s->mutex);
    const AnyModel& am = *catalog_->find(s->model_kind);
    return std::visit(
        [&](const auto& m) -> State {
          auto st = m.initial_state();
          for (const auto& h : s->history) st = m.observe(st, h.item, h.rating);
          return st;
        },
        am);
  }

  State state(const std::string& id) const {
    auto s = lookup(id);
    std::lock_guard g(s->mutex);
    return s->state;
  }

  std::size_t session_count() const {
    std::shared_lock lock(map_mutex_);
    return sessions_.size();
  }

 private:
  static State initial_state(const AnyModel& m) {
    return std::visit([](const auto& x) -> State { return x.initial_state(); }, m);
  }

  std::shared_ptr<Session> lookup(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::not_found, "session not found: " + id);
    return it->second;
  }

  void apply_rating(Session& s, ItemIndex item, Rating rating, double v) {
    const AnyModel& am = *catalog_->find(s.model_kind);
    if (const auto* m = std::get_if<McvqModel>(&am))
      s.state = m->observe(std::get<UserState>(s.state), item, rating);
    else
      s.state = std::get<NaiveBayesModel>(am).observe(std::get<NbUserState>(s.state), item, rating);
    s.history.push_back({item, rating, v});
  }

  template <class M, class S>
  QueryResult query_locked(const Session& s, const M& m, const S& st, std::size_t k) const {
    StrategyConfig sc;
    sc.kind = s.strategy;
    sc.evoi_threshold = s.evoi_threshold;
    sc.seed = s.seed;
    sc.threads = cfg_.threads;
    if constexpr (std::is_same_v<M, McvqModel>)
      if (catalog_->tables) sc.pruning = {&catalog_->tables->mean_change, PruneMode::per_response};
    const auto targets = st.observations().unobserved();
    std::vector<ItemIndex> candidates = targets;
    QueryResult out;
    if (s.use_prototypes && catalog_->prototypes) {
      const auto members = catalog_->prototypes->sorted_members();
      std::vector<ItemIndex> r;
      std::set_intersection(targets.begin(), targets.end(), members.begin(), members.end(), std::back_inserter(r));
      if (r.empty())
        out.prototype_fallback = !targets.empty();
      else
        candidates = std::move(r);
    }
    const auto d = select_query(m, st, sc, candidates, targets, catalog_->entropies);
    out.item = d.stop && !d.chosen_query ? std::nullopt : d.chosen_query;
    out.stop = d.stop;
    out.reason = d.reason;
    out.targets_pruned = d.targets_pruned;
    out.targets_considered = d.targets_considered;
    if (d.chosen_query) {
      // EVOI of the chosen item regardless of strategy, so every response carries it.
      out.expected_evoi = s.strategy == StrategyKind::evoi ? d.best_score() : evoi(m, st, *d.chosen_query, targets);
      std::vector<RankedQuery> ranked;
      for (std::size_t i = 0; i < d.candidates.size(); ++i) ranked.push_back({d.candidates[i], d.scores[i]});
      std::stable_sort(ranked.begin(), ranked.end(), [&](const RankedQuery& a, const RankedQuery& b) {
        if (a.item == *d.chosen_query) return b.item != *d.chosen_query;
        if (b.item == *d.chosen_query) return false;
        return a.score > b.score;
      });
      if (ranked.size() > k) ranked.resize(k);
      out.ranked = std::move(ranked);
    }
    return out;
  }

  SessionSnapshot snapshot_locked(const Session& s) const {
    SessionSnapshot out;
    out.id = s.id;
    out.model_kind = s.model_kind;
    out.strategy = s.strategy;
    out.evoi_threshold = s.evoi_threshold;
    out.use_prototypes = s.use_prototypes;
    out.seed = s.seed;
    out.history = s.history;
    out.created_ms = s.created_ms;
    out.updated_ms = s.updated_ms;
    if (const auto* u = std::get_if<UserState>(&s.state))
      out.posterior = u->attitude_posterior();
    else
      out.posterior = std::get<NbUserState>(s.state).component_posterior();
    return out;
  }

  void append(const nlohmann::json& rec) {
    if (cfg_.store_path.empty()) return;
    std::lock_guard g(store_mutex_);
    std::ofstream out(cfg_.store_path, std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot append to session store " + cfg_.store_path);
    out << rec.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::io, "write to session store failed");
  }

  /// Rebuilds sessions from the store. A torn final line (crash mid-write) is ignored; any
  /// other malformed record is a parse error.
  void replay_store() {
    std::ifstream in(cfg_.store_path, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    for (const auto& text : lines) {
      ++lineno;
      if (text.empty()) continue;
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception&) {
        if (lineno == lines.size()) break;
        throw Error(ErrorCode::parse, cfg_.store_path + ": line " + std::to_string(lineno) + ": malformed record");
      }
      const std::string op = rec.value("op", "");
      if (op == "create") {
        auto s = std::make_shared<Session>();
        s->id = rec.at("id").get<std::string>();
        s->model_kind = rec.at("model_kind").get<std::string>();
        const AnyModel* m = catalog_->find(s->model_kind);
        if (!m) throw Error(ErrorCode::validation, "session store references unknown model '" + s->model_kind + "'");
        s->strategy = parse_strategy(rec.at("strategy").get<std::string>());
        s->evoi_threshold = rec.at("evoi_threshold").get<double>();
        s->use_prototypes = rec.at("use_prototypes").get<bool>();
        s->seed = rec.at("seed").get<std::uint64_t>();
        s->created_ms = s->updated_ms = rec.value("ts", std::int64_t{0});
        s->state = initial_state(*m);
        sessions_[s->id] = s;
      } else if (op == "rate") {
        auto it = sessions_.find(rec.at("id").get<std::string>());
        if (it == sessions_.end())
          throw Error(ErrorCode::parse, cfg_.store_path + ": line " + std::to_string(lineno) + ": rating for unknown session");
        apply_rating(*it->second, rec.at("item").get<ItemIndex>(), rec.at("rating").get<Rating>(),
                     rec.value("evoi", 0.0));
        it->second->updated_ms = rec.value("ts", std::int64_t{0});
      } else {
        throw Error(ErrorCode::parse, cfg_.store_path + ": line " + std::to_string(lineno) + ": unknown op '" + op + "'");
      }
    }
  }

  std::shared_ptr<const Catalog> catalog_;
  ServiceConfig cfg_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex store_mutex_;
};

}  // namespace acf
