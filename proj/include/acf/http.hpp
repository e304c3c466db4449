#pragma once

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "acf/service.hpp"

namespace acf {

/// HTTP status for an error code. Client mistakes map to 4xx, everything else to 500.
inline int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::validation:
    case ErrorCode::parse: return 400;
    default: return 500;
  }
}

inline nlohmann::json to_json(const SessionSnapshot& s, const Catalog& cat) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : s.history)
    hist.push_back({{"item", h.item}, {"label", cat.label(h.item)}, {"rating", h.rating}, {"evoi", h.evoi}});
  return {{"id", s.id},
          {"model_kind", s.model_kind},
          {"strategy", to_string(s.strategy)},
          {"evoi_threshold", s.evoi_threshold},
          {"use_prototypes", s.use_prototypes},
          {"seed", s.seed},
          {"history", hist},
          {"n_rated", s.history.size()},
          {"posterior", s.posterior},
          {"created_ms", s.created_ms},
          {"updated_ms", s.updated_ms}};
}

inline nlohmann::json to_json(const QueryResult& q, const Catalog& cat) {
  nlohmann::json ranked = nlohmann::json::array();
  for (const auto& r : q.ranked) ranked.push_back({{"item", r.item}, {"label", cat.label(r.item)}, {"score", r.score}});
  nlohmann::json out{{"stop", q.stop},
                     {"reason", q.reason},
                     {"expected_evoi", q.expected_evoi},
                     {"targets_pruned", q.targets_pruned},
                     {"targets_considered", q.targets_considered},
                     {"prototype_fallback", q.prototype_fallback},
                     {"ranked", ranked}};
  if (q.item) {
    out["item"] = *q.item;
    out["label"] = cat.label(*q.item);
  } else {
    out["item"] = nullptr;
  }
  return out;
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, ErrorCode c, const std::string& msg) {
  send_json(res, http_status(c), {{"code", to_string(c)}, {"message", msg}});
}

inline nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    require(j.is_object(), ErrorCode::parse, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("malformed JSON body: ") + e.what());
  }
}

inline std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string v = req.get_param_value(name);
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty() && n >= 1, ErrorCode::validation,
          std::string(name) + " must be a positive integer");
  return static_cast<std::size_t>(n);
}

/// Typed field read; a wrong JSON type is a validation error, not a crash.
template <class T>
std::optional<T> field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || j.at(name).is_null()) return std::nullopt;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::validation, std::string("field '") + name + "' has the wrong type");
  }
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, ErrorCode::internal, e.what());
    }
  };
}

}  // namespace detail

/// Registers the session API on `srv`. The service must outlive the server.
inline void mount_routes(httplib::Server& srv, SessionService& svc) {
  using detail::guarded;
  using detail::send_json;
  const Catalog& cat = svc.catalog();

  srv.Get("/healthz", guarded([&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"sessions", svc.session_count()}});
  }));

  srv.Get("/items", guarded([&cat](const httplib::Request&, httplib::Response& res) {
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t j = 0; j < cat.n_items(); ++j)
      items.push_back({{"item", j}, {"label", cat.label(static_cast<ItemIndex>(j))}});
    nlohmann::json models = nlohmann::json::array();
    for (const auto& [k, m] : cat.models) models.push_back(k);
    send_json(res, 200, {{"items", items}, {"rho", cat.rho()}, {"models", models}});
  }));

  srv.Post("/sessions", guarded([&svc, &cat](const httplib::Request& req, httplib::Response& res) {
    const auto body = detail::parse_body(req);
    SessionOptions o;
    o.model_kind = detail::field<std::string>(body, "model_kind");
    if (auto s = detail::field<std::string>(body, "strategy")) o.strategy = parse_strategy(*s);
    o.evoi_threshold = detail::field<double>(body, "evoi_threshold");
    o.use_prototypes = detail::field<bool>(body, "use_prototypes");
    o.seed = detail::field<std::uint64_t>(body, "seed");
    send_json(res, 201, to_json(svc.create(o), cat));
  }));

  srv.Get(R"(/sessions/([0-9a-f]+))", guarded([&svc, &cat](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, to_json(svc.get(req.matches[1]), cat));
  }));

  srv.Get(R"(/sessions/([0-9a-f]+)/query)", guarded([&svc, &cat](const httplib::Request& req, httplib::Response& res) {
    const auto k = detail::size_param(req, "top_k", svc.config().query_top_k);
    send_json(res, 200, to_json(svc.next_query(req.matches[1], k), cat));
  }));

  srv.Post(R"(/sessions/([0-9a-f]+)/ratings)", guarded([&svc, &cat](const httplib::Request& req, httplib::Response& res) {
    const auto body = detail::parse_body(req);
    const auto item = detail::field<long long>(body, "item");
    const auto rating = detail::field<long long>(body, "rating");
    require(item.has_value() && rating.has_value(), ErrorCode::validation, "body needs integer 'item' and 'rating'");
    require(*item >= 0 && *item < static_cast<long long>(cat.n_items()), ErrorCode::validation,
            "item " + std::to_string(*item) + " out of range");
    require(*rating >= 1 && *rating <= cat.rho(), ErrorCode::validation,
            "rating " + std::to_string(*rating) + " outside 1.." + std::to_string(cat.rho()));
    const auto snap = svc.submit_rating(req.matches[1], static_cast<ItemIndex>(*item), static_cast<Rating>(*rating));
    send_json(res, 200, to_json(snap, cat));
  }));

  srv.Get(R"(/sessions/([0-9a-f]+)/recommendations)",
          guarded([&svc, &cat](const httplib::Request& req, httplib::Response& res) {
            const auto n = detail::size_param(req, "top_n", 10);
            nlohmann::json out = nlohmann::json::array();
            for (const auto& r : svc.recommendations(req.matches[1], n))
              out.push_back({{"item", r.item}, {"label", cat.label(r.item)}, {"mean", r.mean}});
            send_json(res, 200, {{"recommendations", out}});
          }));

  // Unmatched routes get the same JSON error shape as handler failures.
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty())
      detail::send_error(res, res.status == 404 ? ErrorCode::not_found : ErrorCode::validation,
                         "no route for this request");
  });
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  // CORS preflight: browsers send this before a JSON POST from another origin.
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Max-Age", "600");
  });
}

}  // namespace acf
