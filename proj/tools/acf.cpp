// acf: command-line pipeline for active collaborative filtering.
//
//   demo-data -> ingest -> train -> bounds -> prototypes -> evaluate
//                                                    serve
//
// Every stage reads and writes files under --data-dir. Exit codes: 0 success, 1 runtime
// error, 2 usage error.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "acf/bounds.hpp"
#include "acf/data.hpp"
#include "acf/eval.hpp"
#include "acf/http.hpp"
#include "acf/model_io.hpp"
#include "acf/prototypes.hpp"
#include "acf/service.hpp"
#include "acf/training.hpp"

namespace fs = std::filesystem;
using namespace acf;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string data_dir = "acf-data";
  bool verbose = false;
};

std::string in_dir(const Globals& g, const std::string& name) { return (fs::path(g.data_dir) / name).string(); }

void log(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << "acf: " << msg << '\n';
}

std::string read_text(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, std::string(what) + " not found: " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed: " + path);
}

void emit(const std::string& path) { std::cout << path << '\n'; }

// Split files: train.csv and test.csv carry compact indices; split.manifest carries labels,
// provenance and the replay schedules.
Split load_split(const Globals& g) {
  const auto manifest = parse_split_manifest(read_text(in_dir(g, "split.manifest"), "split manifest"));
  CsvSchema schema;
  schema.rho = manifest.rho;
  schema.numeric_ids = true;
  schema.n_items = manifest.item_labels.size();
  auto load = [&](const char* name, std::size_t n_users, const std::vector<std::string>& labels) {
    const auto path = in_dir(g, name);
    if (!fs::exists(path)) throw Error(ErrorCode::not_found, std::string("split file not found: ") + path);
    auto d = load_csv(path, schema);
    require(d.n_users <= n_users, ErrorCode::parse, path + ": more users than the manifest lists");
    d.n_users = n_users;
    d.user_labels = labels;
    d.item_labels = manifest.item_labels;
    d.validate();
    return d;
  };
  Split s;
  s.seed = manifest.seed;
  s.train = load("train.csv", manifest.train_origin.size(), manifest.train_labels);
  s.test = load("test.csv", manifest.test_origin.size(), manifest.test_labels);
  s.train_origin = manifest.train_origin;
  s.test_origin = manifest.test_origin;
  s.mask = manifest.mask;
  return s;
}

McvqModel load_mcvq(const std::string& path) {
  auto m = load_model(path);
  if (auto* p = std::get_if<McvqModel>(&m)) return std::move(*p);
  throw Error(ErrorCode::validation, path + " is not an MCVQ model");
}

std::vector<std::size_t> parse_sizes(const std::string& csv, const char* what) {
  std::vector<std::size_t> out;
  for (const auto& tok : split(csv, ',')) {
    const long long v = parse_int(trim(tok));
    require(v >= 1, ErrorCode::validation, std::string(what) + " entries must be >= 1");
    out.push_back(static_cast<std::size_t>(v));
  }
  require(!out.empty(), ErrorCode::validation, std::string(what) + " is empty");
  return out;
}

// --- demo-data ---------------------------------------------------------------------------

struct DemoOpts {
  std::size_t users = 600, items = 50, types = 3, attitudes = 2;
  int rho = 6;
  double density = 0.4;
  double gap = 3.0;
};

void cmd_demo(const Globals& g, const DemoOpts& o) {
  SeparatedTruthSpec spec;
  spec.n_items = o.items;
  spec.n_types = o.types;
  spec.n_attitudes = o.attitudes;
  spec.rho = o.rho;
  spec.min_attitude_gap = o.gap;
  spec.seed = g.seed;
  const auto truth = make_separated_truth(spec);
  const auto d = generate_synthetic(truth, o.users, o.density, g.seed + 1);
  std::ostringstream csv;
  write_csv(csv, d, true);
  write_text(in_dir(g, "ratings.csv"), csv.str());
  write_text(in_dir(g, "truth.model"), serialize_model(truth));
  emit(in_dir(g, "ratings.csv"));
  emit(in_dir(g, "truth.model"));
}

// --- ingest ------------------------------------------------------------------------------

struct IngestOpts {
  std::string input;
  CsvSchema schema;
  std::string delimiter = ",";
  bool no_header = false;
  SplitSpec split;
};

void cmd_ingest(const Globals& g, IngestOpts o) {
  if (o.input.empty()) o.input = in_dir(g, "ratings.csv");
  require(o.delimiter.size() == 1, ErrorCode::validation, "--delimiter must be one character");
  o.schema.delimiter = o.delimiter[0];
  o.schema.has_header = !o.no_header;
  if (!fs::exists(o.input)) throw Error(ErrorCode::not_found, "ratings file not found: " + o.input);
  const auto raw = load_csv(o.input, o.schema);
  const auto filtered = density_filter(raw, o.split);
  o.split.seed = g.seed;
  const auto s = make_split(filtered, o.split);
  log(g, std::to_string(filtered.n_users) + " users, " + std::to_string(filtered.n_items) + " items after filtering");
  std::ostringstream train, test;
  write_csv(train, s.train);
  write_csv(test, s.test);
  write_text(in_dir(g, "train.csv"), train.str());
  write_text(in_dir(g, "test.csv"), test.str());
  write_text(in_dir(g, "split.manifest"), format_split_manifest(s));
  for (const char* f : {"train.csv", "test.csv", "split.manifest"}) emit(in_dir(g, f));
}

// --- train -------------------------------------------------------------------------------

struct TrainOpts {
  std::string kind = "mcvq";
  std::string out;
  TrainConfig cfg;
};

void cmd_train(const Globals& g, TrainOpts o) {
  const auto s = load_split(g);
  o.cfg.seed = g.seed;
  o.cfg.threads = g.threads;
  if (o.out.empty()) o.out = in_dir(g, o.kind + ".model");
  TrainResult r;
  AnyModel model;
  if (o.kind == "mcvq") {
    auto fit = fit_mcvq(s.train, o.cfg);
    model = std::move(fit.model);
    r = std::move(fit);
  } else {
    auto fit = fit_naive_bayes(s.train, o.cfg);
    model = std::move(fit.model);
    r = std::move(fit);
  }
  for (const auto& w : r.warnings) std::cerr << "acf: warning: " << w << '\n';
  std::ostringstream trace;
  trace << "iteration,objective\n";
  for (std::size_t i = 0; i < r.trace.size(); ++i) trace << i << ',' << format_double(r.trace[i]) << '\n';
  const auto trace_path = fs::path(o.out).replace_extension(".trace.csv").string();
  write_text(o.out, serialize_model(model));
  write_text(trace_path, trace.str());
  emit(o.out);
  emit(trace_path);
}

// --- bounds ------------------------------------------------------------------------------

struct BoundsOpts {
  std::string model, out;
  BoundOptions opt;
  std::string contrast = "worst-case";
};

void cmd_bounds(const Globals& g, BoundsOpts o) {
  if (o.model.empty()) o.model = in_dir(g, "mcvq.model");
  if (o.out.empty()) o.out = in_dir(g, "bounds.bin");
  o.opt.contrast = o.contrast == "printed" ? ContrastPolicy::printed_stationary_point : ContrastPolicy::worst_case_contrast;
  o.opt.audit_seed = g.seed;
  o.opt.threads = g.threads;
  const auto m = load_mcvq(o.model);
  const auto t = precompute_bound_tables(m, o.opt);
  const auto numeric = std::count(t.shift.paths.begin(), t.shift.paths.end(), static_cast<std::uint8_t>(BoundPath::numeric));
  log(g, std::to_string(numeric) + " attitude-shift entries took the numeric path");
  write_text(o.out, serialize_bound_tables(t));
  emit(o.out);
}

// --- prototypes --------------------------------------------------------------------------

struct ProtoOpts {
  std::string model, out;
  double beta = -1.0;
  double retention = 0.4;
};

void cmd_prototypes(const Globals& g, ProtoOpts o) {
  if (o.model.empty()) o.model = in_dir(g, "mcvq.model");
  if (o.out.empty()) o.out = in_dir(g, "prototypes.txt");
  const auto m = load_mcvq(o.model);
  const auto s = load_split(g);
  require(s.train.n_items == m.n_items(), ErrorCode::validation, "model and split disagree on the item count");
  const auto pop = s.train.item_counts();
  const auto dist = signature_distances(m, g.threads);
  const double beta = o.beta >= 0.0 ? o.beta : beta_for_retention(dist, m.n_items(), pop, o.retention);
  const auto p = select_prototypes(dist, m.n_items(), pop, beta);
  log(g, std::to_string(p.members.size()) + " prototypes at beta " + format_double(beta));
  write_text(o.out, serialize_prototypes(p));
  emit(o.out);
}

// --- evaluate ----------------------------------------------------------------------------

struct EvalOpts {
  std::string model, bounds, prototypes, out;
  std::string kappas = "1,2,3,5,10";
  std::string prune_kappas = "1,2,5,10,20";
  std::size_t runs = 1;
  std::string prune_mode = "expected";
};

void cmd_evaluate(const Globals& g, EvalOpts o) {
  if (o.model.empty()) o.model = in_dir(g, "mcvq.model");
  if (o.out.empty()) o.out = in_dir(g, "results");
  if (o.bounds.empty() && fs::exists(in_dir(g, "bounds.bin"))) o.bounds = in_dir(g, "bounds.bin");
  if (o.prototypes.empty() && fs::exists(in_dir(g, "prototypes.txt"))) o.prototypes = in_dir(g, "prototypes.txt");
  const AnyModel model = load_model(o.model);
  const auto s = load_split(g);
  require(o.runs >= 1, ErrorCode::validation, "--runs must be >= 1");
  ExperimentConfig cfg;
  cfg.kappa_sizes = parse_sizes(o.kappas, "--kappas");
  cfg.threads = g.threads;
  cfg.pruning_mode = o.prune_mode == "per-response" ? PruneMode::per_response : PruneMode::expected;
  const fs::path out(o.out);
  nlohmann::json summary{{"model", fs::path(o.model).filename().string()}, {"seed", g.seed}, {"runs", o.runs}};

  std::visit(
      [&](const auto& m) {
        require(m.n_items() == s.train.n_items, ErrorCode::validation, "model and split disagree on the item count");
        LossRecord rec;
        for (std::size_t r = 0; r < o.runs; ++r) {
          cfg.seed = g.seed + r;
          rec.append(run_query_experiment(m, s.train, s.test, s.mask, cfg, r));
        }
        write_text((out / "query_experiment.csv").string(), format_plot_data(rec));
        write_text((out / "query_experiment.svg").string(),
                   render_svg(plot_series(rec), "Improvement over the prior-only loss", "known ratings",
                              "mean improvement"));
        nlohmann::json tests = nlohmann::json::array();
        for (std::size_t k : rec.kappas())
          for (const char* other : {"entropy", "random"}) {
            const auto a = rec.pooled("evoi", k), b = rec.pooled(other, k);
            if (a.size() < 2 || a.size() != b.size()) continue;
            const auto t = paired_t_test(a, b);
            tests.push_back({{"kappa", k}, {"baseline", other}, {"mean_diff", summarize(a).mean - summarize(b).mean},
                             {"t", t.t}, {"p_one_sided", t.p_value}, {"n", a.size()}});
          }
        summary["query_tests"] = tests;
        emit((out / "query_experiment.csv").string());
        emit((out / "query_experiment.svg").string());

        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, McvqModel>) {
          if (!o.bounds.empty()) {
            const auto tables = load_bound_tables(o.bounds);
            const auto pts = run_pruning_experiment(m, s.test, s.mask, tables.mean_change,
                                                    parse_sizes(o.prune_kappas, "--prune-kappas"), cfg.pruning_mode,
                                                    g.threads);
            PlotSeries ps{"pruned fraction", {}, {}, {}};
            for (const auto& p : pts) {
              ps.x.push_back(static_cast<double>(p.kappa));
              ps.y.push_back(p.fraction);
              ps.err.push_back(p.stderr_);
            }
            write_text((out / "pruning.csv").string(), format_pruning_data(pts));
            write_text((out / "pruning.svg").string(), render_svg({ps}, "Pruned targets", "known ratings", "fraction"));
            emit((out / "pruning.csv").string());
            emit((out / "pruning.svg").string());
          }
          if (!o.prototypes.empty()) {
            const auto p = load_prototypes(o.prototypes);
            LossRecord prec;
            for (std::size_t r = 0; r < o.runs; ++r) {
              cfg.seed = g.seed + r;
              prec.append(run_prototype_experiment(m, s.train, s.test, s.mask, {p.members}, {"prototypes"}, cfg, r));
            }
            write_text((out / "prototype_experiment.csv").string(), format_plot_data(prec));
            write_text((out / "prototype_experiment.svg").string(),
                       render_svg(plot_series(prec), "Prototype-restricted queries", "known ratings",
                                  "mean improvement"));
            summary["prototypes"] = {{"members", p.members.size()}, {"beta", p.beta}, {"epsilon", p.epsilon}};
            emit((out / "prototype_experiment.csv").string());
            emit((out / "prototype_experiment.svg").string());
          }
        }
      },
      model);
  write_text((out / "summary.json").string(), summary.dump(2) + "\n");
  emit((out / "summary.json").string());
}

// --- serve -------------------------------------------------------------------------------

struct ServeOpts {
  std::vector<std::string> models;
  std::string bounds, prototypes, store;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string strategy = "evoi";
  double threshold = 0.0;
  std::size_t top_k = 5;
};

httplib::Server* g_server = nullptr;

void cmd_serve(const Globals& g, ServeOpts o) {
  if (o.models.empty()) o.models.push_back(in_dir(g, "mcvq.model"));
  auto cat = std::make_shared<Catalog>();
  for (const auto& path : o.models) {
    auto m = load_model(path);
    const std::string kind = std::holds_alternative<McvqModel>(m) ? "mcvq" : "naive_bayes";
    require(!cat->find(kind), ErrorCode::validation, "two models of kind '" + kind + "'");
    cat->models.emplace_back(kind, std::move(m));
  }
  if (!o.bounds.empty()) cat->tables = load_bound_tables(o.bounds);
  if (!o.prototypes.empty()) cat->prototypes = load_prototypes(o.prototypes);
  if (fs::exists(in_dir(g, "split.manifest"))) {
    const auto s = load_split(g);
    cat->item_labels = s.train.item_labels;
    cat->entropies = item_entropies(s.train);
  }
  ServiceConfig sc;
  sc.strategy = parse_strategy(o.strategy);
  sc.evoi_threshold = o.threshold;
  sc.seed = g.seed;
  sc.query_top_k = o.top_k;
  sc.threads = g.threads;
  sc.store_path = o.store.empty() ? in_dir(g, "sessions.jsonl") : o.store;
  SessionService svc(cat, sc);
  httplib::Server srv;
  mount_routes(srv, svc);
  g_server = &srv;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  int port = o.port;
  if (port == 0) {
    port = srv.bind_to_any_port(o.host);
    require(port > 0, ErrorCode::io, "cannot bind " + o.host);
  } else {
    require(srv.bind_to_port(o.host, port), ErrorCode::io, "cannot bind " + o.host + ":" + std::to_string(port));
  }
  std::cout << "listening on http://" << o.host << ':' << port << std::endl;
  srv.listen_after_bind();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active collaborative filtering pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML config file; flags override it");
  bool print_config = false;
  Globals g;
  app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");
  app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 1024u));
  app.add_option("--data-dir", g.data_dir, "Directory for pipeline artifacts")->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "Progress messages on stderr");

  DemoOpts demo;
  auto* c_demo = app.add_subcommand("demo-data", "Write a synthetic ratings file and its ground-truth model");
  c_demo->add_option("--users", demo.users)->capture_default_str();
  c_demo->add_option("--items", demo.items)->capture_default_str();
  c_demo->add_option("--types", demo.types)->capture_default_str();
  c_demo->add_option("--attitudes", demo.attitudes)->capture_default_str();
  c_demo->add_option("--rho", demo.rho)->capture_default_str();
  c_demo->add_option("--density", demo.density, "Probability that a user rated an item")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  c_demo->add_option("--gap", demo.gap, "Minimum distance between attitude means of one cell")->capture_default_str();

  IngestOpts ing;
  auto* c_ing = app.add_subcommand("ingest", "Parse, filter and split a ratings CSV");
  c_ing->add_option("--input", ing.input, "Ratings CSV (default <data-dir>/ratings.csv)");
  c_ing->add_option("--user-column", ing.schema.user_column)->capture_default_str();
  c_ing->add_option("--item-column", ing.schema.item_column)->capture_default_str();
  c_ing->add_option("--rating-column", ing.schema.rating_column)->capture_default_str();
  c_ing->add_option("--delimiter", ing.delimiter)->capture_default_str();
  c_ing->add_flag("--no-header", ing.no_header, "Columns are 0-based positions");
  c_ing->add_option("--rho", ing.schema.rho, "Rating scale maximum")->capture_default_str();
  c_ing->add_option("--min-user-ratings", ing.split.min_ratings_per_user)->capture_default_str();
  c_ing->add_option("--min-item-ratings", ing.split.min_ratings_per_item)->capture_default_str();
  ing.split.n_test_users = 100;
  c_ing->add_option("--test-users", ing.split.n_test_users, "Users held out for evaluation")->capture_default_str();

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "Fit a model to the training split");
  c_tr->add_option("--kind", tr.kind)->capture_default_str()->check(CLI::IsMember({"mcvq", "naive_bayes"}));
  c_tr->add_option("--out", tr.out, "Model path (default <data-dir>/<kind>.model)");
  c_tr->add_option("--types", tr.cfg.n_types)->capture_default_str();
  c_tr->add_option("--attitudes", tr.cfg.n_attitudes)->capture_default_str();
  c_tr->add_option("--components", tr.cfg.n_components)->capture_default_str();
  c_tr->add_option("--iters", tr.cfg.max_iters)->capture_default_str();
  c_tr->add_option("--tol", tr.cfg.tol)->capture_default_str();
  c_tr->add_option("--restarts", tr.cfg.restarts)->capture_default_str();
  c_tr->add_option("--smoothing", tr.cfg.smoothing)->capture_default_str();
  c_tr->add_option("--var-floor", tr.cfg.var_floor)->capture_default_str();

  BoundsOpts bo;
  auto* c_bo = app.add_subcommand("bounds", "Precompute attitude-shift and mean-change tables");
  c_bo->add_option("--model", bo.model, "MCVQ model (default <data-dir>/mcvq.model)");
  c_bo->add_option("--out", bo.out, "Table path (default <data-dir>/bounds.bin)");
  c_bo->add_flag("--tighten", bo.opt.tighten, "Add the per-VQ sum constraint to the LP");
  c_bo->add_option("--contrast", bo.contrast)->capture_default_str()->check(CLI::IsMember({"worst-case", "printed"}));
  c_bo->add_option("--audit-samples", bo.opt.audit_samples)->capture_default_str();

  ProtoOpts po;
  auto* c_po = app.add_subcommand("prototypes", "Select a prototype item set");
  c_po->add_option("--model", po.model, "MCVQ model (default <data-dir>/mcvq.model)");
  c_po->add_option("--out", po.out, "Output path (default <data-dir>/prototypes.txt)");
  auto* beta_opt = c_po->add_option("--beta", po.beta, "Spacing threshold");
  c_po->add_option("--retention", po.retention, "Target fraction of items kept")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0))
      ->excludes(beta_opt);

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("evaluate", "Run the query, pruning and prototype experiments");
  c_ev->add_option("--model", ev.model, "Model (default <data-dir>/mcvq.model)");
  c_ev->add_option("--bounds", ev.bounds, "Bound tables (default <data-dir>/bounds.bin if present)");
  c_ev->add_option("--prototypes", ev.prototypes, "Prototype set (default <data-dir>/prototypes.txt if present)");
  c_ev->add_option("--out", ev.out, "Results directory (default <data-dir>/results)");
  c_ev->add_option("--kappas", ev.kappas)->capture_default_str();
  c_ev->add_option("--prune-kappas", ev.prune_kappas)->capture_default_str();
  c_ev->add_option("--runs", ev.runs)->capture_default_str();
  c_ev->add_option("--prune-mode", ev.prune_mode)->capture_default_str()->check(CLI::IsMember({"expected", "per-response"}));

  ServeOpts sv;
  auto* c_sv = app.add_subcommand("serve", "Run the HTTP session service");
  c_sv->add_option("--model", sv.models, "Model file; repeat for one MCVQ and one naive Bayes model");
  c_sv->add_option("--bounds", sv.bounds, "Bound tables enabling pruning");
  c_sv->add_option("--prototypes", sv.prototypes, "Prototype set for restricted sessions");
  c_sv->add_option("--store", sv.store, "Session log (default <data-dir>/sessions.jsonl)");
  c_sv->add_option("--host", sv.host)->capture_default_str();
  c_sv->add_option("--port", sv.port, "0 picks a free port")->capture_default_str()->check(CLI::Range(0, 65535));
  c_sv->add_option("--strategy", sv.strategy)->capture_default_str()->check(CLI::IsMember({"evoi", "entropy", "random"}));
  c_sv->add_option("--threshold", sv.threshold, "Stop querying below this EVOI")->capture_default_str();
  c_sv->add_option("--top-k", sv.top_k, "Ranked queries per response")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (print_config) {
    std::cout << app.config_to_str(true, false);
    return 0;
  }
  try {
    if (*c_demo) cmd_demo(g, demo);
    if (*c_ing) cmd_ingest(g, ing);
    if (*c_tr) cmd_train(g, tr);
    if (*c_bo) cmd_bounds(g, bo);
    if (*c_po) cmd_prototypes(g, po);
    if (*c_ev) cmd_evaluate(g, ev);
    if (*c_sv) cmd_serve(g, sv);
  } catch (const Error& e) {
    std::cerr << "acf: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "acf: internal_error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
