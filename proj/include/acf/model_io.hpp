#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "acf/error.hpp"
#include "acf/mcvq.hpp"
#include "acf/naive_bayes.hpp"
#include "acf/util.hpp"

namespace acf {

// Model container (text, version 1):
//
//   ACF-MODEL 1
//   kind mcvq|naive_bayes
//   dims <M> <K> <L> <rho>            (naive_bayes: dims <M> <C> <rho>)
//   binned 0|1                        (mcvq only)
//   <array-name> <count> <v0> <v1> ...
//   ...
//   checksum <fnv1a64 of every preceding byte, 16 hex digits>
//
// Arrays are row-major; values are C99 hex floats so a round trip is bit-exact.

using AnyModel = std::variant<McvqModel, NaiveBayesModel>;

namespace detail {

inline void write_array(std::ostream& o, const char* name, const std::vector<double>& v) {
  o << name << ' ' << v.size();
  for (double x : v) o << ' ' << format_double(x);
  o << '\n';
}

inline std::vector<double> read_array(std::istream& in, const std::string& name, std::size_t expected) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse, "model file: missing array " + name);
  std::istringstream ls(line);
  std::string tag;
  std::size_t n = 0;
  ls >> tag >> n;
  require(tag == name, ErrorCode::parse, "model file: expected array " + name + ", found '" + tag + "'");
  require(n == expected, ErrorCode::parse, "model file: array " + name + " has wrong length");
  std::vector<double> v(n);
  std::string tok;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ls >> tok)) throw Error(ErrorCode::parse, "model file: array " + name + " truncated");
    v[i] = parse_double(tok);
  }
  return v;
}

}  // namespace detail

inline std::string serialize_model(const McvqModel& m) {
  std::ostringstream o;
  o << "ACF-MODEL 1\nkind mcvq\n";
  o << "dims " << m.n_items() << ' ' << m.n_types() << ' ' << m.n_attitudes() << ' ' << m.rho() << '\n';
  o << "binned " << (m.binned() ? 1 : 0) << '\n';
  detail::write_array(o, "type_dist", m.type_dist());
  detail::write_array(o, "attitude_prior", m.attitude_prior());
  detail::write_array(o, "rating_mean", m.rating_means());
  detail::write_array(o, "rating_var", m.rating_vars());
  detail::write_array(o, "rating_multinomial", m.rating_multinomials());
  std::string body = o.str();
  return body + "checksum " + hex64(fnv1a64(body)) + "\n";
}

inline std::string serialize_model(const NaiveBayesModel& m) {
  std::ostringstream o;
  o << "ACF-MODEL 1\nkind naive_bayes\n";
  o << "dims " << m.n_items() << ' ' << m.n_components() << ' ' << m.rho() << '\n';
  detail::write_array(o, "mixing", m.mixing_weights());
  detail::write_array(o, "rating_multinomial", m.rating_multinomials());
  std::string body = o.str();
  return body + "checksum " + hex64(fnv1a64(body)) + "\n";
}

inline std::string serialize_model(const AnyModel& m) {
  return std::visit([](const auto& x) { return serialize_model(x); }, m);
}

inline AnyModel deserialize_model(const std::string& text) {
  auto cut = text.rfind("checksum ");
  require(cut != std::string::npos, ErrorCode::parse, "model file: missing checksum");
  const std::string body = text.substr(0, cut);
  require(trim(text.substr(cut + 9)) == hex64(fnv1a64(body)), ErrorCode::parse, "model file: checksum mismatch");
  std::istringstream in(body);
  std::string line;
  std::getline(in, line);
  require(line == "ACF-MODEL 1", ErrorCode::parse, "model file: unsupported header '" + line + "'");
  std::getline(in, line);
  if (line == "kind mcvq") {
    std::getline(in, line);
    std::istringstream ds(line);
    std::string tag;
    std::size_t M = 0, K = 0, L = 0;
    int rho = 0;
    ds >> tag >> M >> K >> L >> rho;
    require(tag == "dims" && M && K && L && rho > 0, ErrorCode::parse, "model file: bad dims");
    std::getline(in, line);
    require(line == "binned 0" || line == "binned 1", ErrorCode::parse, "model file: bad binned flag");
    const bool binned = line == "binned 1";
    auto td = detail::read_array(in, "type_dist", M * K);
    auto ap = detail::read_array(in, "attitude_prior", K * L);
    auto mu = detail::read_array(in, "rating_mean", M * K * L);
    auto var = detail::read_array(in, "rating_var", M * K * L);
    auto th = detail::read_array(in, "rating_multinomial", M * K * L * static_cast<std::size_t>(rho));
    McvqModel m = binned ? McvqModel::from_gaussians(M, K, L, rho, std::move(td), std::move(ap), std::move(mu), std::move(var))
                         : McvqModel::from_multinomials(M, K, L, rho, std::move(td), std::move(ap), std::move(th));
    if (binned)
      require(m.rating_multinomials() == th, ErrorCode::parse, "model file: stored multinomials differ from binning");
    return m;
  }
  if (line == "kind naive_bayes") {
    std::getline(in, line);
    std::istringstream ds(line);
    std::string tag;
    std::size_t M = 0, C = 0;
    int rho = 0;
    ds >> tag >> M >> C >> rho;
    require(tag == "dims" && M && C && rho > 0, ErrorCode::parse, "model file: bad dims");
    auto mix = detail::read_array(in, "mixing", C);
    auto phi = detail::read_array(in, "rating_multinomial", M * C * static_cast<std::size_t>(rho));
    return NaiveBayesModel(M, C, rho, std::move(mix), std::move(phi));
  }
  throw Error(ErrorCode::parse, "model file: unknown kind '" + line + "'");
}

inline void save_model(const std::string& path, const AnyModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path);
  out << serialize_model(m);
}

inline AnyModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "model not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace acf
