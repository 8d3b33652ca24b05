#pragma once

// Configuration parsing, content hashing, CSV/JSON writers and the binary
// operator cache.

#include "fpme/operator_pack.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace fpme {

using json = nlohmann::json;

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

/// Hash of the canonical dump (sorted keys, no whitespace).
inline std::string content_hash(const json& j) {
  const std::string s = j.dump();
  return hex64(fnv1a(s.data(), s.size()));
}

namespace cfg {

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing required key '" + path + key + "'");
  return j.at(key);
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("key '" + path + key + "' has the wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key, path);
}

inline Box box(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_array()) throw ConfigError("key '" + path + key + "' must be a list of [lo, hi] pairs");
  Box b;
  for (const auto& iv : v) {
    if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number())
      throw ConfigError("key '" + path + key + "' must be a list of [lo, hi] pairs");
    b.push_back({iv[0].get<double>(), iv[1].get<double>()});
  }
  return b;
}

inline json box_to_json(const Box& b) {
  json out = json::array();
  for (const auto& iv : b) out.push_back({iv.lo, iv.hi});
  return out;
}

}  // namespace cfg

inline FieldSpec field_from_json(const json& j, const std::string& path) {
  const auto kind = cfg::get<std::string>(j, "kind", path);
  FieldSpec f;
  if (kind == "constant") {
    f = FieldSpec::constant(cfg::get<double>(j, "value", path));
  } else if (kind == "bump") {
    f = FieldSpec::bump(cfg::get<std::vector<double>>(j, "center", path), cfg::get<double>(j, "radius", path),
                        cfg::get<double>(j, "amplitude", path), cfg::get_or<double>(j, "base", path, 0.0));
    if (!(f.radius > 0.0)) throw ConfigError("key '" + path + "radius' must be positive");
  } else if (kind == "polynomial") {
    f = FieldSpec::polynomial(cfg::get<std::vector<double>>(j, "coefficients", path));
  } else if (kind == "table") {
    f.kind = FieldSpec::Kind::table;
    for (const auto& row : cfg::get<std::vector<std::vector<double>>>(j, "table", path)) {
      if (row.size() != 2) throw ConfigError("key '" + path + "table' must hold [x, value] rows");
      if (!f.table.empty() && !(row[0] > f.table.back().first))
        throw ConfigError("key '" + path + "table' must be sorted by x");
      f.table.emplace_back(row[0], row[1]);
    }
  } else {
    throw ConfigError("key '" + path + "kind' must be constant, bump, polynomial or table");
  }
  return f;
}

inline LayoutConfig layout_from_json(const json& j) {
  const std::string p = "layout.";
  LayoutConfig c;
  c.dimension = cfg::get<int>(j, "dimension", p);
  c.box = cfg::box(j, "box", p);
  c.n_grid = cfg::get<int>(j, "n_grid", p);
  c.omega = cfg::box(j, "omega", p);
  c.w1 = cfg::box(j, "w1", p);
  c.w2 = cfg::box(j, "w2", p);
  return c;
}

inline json layout_to_json(const LayoutConfig& c) {
  return {{"dimension", c.dimension}, {"box", cfg::box_to_json(c.box)}, {"n_grid", c.n_grid},
          {"omega", cfg::box_to_json(c.omega)}, {"w1", cfg::box_to_json(c.w1)}, {"w2", cfg::box_to_json(c.w2)}};
}

struct CoefficientPair {
  std::string name;
  FieldSpec gamma;
  FieldSpec lambda;
};

struct ExperimentConfig {
  LayoutConfig layout;
  std::vector<CoefficientPair> coefficients;  // the first pair is the reference / ground truth
  SimulationParameters params;
  int n_steps = 256;
  int asymptotic_n_steps = 8192;
  std::vector<double> h_list;
  std::vector<double> horizons{0.5, 1.0, 2.0};
  double estimate_h = 1e4;
  FieldSpec datum_shape;
  double amplitude = 1.0;
  double recovery_threshold = 1e-3;
  int ucp_probes = 64;
  std::string output_directory = "out";
  std::vector<std::string> formats{"csv", "json"};
  std::string operator_cache;  // empty: no cache
  std::uint64_t seed = 0;
  json raw;
  std::string hash;
};

/// Parses and validates a configuration. Every violated invariant is a
/// ConfigError; the layout and coefficient fields are built once so that bad
/// geometry or a non-positive gamma is reported at parse time.
inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  ExperimentConfig c;
  c.raw = j;
  c.hash = content_hash(j);
  c.layout = layout_from_json(cfg::require(j, "layout", ""));

  const json& coeffs = cfg::require(j, "coefficients", "");
  if (!coeffs.is_array() || coeffs.empty()) throw ConfigError("key 'coefficients' must be a non-empty list");
  for (std::size_t k = 0; k < coeffs.size(); ++k) {
    const std::string p = "coefficients[" + std::to_string(k) + "].";
    CoefficientPair pair;
    pair.name = cfg::get_or<std::string>(coeffs[k], "name", p, "pair" + std::to_string(k));
    pair.gamma = field_from_json(cfg::require(coeffs[k], "gamma", p), p + "gamma.");
    pair.lambda = field_from_json(cfg::require(coeffs[k], "lambda", p), p + "lambda.");
    c.coefficients.push_back(std::move(pair));
  }
  if (c.coefficients.size() > 8) throw ConfigError("at most 8 coefficient pairs are supported");

  const json& pj = cfg::require(j, "params", "");
  const std::string pp = "params.";
  c.params = SimulationParameters::make(cfg::get<double>(pj, "s", pp), cfg::get<double>(pj, "m", pp),
                                        cfg::get<double>(pj, "alpha", pp), cfg::get<double>(pj, "T", pp));
  c.n_steps = cfg::get<int>(pj, "n_steps", pp);
  if (c.n_steps < 8) throw ConfigError("params.n_steps must be at least 8");
  c.asymptotic_n_steps = cfg::get_or<int>(pj, "asymptotic_n_steps", pp, 8192);
  if (c.asymptotic_n_steps < 8) throw ConfigError("params.asymptotic_n_steps must be at least 8");
  c.h_list = cfg::get<std::vector<double>>(pj, "h_list", pp);
  for (double h : c.h_list)
    if (!(h > 0.0)) throw ConfigError("params.h_list entries must be positive");
  c.horizons = cfg::get_or<std::vector<double>>(pj, "horizons", pp, c.horizons);
  for (double T : c.horizons)
    if (!(T > 0.0)) throw ConfigError("params.horizons entries must be positive");
  c.estimate_h = cfg::get_or<double>(pj, "estimate_h", pp, c.estimate_h);
  c.recovery_threshold = cfg::get_or<double>(pj, "recovery_threshold", pp, c.recovery_threshold);
  c.ucp_probes = cfg::get_or<int>(pj, "ucp_probes", pp, c.ucp_probes);

  const json& dj = cfg::require(j, "datum", "");
  c.datum_shape = field_from_json(cfg::require(dj, "shape", "datum."), "datum.shape.");
  c.amplitude = cfg::get<double>(dj, "amplitude", "datum.");
  if (!(c.amplitude >= 0.0)) throw ConfigError("datum.amplitude must be non-negative");

  const json& oj = cfg::require(j, "outputs", "");
  c.output_directory = cfg::get<std::string>(oj, "directory", "outputs.");
  c.formats = cfg::get_or<std::vector<std::string>>(oj, "formats", "outputs.", c.formats);
  for (const auto& f : c.formats)
    if (f != "csv" && f != "json") throw ConfigError("outputs.formats may only contain csv and json");
  c.operator_cache = cfg::get_or<std::string>(oj, "operator_cache", "outputs.", "");

  c.seed = cfg::get<std::uint64_t>(j, "seed", "");

  const DomainLayout L = build_layout(c.layout);
  for (const auto& pair : c.coefficients) make_coefficients(L, pair.gamma, pair.lambda);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline std::string header_line() { return fmt::format("# fpme {}", kVersion); }

/// CSV with a one-line version header, then a column row, then data rows.
/// Numbers are written with 17 significant digits so reruns compare exactly.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns) : out_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << header_line() << '\n';
    for (std::size_t k = 0; k < columns.size(); ++k) out_ << (k ? "," : "") << columns[k];
    out_ << '\n';
  }

  template <class... Args>
  void row(const Args&... args) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(args), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return fmt::format("{:.17g}", v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  std::ofstream out_;
};

/// Manifest written next to every stage's outputs.
inline void write_manifest(const std::filesystem::path& dir, const std::string& stage, const ExperimentConfig& c,
                           const json& tolerances, const json& results, const std::vector<std::string>& warnings,
                           bool pass) {
  json m;
  m["artifact"] = "fpme";
  m["version"] = kVersion;
  m["stage"] = stage;
  m["config_hash"] = c.hash;
  m["seed"] = c.seed;
  m["status"] = pass ? "pass" : "fail";
  m["tolerances"] = tolerances;
  m["results"] = results;
  m["warnings"] = warnings;
  m["config"] = c.raw;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
}

// --- operator cache -------------------------------------------------------

/// Key of the eigendecomposition: layout plus the exact gamma samples.
inline std::string operator_key(const DomainLayout& L, const CoefficientFields& c) {
  const std::string lj = layout_to_json(L.config).dump();
  std::uint64_t h = fnv1a(lj.data(), lj.size());
  h = fnv1a(c.gamma.data(), static_cast<std::size_t>(c.gamma.size()) * sizeof(double), h);
  return hex64(h);
}

inline constexpr char kCacheMagic[8] = {'F', 'P', 'M', 'E', 'O', 'P', '0', '1'};

inline void save_operator_cache(const std::filesystem::path& dir, const OperatorPack& pack) {
  std::filesystem::create_directories(dir);
  const std::string key = operator_key(pack.layout(), pack.coefficients());
  const auto tmp = dir / ("op_" + key + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write operator cache in " + dir.string());
    const std::int64_t n = pack.size();
    out.write(kCacheMagic, sizeof(kCacheMagic));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    out.write(reinterpret_cast<const char*>(pack.eigenvalues().data()), static_cast<std::streamsize>(n * 8));
    out.write(reinterpret_cast<const char*>(pack.eigenvectors().data()), static_cast<std::streamsize>(n * n * 8));
  }
  std::filesystem::rename(tmp, dir / ("op_" + key + ".bin"));
}

/// Returns the cached pack, or nothing when the entry is absent or unreadable.
inline std::optional<OperatorPack> load_operator_cache(const std::filesystem::path& dir, const DomainLayout& L,
                                                       const CoefficientFields& c, double s) {
  const std::string key = operator_key(L, c);
  std::ifstream in(dir / ("op_" + key + ".bin"), std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::int64_t n = 0;
  std::string stored(key.size(), '\0');
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(stored.data(), static_cast<std::streamsize>(stored.size()));
  if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0 || stored != key || n != L.size())
    return std::nullopt;
  Vector eig(n);
  Matrix Q(n, n);
  in.read(reinterpret_cast<char*>(eig.data()), static_cast<std::streamsize>(n * 8));
  in.read(reinterpret_cast<char*>(Q.data()), static_cast<std::streamsize>(n * n * 8));
  if (!in) return std::nullopt;
  return OperatorPack::from_eigensystem(L, c, s, std::move(eig), std::move(Q));
}

/// Assembles through the cache when `dir` is non-empty.
inline OperatorPack cached_operator(const std::string& dir, const DomainLayout& L, const CoefficientFields& c,
                                    double s) {
  if (dir.empty()) return OperatorPack(L, c, s);
  if (auto hit = load_operator_cache(dir, L, c, s)) return *hit;
  OperatorPack pack(L, c, s);
  save_operator_cache(dir, pack);
  return pack;
}

}  // namespace fpme
