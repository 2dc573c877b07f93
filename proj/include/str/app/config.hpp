#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "str/cv.hpp"
#include "str/errors.hpp"
#include "str/estimator.hpp"
#include "str/model.hpp"
#include "str/simgen.hpp"

namespace str::app {

/// A smoothing parameter given as a number or as "auto" (chosen by CV).
struct LambdaSetting {
  bool automatic = false;
  double value = 1.0;
};

struct SeasonalConfig {
  std::string name;
  /// `cycle: m` topology.
  std::optional<std::size_t> cycle;
  std::size_t phase = 0;
  /// Explicit graph topology.
  std::size_t nodes = 0;
  std::vector<std::pair<NodeId, NodeId>> edges;
  /// CSV column holding the 0-based season node of each row (graph topologies).
  std::string map_column;
  std::array<LambdaSetting, 3> lambdas;
  int line = 0;
};

struct CovariateConfig {
  std::string name;
  std::string column;
  CovariateKind kind = CovariateKind::fixed;
  LambdaSetting theta;
  std::array<LambdaSetting, 3> thetas;
  std::string season;
  int line = 0;
};

struct NoiseConfig {
  enum class Kind { identity, ar1, diagonal };
  Kind kind = Kind::identity;
  double variance = 1.0;
  double rho = 0.0;
  /// Column of per-observation variances for `diagonal`.
  std::string column;
};

struct SimulateConfig {
  std::vector<Dgp> dgps{Dgp::stochastic};
  std::size_t n = 1096;
  double alpha = 1.0;
  double beta = 1.0;
  std::vector<double> gammas{0.2};
  std::size_t replications = 10;
  std::uint64_t seed = 0;
  bool pilot = true;
  double warm_step = 0.5;
  std::size_t warm_max_evaluations = 150;
  std::size_t warm_restarts = 1;
};

struct RunConfig {
  std::filesystem::path input;
  std::string value_column = "value";
  std::string time_column;
  std::filesystem::path output = "str-output";
  bool log_transform = false;
  FitKind fit = FitKind::ols;
  NoiseConfig noise;
  std::size_t robust_max_iterations = 200;
  double level = 0.95;
  std::size_t horizon = 0;
  /// Largest-|remainder| times marked on the plot.
  std::size_t outlier_marks = 5;
  LambdaSetting trend;
  std::vector<SeasonalConfig> seasonals;
  std::vector<CovariateConfig> covariates;
  bool has_cv = false;
  CvConfig cv;
  /// Start values, by slot name, for "auto" parameters (log scale).
  std::vector<std::pair<std::string, double>> cv_initial;
  SimulateConfig simulate;

  bool any_automatic() const {
    if (trend.automatic) return true;
    for (const auto& s : seasonals)
      for (const auto& l : s.lambdas)
        if (l.automatic) return true;
    for (const auto& c : covariates) {
      if (c.kind == CovariateKind::flexible && c.theta.automatic) return true;
      if (c.kind == CovariateKind::seasonal)
        for (const auto& l : c.thetas)
          if (l.automatic) return true;
    }
    return false;
  }
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    if (!node.IsDefined()) throw ConfigError(source_ + ": " + msg);
    const auto mark = node.Mark();
    if (mark.line >= 0) throw ConfigError(source_ + ":" + std::to_string(mark.line + 1) + ": " + msg);
    throw ConfigError(source_ + ": " + msg);
  }

  void check_keys(const YAML::Node& map, std::initializer_list<const char*> allowed) const {
    if (!map.IsMap()) fail(map, "expected a mapping");
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) fail(kv.first, "unknown key '" + key + "'");
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, "invalid value '" + node.Scalar() + "' for " + what);
    }
  }

  double non_negative(const YAML::Node& node, const std::string& what) const {
    const double v = scalar<double>(node, what);
    if (!(v >= 0.0) || !std::isfinite(v)) fail(node, what + " must be finite and non-negative");
    return v;
  }

  std::size_t count(const YAML::Node& node, const std::string& what) const {
    const auto v = scalar<long long>(node, what);
    if (v < 0) fail(node, what + " must be non-negative");
    return static_cast<std::size_t>(v);
  }

  LambdaSetting lambda(const YAML::Node& node, const std::string& what) const {
    if (node.IsScalar() && node.Scalar() == "auto") return {true, 1.0};
    return {false, non_negative(node, what)};
  }

  std::array<LambdaSetting, 3> triple(const YAML::Node& node, const std::string& what) const {
    std::array<LambdaSetting, 3> out;
    if (node.IsScalar() && node.Scalar() == "auto") {
      for (auto& l : out) l.automatic = true;
      return out;
    }
    if (node.IsMap()) {
      check_keys(node, {"tt", "st", "ss"});
      const char* keys[3] = {"tt", "st", "ss"};
      for (int c = 0; c < 3; ++c) {
        if (!node[keys[c]]) fail(node, what + " is missing '" + keys[c] + "'");
        out[static_cast<std::size_t>(c)] = lambda(node[keys[c]], what + "." + keys[c]);
      }
      return out;
    }
    if (!node.IsSequence() || node.size() != 3) fail(node, what + " must be 'auto', [tt, st, ss] or a tt/st/ss mapping");
    for (std::size_t c = 0; c < 3; ++c) out[c] = lambda(node[c], what);
    return out;
  }

 private:
  std::string source_;
};

inline Dgp parse_dgp(const ConfigReader& r, const YAML::Node& node) {
  const auto s = r.scalar<std::string>(node, "dgp");
  if (s == "stochastic") return Dgp::stochastic;
  if (s == "deterministic") return Dgp::deterministic;
  r.fail(node, "dgp must be 'stochastic' or 'deterministic'");
}

}  // namespace detail

/// Parses a run configuration. Relative paths resolve against `base_dir`.
inline RunConfig parse_config(const YAML::Node& root, const std::string& source,
                              const std::filesystem::path& base_dir = {}) {
  const detail::ConfigReader r(source);
  RunConfig cfg;
  if (!root || root.IsNull()) return cfg;
  r.check_keys(root, {"input", "value_column", "time_column", "output", "log_transform", "fit", "noise",
                      "robust_max_iterations", "confidence_level", "horizon", "outlier_marks", "model", "cv",
                      "simulate"});

  auto path_of = [&](const YAML::Node& n, const char* what) {
    std::filesystem::path p = r.scalar<std::string>(n, what);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  if (root["input"]) cfg.input = path_of(root["input"], "input");
  if (root["value_column"]) cfg.value_column = r.scalar<std::string>(root["value_column"], "value_column");
  if (root["time_column"]) cfg.time_column = r.scalar<std::string>(root["time_column"], "time_column");
  if (root["output"]) cfg.output = path_of(root["output"], "output");
  if (root["log_transform"]) cfg.log_transform = r.scalar<bool>(root["log_transform"], "log_transform");
  if (const auto n = root["fit"]) {
    const auto s = r.scalar<std::string>(n, "fit");
    if (s == "ols") cfg.fit = FitKind::ols;
    else if (s == "robust") cfg.fit = FitKind::robust;
    else if (s == "gls") cfg.fit = FitKind::gls;
    else r.fail(n, "fit must be 'ols', 'robust' or 'gls'");
  }
  if (const auto n = root["noise"]) {
    r.check_keys(n, {"kind", "variance", "rho", "column"});
    const auto kind = n["kind"] ? r.scalar<std::string>(n["kind"], "noise.kind") : std::string("identity");
    if (kind == "identity") cfg.noise.kind = NoiseConfig::Kind::identity;
    else if (kind == "ar1") cfg.noise.kind = NoiseConfig::Kind::ar1;
    else if (kind == "diagonal") cfg.noise.kind = NoiseConfig::Kind::diagonal;
    else r.fail(n["kind"], "noise.kind must be 'identity', 'ar1' or 'diagonal'");
    if (n["variance"]) {
      cfg.noise.variance = r.scalar<double>(n["variance"], "noise.variance");
      if (!(cfg.noise.variance > 0.0)) r.fail(n["variance"], "noise.variance must be positive");
    }
    if (n["rho"]) {
      cfg.noise.rho = r.scalar<double>(n["rho"], "noise.rho");
      if (!(std::abs(cfg.noise.rho) < 1.0)) r.fail(n["rho"], "noise.rho must lie in (-1, 1)");
    }
    if (n["column"]) cfg.noise.column = r.scalar<std::string>(n["column"], "noise.column");
    if (cfg.noise.kind == NoiseConfig::Kind::diagonal && cfg.noise.column.empty()) {
      r.fail(n, "diagonal noise needs a 'column' of variances");
    }
  }
  if (root["robust_max_iterations"]) {
    cfg.robust_max_iterations = r.count(root["robust_max_iterations"], "robust_max_iterations");
  }
  if (const auto n = root["confidence_level"]) {
    cfg.level = r.scalar<double>(n, "confidence_level");
    if (!(cfg.level > 0.0 && cfg.level < 1.0)) r.fail(n, "confidence_level must lie in (0, 1)");
  }
  if (root["horizon"]) cfg.horizon = r.count(root["horizon"], "horizon");
  if (root["outlier_marks"]) cfg.outlier_marks = r.count(root["outlier_marks"], "outlier_marks");

  std::set<std::string> names;
  if (const auto m = root["model"]) {
    r.check_keys(m, {"trend", "seasonals", "covariates"});
    if (const auto t = m["trend"]) {
      if (t.IsMap()) {
        r.check_keys(t, {"lambda"});
        if (!t["lambda"]) r.fail(t, "trend needs 'lambda'");
        cfg.trend = r.lambda(t["lambda"], "trend.lambda");
      } else {
        cfg.trend = r.lambda(t, "trend");
      }
    }
    if (const auto ss = m["seasonals"]) {
      if (!ss.IsSequence()) r.fail(ss, "seasonals must be a list");
      for (const auto& s : ss) {
        r.check_keys(s, {"name", "cycle", "phase", "nodes", "edges", "map_column", "lambdas"});
        SeasonalConfig sc;
        sc.line = s.Mark().line + 1;
        if (!s["name"]) r.fail(s, "seasonal component needs a 'name'");
        sc.name = r.scalar<std::string>(s["name"], "name");
        if (!names.insert(sc.name).second) r.fail(s["name"], "duplicate component name '" + sc.name + "'");
        if (s["cycle"]) {
          sc.cycle = r.count(s["cycle"], "cycle");
          if (*sc.cycle < 2) r.fail(s["cycle"], "cycle needs at least 2 seasons");
          if (s["nodes"] || s["edges"] || s["map_column"]) {
            r.fail(s, "seasonal '" + sc.name + "': give either 'cycle' or 'nodes'/'edges'/'map_column'");
          }
          if (s["phase"]) sc.phase = r.count(s["phase"], "phase");
        } else {
          if (!s["nodes"] || !s["edges"] || !s["map_column"]) {
            r.fail(s, "seasonal '" + sc.name + "' needs 'cycle: m' or all of 'nodes', 'edges' and 'map_column'");
          }
          sc.nodes = r.count(s["nodes"], "nodes");
          const auto e = s["edges"];
          if (!e.IsSequence()) r.fail(e, "edges must be a list of [from, to] pairs");
          for (const auto& pair : e) {
            if (!pair.IsSequence() || pair.size() != 2) r.fail(pair, "each edge must be [from, to]");
            sc.edges.emplace_back(r.count(pair[0], "edge node"), r.count(pair[1], "edge node"));
          }
          sc.map_column = r.scalar<std::string>(s["map_column"], "map_column");
        }
        if (!s["lambdas"]) r.fail(s, "seasonal '" + sc.name + "' needs 'lambdas'");
        sc.lambdas = r.triple(s["lambdas"], sc.name + ".lambdas");
        cfg.seasonals.push_back(std::move(sc));
      }
    }
    if (const auto cs = m["covariates"]) {
      if (!cs.IsSequence()) r.fail(cs, "covariates must be a list");
      for (const auto& c : cs) {
        r.check_keys(c, {"name", "column", "kind", "theta", "thetas", "season"});
        CovariateConfig cc;
        cc.line = c.Mark().line + 1;
        if (!c["column"]) r.fail(c, "covariate needs a 'column'");
        cc.column = r.scalar<std::string>(c["column"], "column");
        cc.name = c["name"] ? r.scalar<std::string>(c["name"], "name") : cc.column;
        if (!names.insert(cc.name).second) r.fail(c, "duplicate component name '" + cc.name + "'");
        const auto kind = c["kind"] ? r.scalar<std::string>(c["kind"], "kind") : std::string("fixed");
        if (kind == "fixed") {
          cc.kind = CovariateKind::fixed;
        } else if (kind == "flexible") {
          cc.kind = CovariateKind::flexible;
          if (!c["theta"]) r.fail(c, "flexible covariate '" + cc.name + "' needs 'theta'");
          cc.theta = r.lambda(c["theta"], cc.name + ".theta");
        } else if (kind == "seasonal") {
          cc.kind = CovariateKind::seasonal;
          if (!c["thetas"] || !c["season"]) r.fail(c, "seasonal covariate '" + cc.name + "' needs 'thetas' and 'season'");
          cc.thetas = r.triple(c["thetas"], cc.name + ".thetas");
          cc.season = r.scalar<std::string>(c["season"], "season");
          bool found = false;
          for (const auto& s : cfg.seasonals) found = found || s.name == cc.season;
          if (!found) r.fail(c["season"], "no seasonal component named '" + cc.season + "'");
        } else {
          r.fail(c["kind"], "covariate kind must be 'fixed', 'flexible' or 'seasonal'");
        }
        cfg.covariates.push_back(std::move(cc));
      }
    }
  }

  if (const auto c = root["cv"]) {
    r.check_keys(c, {"mode", "folds", "gap", "max_evaluations", "tolerance", "initial_step", "restarts", "backend",
                     "initial"});
    cfg.has_cv = true;
    if (const auto n = c["mode"]) {
      const auto s = r.scalar<std::string>(n, "cv.mode");
      if (s == "loocv") cfg.cv.mode = CvMode::loocv;
      else if (s == "kfold") cfg.cv.mode = CvMode::kfold;
      else r.fail(n, "cv.mode must be 'loocv' or 'kfold'");
    }
    if (c["folds"]) cfg.cv.folds = r.count(c["folds"], "cv.folds");
    if (c["gap"]) cfg.cv.gap = r.count(c["gap"], "cv.gap");
    if (cfg.cv.mode == CvMode::kfold && cfg.cv.folds < 2) r.fail(c, "cv.folds must be at least 2");
    if (cfg.cv.mode == CvMode::kfold && cfg.cv.gap < 1) r.fail(c, "cv.gap must be at least 1");
    if (c["max_evaluations"]) {
      cfg.cv.optimizer.max_evaluations = r.count(c["max_evaluations"], "cv.max_evaluations");
      if (cfg.cv.optimizer.max_evaluations == 0) r.fail(c["max_evaluations"], "cv.max_evaluations must be positive");
    }
    if (c["tolerance"]) cfg.cv.optimizer.tolerance = r.non_negative(c["tolerance"], "cv.tolerance");
    if (c["initial_step"]) cfg.cv.optimizer.initial_step = r.scalar<double>(c["initial_step"], "cv.initial_step");
    if (c["restarts"]) cfg.cv.optimizer.restarts = r.count(c["restarts"], "cv.restarts");
    if (const auto n = c["backend"]) {
      const auto s = r.scalar<std::string>(n, "cv.backend");
      if (s == "automatic") cfg.cv.backend = CvBackend::automatic;
      else if (s == "sparse") cfg.cv.backend = CvBackend::sparse;
      else if (s == "cycle_kernel") cfg.cv.backend = CvBackend::cycle_kernel;
      else r.fail(n, "cv.backend must be 'automatic', 'sparse' or 'cycle_kernel'");
    }
    if (const auto n = c["initial"]) {
      if (!n.IsMap()) r.fail(n, "cv.initial must map parameter names to log-lambda values");
      for (const auto& kv : n) {
        cfg.cv_initial.emplace_back(kv.first.as<std::string>(), r.scalar<double>(kv.second, "cv.initial"));
      }
    }
  }
  if (cfg.any_automatic() && !cfg.has_cv) r.fail(root, "'auto' smoothing parameters need a 'cv' section");

  if (const auto s = root["simulate"]) {
    r.check_keys(s, {"dgp", "n", "alpha", "beta", "gamma", "replications", "seed", "pilot", "warm_step",
                     "warm_max_evaluations", "warm_restarts"});
    auto& sim = cfg.simulate;
    if (const auto n = s["dgp"]) {
      sim.dgps.clear();
      if (n.IsSequence()) {
        for (const auto& d : n) sim.dgps.push_back(detail::parse_dgp(r, d));
      } else {
        sim.dgps.push_back(detail::parse_dgp(r, n));
      }
      if (sim.dgps.empty()) r.fail(n, "dgp list is empty");
    }
    if (s["n"]) {
      sim.n = r.count(s["n"], "simulate.n");
      if (sim.n < 14) r.fail(s["n"], "simulate.n must be at least 14");
    }
    if (s["alpha"]) sim.alpha = r.scalar<double>(s["alpha"], "simulate.alpha");
    if (s["beta"]) sim.beta = r.scalar<double>(s["beta"], "simulate.beta");
    if (const auto n = s["gamma"]) {
      sim.gammas.clear();
      if (n.IsSequence()) {
        for (const auto& g : n) sim.gammas.push_back(r.non_negative(g, "simulate.gamma"));
      } else {
        sim.gammas.push_back(r.non_negative(n, "simulate.gamma"));
      }
      if (sim.gammas.empty()) r.fail(n, "gamma list is empty");
    }
    if (s["replications"]) {
      sim.replications = r.count(s["replications"], "simulate.replications");
      if (sim.replications < 1) r.fail(s["replications"], "simulate.replications must be at least 1");
    }
    if (s["seed"]) sim.seed = r.scalar<std::uint64_t>(s["seed"], "simulate.seed");
    if (s["pilot"]) sim.pilot = r.scalar<bool>(s["pilot"], "simulate.pilot");
    if (s["warm_step"]) sim.warm_step = r.scalar<double>(s["warm_step"], "simulate.warm_step");
    if (s["warm_max_evaluations"]) sim.warm_max_evaluations = r.count(s["warm_max_evaluations"], "simulate.warm_max_evaluations");
    if (s["warm_restarts"]) sim.warm_restarts = r.count(s["warm_restarts"], "simulate.warm_restarts");
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text, const std::string& source = "config") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  return parse_config(root, source);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot read config file '" + path.string() + "'");
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  return parse_config(root, path.string(), path.parent_path());
}

}  // namespace str::app
