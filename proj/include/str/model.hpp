#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "str/errors.hpp"
#include "str/penalties.hpp"
#include "str/sparse_matrix.hpp"
#include "str/topology.hpp"

namespace str {

/// Regularly spaced series; an empty optional marks a missing observation.
struct TimeSeriesData {
  std::vector<std::optional<double>> y;
  /// Labels only: time of the first observation and spacing.
  double origin = 1.0;
  double step = 1.0;

  /// NaN entries become missing.
  static TimeSeriesData from_values(std::span<const double> values) {
    TimeSeriesData d;
    d.y.reserve(values.size());
    for (double v : values) d.y.push_back(std::isnan(v) ? std::nullopt : std::optional<double>(v));
    return d;
  }

  std::size_t size() const { return y.size(); }
  bool observed(std::size_t t) const { return y[t].has_value(); }
  double value(std::size_t t) const { return y[t].value_or(std::numeric_limits<double>::quiet_NaN()); }
  double time_label(std::size_t t) const { return origin + step * static_cast<double>(t); }

  std::vector<std::size_t> observed_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < y.size(); ++t)
      if (y[t]) idx.push_back(t);
    return idx;
  }

  std::size_t observed_count() const {
    std::size_t c = 0;
    for (const auto& v : y) c += v.has_value();
    return c;
  }

  /// Same series with the given times marked missing.
  TimeSeriesData with_missing(std::span<const std::size_t> times) const {
    TimeSeriesData d = *this;
    for (std::size_t t : times) d.y.at(t).reset();
    return d;
  }

  /// Series extended by `horizon` missing values.
  TimeSeriesData extended(std::size_t horizon) const {
    TimeSeriesData d = *this;
    d.y.resize(y.size() + horizon);
    return d;
  }

  void validate() const {
    if (y.size() < 3) throw DataError("series needs at least 3 time points, got " + std::to_string(y.size()));
    if (observed_count() == 0) throw DataError("series has no observed values");
    for (std::size_t t = 0; t < y.size(); ++t) {
      if (y[t] && !std::isfinite(*y[t])) throw DataError("non-finite observation at time " + std::to_string(t));
    }
  }
};

/// Weights of the time, time-season and season difference penalties.
struct Lambdas3 {
  double tt = 0.0;
  double st = 0.0;
  double ss = 0.0;
  friend bool operator==(const Lambdas3&, const Lambdas3&) = default;
};

struct SeasonalSpec {
  std::string name;
  SeasonTopology topology;
  SeasonMap map;
  Lambdas3 lambdas;
};

enum class CovariateKind { fixed, flexible, seasonal };

/// Covariate whose coefficient is constant (`fixed`), smooth in time
/// (`flexible`) or a smooth seasonal surface (`seasonal`).
struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::fixed;
  std::vector<double> values;
  /// Flexible coefficients only.
  double theta = 0.0;
  /// Seasonal coefficients only.
  Lambdas3 thetas;
  /// Index into ModelSpec::seasonals whose topology and map the seasonal coefficient follows.
  std::size_t season_ref = 0;
};

struct ModelSpec {
  double trend_lambda = 1.0;
  std::vector<SeasonalSpec> seasonals;
  std::vector<CovariateSpec> covariates;

  void validate(std::size_t n) const {
    auto check = [](double v, const std::string& what) {
      if (!(std::isfinite(v) && v >= 0.0)) throw ConfigError(what + " must be finite and non-negative");
    };
    check(trend_lambda, "trend lambda");
    for (std::size_t i = 0; i < seasonals.size(); ++i) {
      const auto& s = seasonals[i];
      check(s.lambdas.tt, s.name + " lambda_tt");
      check(s.lambdas.st, s.name + " lambda_st");
      check(s.lambdas.ss, s.name + " lambda_ss");
      s.map.validate(s.topology, n);
      for (std::size_t j = 0; j < i; ++j) {
        const auto& o = seasonals[j];
        if (o.topology == s.topology && o.map.length() >= n &&
            std::equal(s.map.assignment().begin(), s.map.assignment().begin() + static_cast<std::ptrdiff_t>(n),
                       o.map.assignment().begin())) {
          throw ConfigError("seasonal components '" + o.name + "' and '" + s.name +
                            "' share topology and season map and cannot both be identified");
        }
      }
    }
    for (const auto& c : covariates) {
      if (c.values.size() < n) {
        throw DataError("covariate '" + c.name + "' has " + std::to_string(c.values.size()) + " values, need " +
                        std::to_string(n));
      }
      for (std::size_t t = 0; t < n; ++t) {
        if (!std::isfinite(c.values[t])) throw DataError("covariate '" + c.name + "' is not finite at time " + std::to_string(t));
      }
      check(c.theta, c.name + " theta");
      check(c.thetas.tt, c.name + " theta_tt");
      check(c.thetas.st, c.name + " theta_st");
      check(c.thetas.ss, c.name + " theta_ss");
      if (c.kind == CovariateKind::seasonal && c.season_ref >= seasonals.size()) {
        throw ConfigError("seasonal covariate '" + c.name + "' refers to a missing seasonal component");
      }
    }
  }
};

enum class BlockKind { seasonal, trend, fixed_covariate, flexible_covariate, seasonal_covariate };

/// Contiguous range of coefficients belonging to one component.
struct ColumnBlock {
  std::string name;
  BlockKind kind = BlockKind::trend;
  /// Index into ModelSpec::seasonals or ModelSpec::covariates.
  std::size_t source = 0;
  std::size_t offset = 0;
  std::size_t size = 0;
  /// Surface shape for seasonal components and seasonal covariates.
  std::optional<SurfaceLayout> layout;
};

struct RowBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  double weight = 0.0;
};

/// Stacked system y_plus ~ X eta: observation rows then weighted penalty rows.
struct DesignSystem {
  SparseMatrix x;
  std::vector<double> y_plus;
  std::vector<ColumnBlock> columns;
  /// Time index of each observation row.
  std::vector<std::size_t> observed_times;
  std::vector<RowBlock> penalty_rows;
  /// Penalty blocks left out because their weight is zero.
  std::vector<std::string> dropped;
  std::size_t n = 0;

  std::size_t observation_rows() const { return observed_times.size(); }
};

/// Column layout of eta: seasonal surfaces, trend, fixed, flexible, seasonal covariates.
inline std::vector<ColumnBlock> column_blocks(const ModelSpec& spec, std::size_t n) {
  std::vector<ColumnBlock> blocks;
  std::size_t offset = 0;
  auto push = [&](std::string name, BlockKind kind, std::size_t source, std::size_t size,
                  std::optional<SurfaceLayout> layout = std::nullopt) {
    blocks.push_back({std::move(name), kind, source, offset, size, layout});
    offset += size;
  };
  for (std::size_t i = 0; i < spec.seasonals.size(); ++i) {
    const SurfaceLayout layout{spec.seasonals[i].topology.size(), n};
    push(spec.seasonals[i].name, BlockKind::seasonal, i, layout.size(), layout);
  }
  push("trend", BlockKind::trend, 0, n);
  for (std::size_t j = 0; j < spec.covariates.size(); ++j)
    if (spec.covariates[j].kind == CovariateKind::fixed) push(spec.covariates[j].name, BlockKind::fixed_covariate, j, 1);
  for (std::size_t j = 0; j < spec.covariates.size(); ++j)
    if (spec.covariates[j].kind == CovariateKind::flexible) push(spec.covariates[j].name, BlockKind::flexible_covariate, j, n);
  for (std::size_t j = 0; j < spec.covariates.size(); ++j) {
    const auto& c = spec.covariates[j];
    if (c.kind != CovariateKind::seasonal) continue;
    const SurfaceLayout layout{spec.seasonals.at(c.season_ref).topology.size(), n};
    push(c.name, BlockKind::seasonal_covariate, j, layout.size(), layout);
  }
  return blocks;
}

inline std::size_t column_count(const std::vector<ColumnBlock>& blocks) {
  return blocks.empty() ? 0 : blocks.back().offset + blocks.back().size;
}

/// n x n(m-1) matrix picking S[kappa(t), t] out of the reduced surface.
inline SparseMatrix build_extraction(const SeasonalSpec& spec, std::size_t n) {
  spec.map.validate(spec.topology, n);
  const SurfaceLayout layout{spec.topology.size(), n};
  std::vector<Triplet> t;
  for (std::size_t time = 0; time < n; ++time) {
    const NodeId node = spec.map[time];
    if (auto c = layout.coordinate(node, time)) {
      t.push_back({time, *c, 1.0});
    } else {
      for (NodeId k = 0; k + 1 < layout.nodes; ++k) t.push_back({time, *layout.coordinate(k, time), -1.0});
    }
  }
  return SparseMatrix(n, layout.size(), std::move(t));
}

namespace detail {

/// Appends the entries of observation row `time` for every component.
inline void observation_row(const ModelSpec& spec, const std::vector<ColumnBlock>& blocks, std::size_t time,
                            std::vector<std::size_t>& index, std::vector<double>& value) {
  auto surface_entries = [&](const SeasonalSpec& season, const ColumnBlock& b, double scale) {
    const SurfaceLayout& layout = *b.layout;
    const NodeId node = season.map[time];
    if (auto c = layout.coordinate(node, time)) {
      index.push_back(b.offset + *c);
      value.push_back(scale);
    } else {
      for (NodeId k = 0; k + 1 < layout.nodes; ++k) {
        index.push_back(b.offset + *layout.coordinate(k, time));
        value.push_back(-scale);
      }
    }
  };
  for (const auto& b : blocks) {
    switch (b.kind) {
      case BlockKind::seasonal:
        surface_entries(spec.seasonals[b.source], b, 1.0);
        break;
      case BlockKind::trend:
        index.push_back(b.offset + time);
        value.push_back(1.0);
        break;
      case BlockKind::fixed_covariate:
        index.push_back(b.offset);
        value.push_back(spec.covariates[b.source].values[time]);
        break;
      case BlockKind::flexible_covariate:
        index.push_back(b.offset + time);
        value.push_back(spec.covariates[b.source].values[time]);
        break;
      case BlockKind::seasonal_covariate: {
        const auto& c = spec.covariates[b.source];
        surface_entries(spec.seasonals[c.season_ref], b, c.values[time]);
        break;
      }
    }
  }
}

}  // namespace detail

/// Observation row of X for any time index, including missing or future ones.
inline void observation_row(const ModelSpec& spec, std::size_t n, std::size_t time, std::vector<std::size_t>& index,
                            std::vector<double>& value) {
  index.clear();
  value.clear();
  detail::observation_row(spec, column_blocks(spec, n), time, index, value);
}

inline DesignSystem assemble(const ModelSpec& spec, const TimeSeriesData& data) {
  data.validate();
  const std::size_t n = data.size();
  spec.validate(n);

  DesignSystem ds;
  ds.n = n;
  ds.columns = column_blocks(spec, n);
  ds.observed_times = data.observed_indices();
  const std::size_t n_obs = ds.observed_times.size();
  const std::size_t ncols = column_count(ds.columns);

  // Components whose penalties are all zero are unidentifiable once they have
  // more coefficients than there are observations.
  for (const auto& b : ds.columns) {
    bool all_zero = false;
    switch (b.kind) {
      case BlockKind::seasonal: {
        const auto& l = spec.seasonals[b.source].lambdas;
        all_zero = l.tt == 0 && l.st == 0 && l.ss == 0;
        break;
      }
      case BlockKind::trend:
        all_zero = spec.trend_lambda == 0;
        break;
      case BlockKind::fixed_covariate:
        break;
      case BlockKind::flexible_covariate:
        all_zero = spec.covariates[b.source].theta == 0;
        break;
      case BlockKind::seasonal_covariate: {
        const auto& l = spec.covariates[b.source].thetas;
        all_zero = l.tt == 0 && l.st == 0 && l.ss == 0;
        break;
      }
    }
    if (all_zero && b.size > n_obs) {
      throw RankDeficientError("component '" + b.name + "' has " + std::to_string(b.size) +
                               " coefficients, only " + std::to_string(n_obs) +
                               " observations and no smoothing penalty; give it a positive lambda");
    }
  }

  struct Penalty {
    std::string name;
    double weight;
    std::size_t col_offset;
    SparseMatrix matrix;
  };
  std::vector<Penalty> penalties;
  auto add_penalty = [&](std::string name, double weight, std::size_t col_offset, const SparseMatrix& m) {
    if (weight == 0.0) {
      ds.dropped.push_back(std::move(name));
      return;
    }
    penalties.push_back({std::move(name), weight, col_offset, m});
  };
  auto add_surface_penalties = [&](const std::string& name, const SeasonTopology& topo, const Lambdas3& l,
                                   std::size_t offset) {
    if (l.tt == 0 && l.st == 0 && l.ss == 0) {
      ds.dropped.push_back(name + ".tt");
      ds.dropped.push_back(name + ".st");
      ds.dropped.push_back(name + ".ss");
      return;
    }
    const PenaltySet p = build_penalties(topo, n);
    add_penalty(name + ".tt", l.tt, offset, p.tt);
    add_penalty(name + ".st", l.st, offset, p.st);
    add_penalty(name + ".ss", l.ss, offset, p.ss);
  };

  std::optional<SparseMatrix> second_diff;
  auto trend_penalty = [&]() -> const SparseMatrix& {
    if (!second_diff) second_diff = build_trend_penalty(n);
    return *second_diff;
  };

  for (const auto& b : ds.columns) {
    switch (b.kind) {
      case BlockKind::seasonal: {
        const auto& s = spec.seasonals[b.source];
        add_surface_penalties(b.name, s.topology, s.lambdas, b.offset);
        break;
      }
      case BlockKind::trend:
        if (spec.trend_lambda == 0) ds.dropped.push_back("trend");
        else add_penalty("trend", spec.trend_lambda, b.offset, trend_penalty());
        break;
      case BlockKind::fixed_covariate:
        break;
      case BlockKind::flexible_covariate: {
        const auto& c = spec.covariates[b.source];
        if (c.theta == 0) ds.dropped.push_back(b.name);
        else add_penalty(b.name, c.theta, b.offset, trend_penalty());
        break;
      }
      case BlockKind::seasonal_covariate: {
        const auto& c = spec.covariates[b.source];
        add_surface_penalties(b.name, spec.seasonals[c.season_ref].topology, c.thetas, b.offset);
        break;
      }
    }
  }

  std::size_t nrows = n_obs;
  for (const auto& p : penalties) nrows += p.matrix.rows();

  BlockBuilder builder(nrows, ncols);
  std::vector<std::size_t> index;
  std::vector<double> value;
  ds.y_plus.assign(nrows, 0.0);
  for (std::size_t r = 0; r < n_obs; ++r) {
    const std::size_t time = ds.observed_times[r];
    index.clear();
    value.clear();
    detail::observation_row(spec, ds.columns, time, index, value);
    for (std::size_t k = 0; k < index.size(); ++k) builder.add(r, index[k], value[k]);
    ds.y_plus[r] = *data.y[time];
  }
  std::size_t row = n_obs;
  for (const auto& p : penalties) {
    builder.add_block(row, p.col_offset, p.matrix, p.weight);
    ds.penalty_rows.push_back({p.name, row, p.matrix.rows(), p.weight});
    row += p.matrix.rows();
  }
  ds.x = std::move(builder).build();
  return ds;
}

/// Per-component series recovered from eta.
struct Components {
  std::vector<double> trend;
  /// S[kappa(t), t] for each seasonal component.
  std::vector<std::vector<double>> seasonal;
  /// Full surfaces (nodes x n) for each seasonal component; empty when not computed.
  std::vector<Eigen::MatrixXd> seasonal_surfaces;
  /// phi_{p,t} z_{t,p} in ModelSpec::covariates order.
  std::vector<std::vector<double>> covariate;
  /// phi_{p,t}.
  std::vector<std::vector<double>> covariate_coefficients;
  std::vector<double> fitted;
  /// y - fitted where observed, NaN elsewhere.
  std::vector<double> remainder;
};

inline Components split_components(const ModelSpec& spec, std::span<const double> eta, const TimeSeriesData& data) {
  const std::size_t n = data.size();
  const auto blocks = column_blocks(spec, n);
  if (eta.size() != column_count(blocks)) {
    throw DimensionError("split_components: eta has length " + std::to_string(eta.size()) + ", model has " +
                         std::to_string(column_count(blocks)) + " coefficients");
  }
  Components c;
  c.seasonal.assign(spec.seasonals.size(), std::vector<double>(n, 0.0));
  c.seasonal_surfaces.resize(spec.seasonals.size());
  c.covariate.assign(spec.covariates.size(), std::vector<double>(n, 0.0));
  c.covariate_coefficients.assign(spec.covariates.size(), std::vector<double>(n, 0.0));
  c.fitted.assign(n, 0.0);

  auto diagonal = [&](const Eigen::MatrixXd& surface, const SeasonMap& map) {
    std::vector<double> d(n);
    for (std::size_t t = 0; t < n; ++t) d[t] = surface(static_cast<Eigen::Index>(map[t]), static_cast<Eigen::Index>(t));
    return d;
  };

  for (const auto& b : blocks) {
    const auto part = eta.subspan(b.offset, b.size);
    switch (b.kind) {
      case BlockKind::seasonal: {
        c.seasonal_surfaces[b.source] = embed_surface(*b.layout, part);
        c.seasonal[b.source] = diagonal(c.seasonal_surfaces[b.source], spec.seasonals[b.source].map);
        break;
      }
      case BlockKind::trend:
        c.trend.assign(part.begin(), part.end());
        break;
      case BlockKind::fixed_covariate: {
        const auto& cov = spec.covariates[b.source];
        for (std::size_t t = 0; t < n; ++t) {
          c.covariate_coefficients[b.source][t] = part[0];
          c.covariate[b.source][t] = part[0] * cov.values[t];
        }
        break;
      }
      case BlockKind::flexible_covariate: {
        const auto& cov = spec.covariates[b.source];
        for (std::size_t t = 0; t < n; ++t) {
          c.covariate_coefficients[b.source][t] = part[t];
          c.covariate[b.source][t] = part[t] * cov.values[t];
        }
        break;
      }
      case BlockKind::seasonal_covariate: {
        const auto& cov = spec.covariates[b.source];
        const auto coef = diagonal(embed_surface(*b.layout, part), spec.seasonals[cov.season_ref].map);
        for (std::size_t t = 0; t < n; ++t) {
          c.covariate_coefficients[b.source][t] = coef[t];
          c.covariate[b.source][t] = coef[t] * cov.values[t];
        }
        break;
      }
    }
  }

  for (std::size_t t = 0; t < n; ++t) {
    double f = c.trend[t];
    for (const auto& s : c.seasonal) f += s[t];
    for (const auto& z : c.covariate) f += z[t];
    c.fitted[t] = f;
  }
  c.remainder.assign(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t < n; ++t)
    if (data.observed(t)) c.remainder[t] = *data.y[t] - c.fitted[t];
  return c;
}

}  // namespace str
