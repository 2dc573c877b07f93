#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "str/simgen.hpp"

using namespace str;

namespace {

double mean(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); }

double sample_variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / (x.size() - 1);
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

SimConfig config(Dgp dgp, std::size_t n, double gamma, std::uint64_t seed = 11) {
  SimConfig c;
  c.dgp = dgp;
  c.n = n;
  c.gamma = gamma;
  c.seed = seed;
  return c;
}

CvConfig quick_cv() {
  CvConfig cv = experiment_cv();
  cv.optimizer.max_evaluations = 25;
  cv.optimizer.restarts = 0;
  return cv;
}

ExperimentOptions quick_options(std::size_t threads = 1) {
  ExperimentOptions o;
  o.pilot = false;
  o.threads = threads;
  return o;
}

}  // namespace

TEST(Simgen, MixIdentityAndNormalization) {
  for (Dgp d : {Dgp::stochastic, Dgp::deterministic}) {
    auto c = config(d, 400, 0.4);
    c.alpha = 0.7;
    c.beta = 1.3;
    const auto s = generate(c, 3);
    ASSERT_EQ(s.y.size(), 400u);
    for (std::size_t t = 0; t < 400; ++t)
      EXPECT_NEAR(s.y[t], s.trend[t] + 0.7 * s.weekly[t] + 1.3 * s.yearly[t] + 0.4 * s.remainder[t], 1e-12);
    for (const auto* part : {&s.trend, &s.weekly, &s.yearly}) {
      EXPECT_LT(std::abs(mean(*part)), 1e-9);
      EXPECT_NEAR(sample_variance(*part), 1.0, 1e-9);
    }
  }
}

TEST(Simgen, DeterministicSeasonalsArePeriodic) {
  const auto s = generate(config(Dgp::deterministic, 800, 0.2), 0);
  for (std::size_t t = 7; t < 800; ++t) EXPECT_NEAR(s.weekly[t], s.weekly[t - 7], 1e-12);
  for (std::size_t t = 365; t < 800; ++t) EXPECT_NEAR(s.yearly[t], s.yearly[t - 365], 1e-12);
}

TEST(Simgen, SameSeedSameSeries) {
  for (Dgp d : {Dgp::stochastic, Dgp::deterministic}) {
    const auto c = config(d, 200, 0.2, 42);
    EXPECT_EQ(generate(c, 5).y, generate(c, 5).y);
    EXPECT_NE(generate(c, 5).y, generate(c, 6).y);
    EXPECT_NE(generate(c, 5).y, generate(config(d, 200, 0.2, 43), 5).y);
  }
}

TEST(Simgen, StochasticTrendIsTwiceIntegratedNoise) {
  const auto c = config(Dgp::stochastic, 300, 0.2, 9);
  const auto s = generate(c, 2);
  auto rng = replication_engine(c.seed, 2);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> noise(c.n);
  for (double& v : noise) v = z(rng);
  std::vector<double> d2, e;
  for (std::size_t t = 2; t < c.n; ++t) {
    d2.push_back(s.trend[t] - 2 * s.trend[t - 1] + s.trend[t - 2]);
    e.push_back(noise[t]);
  }
  EXPECT_GT(correlation(d2, e), 0.99);
}

TEST(Simgen, StochasticSeasonalFollowsItsBase) {
  // Second differences of a twice-integrated periodic base repeat with the period.
  const auto s = generate(config(Dgp::stochastic, 100, 0.2), 0);
  std::vector<double> d2;
  for (std::size_t t = 2; t < 100; ++t) d2.push_back(s.weekly[t] - 2 * s.weekly[t - 1] + s.weekly[t - 2]);
  for (std::size_t i = 7; i < d2.size(); ++i) EXPECT_NEAR(d2[i], d2[i - 7], 1e-10);
}

TEST(Simgen, SmallConfigIsRejected) {
  EXPECT_THROW(generate(config(Dgp::stochastic, 10, 0.2)), ConfigError);
  auto c = config(Dgp::stochastic, 100, 0.2);
  c.replications = 0;
  EXPECT_THROW(generate(c), ConfigError);
}

TEST(Experiment, ShapeCsvAndThreadInvariance) {
  auto c = config(Dgp::stochastic, 400, 0.4, 5);
  c.replications = 3;
  const auto model = simulation_model(c.n);
  const auto a = rmse_experiment(c, model, quick_cv(), quick_options(1));
  const auto b = rmse_experiment(c, model, quick_cv(), quick_options(3));
  ASSERT_EQ(a.rmse.size(), 4u);
  ASSERT_EQ(a.replications.size(), 3u);
  EXPECT_EQ(a.rmse, b.rmse);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(a.replications[r].replication, r);
    EXPECT_EQ(a.replications[r].sse, b.replications[r].sse);
    EXPECT_EQ(a.replications[r].points, c.n);
  }
  for (double v : a.rmse) EXPECT_GT(v, 0.0);
  std::ostringstream os;
  write_rmse_csv(os, {a});
  std::istringstream is(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "dgp,gamma,component,rmse");
  EXPECT_EQ(lines[1].rfind("stochastic,0.4,trend,", 0), 0u) << lines[1];
}

TEST(Experiment, NoiselessSeriesBeatsNoisy) {
  auto quiet = config(Dgp::deterministic, 400, 0.0, 3);
  auto loud = config(Dgp::deterministic, 400, 0.6, 3);
  quiet.replications = loud.replications = 2;
  const auto model = simulation_model(400);
  const auto a = rmse_experiment(quiet, model, quick_cv(), quick_options());
  const auto b = rmse_experiment(loud, model, quick_cv(), quick_options());
  const double sa = a.rmse[0] + a.rmse[1] + a.rmse[2];
  const double sb = b.rmse[0] + b.rmse[1] + b.rmse[2];
  EXPECT_LT(sa, sb);
  // The yearly surface has far fewer repeats per node than the weekly one.
  EXPECT_GT(b.rmse[2], b.rmse[1]);
}

TEST(Experiment, ModelMustHaveTwoSeasons) {
  auto c = config(Dgp::stochastic, 60, 0.2);
  ModelSpec m;
  EXPECT_THROW(rmse_experiment(c, m, quick_cv(), quick_options()), ConfigError);
}
