#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "myoattn/evaluation.hpp"

using namespace myoattn;
using namespace myoattn::eval;

namespace {

std::vector<double> random_trace(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(2.0, 2.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = gauss(rng);
  return v;
}

}  // namespace

TEST_CASE("stitching averages overlapping windows") {
  PredictedWindow a{0.0, std::vector<double>(20, 1.0)};
  PredictedWindow b{0.0, std::vector<double>(20, 3.0)};
  const sim::ThicknessTrace two = stitch_predictions({a, b});
  CHECK(two.size() == 20);
  for (double v : two.values) CHECK(v == 2.0);

  const sim::ThicknessTrace one = stitch_predictions({a});
  CHECK(one.values == a.values);

  // 0.25 s stride coverage arithmetic: from t0 to last start + 1 s.
  std::vector<PredictedWindow> strip;
  for (int k = 0; k < 9; ++k)
    strip.push_back({0.25 * k, std::vector<double>(20, static_cast<double>(k))});
  const sim::ThicknessTrace merged = stitch_predictions(strip);
  CHECK(merged.size() == static_cast<std::size_t>(8 * 5 + 20));
  CHECK(merged.t0 == 0.0);

  PredictedWindow late{2.0, std::vector<double>(20, 1.0)};
  CHECK_THROWS_AS(stitch_predictions({a, late}), DataError);
  CHECK_THROWS_AS(stitch_predictions({}), DataError);
}

TEST_CASE("period segmentation on a sinusoid") {
  sim::ThicknessTrace tr;
  tr.dt = 0.05;
  const double period = 3.0;
  // Phase chosen so three upward crossings (two complete periods) fit in 9 s.
  for (int i = 0; i < 180; ++i)
    tr.values.push_back(
        std::sin(2.0 * std::numbers::pi * (tr.dt * i - 0.1) / period));
  const auto periods = segment_periods(tr);
  CHECK(periods.size() >= 2);
  for (const auto& [s, e] : periods)
    CHECK(std::fabs((e - s) * tr.dt - period) <= tr.dt + 1e-9);

  sim::ThicknessTrace flat;
  flat.dt = 0.05;
  flat.values.assign(100, 1.0);
  CHECK_THROWS_AS(segment_periods(flat), DataError);
}

TEST_CASE("muscle excursion closed forms and scaling") {
  CHECK(muscle_excursion({10.0, 12.0, 14.0, 12.0, 10.0}) == 4.0);
  CHECK(muscle_excursion({5.0, 5.0, 5.0}) == 0.0);
  const std::vector<double> v = random_trace(50, 1);
  std::vector<double> scaled = v, shifted = v;
  for (double& x : scaled) x *= 2.5;
  for (double& x : shifted) x += 7.0;
  CHECK(muscle_excursion(scaled) == doctest::Approx(2.5 * muscle_excursion(v)));
  CHECK(muscle_excursion(shifted) == doctest::Approx(muscle_excursion(v)));
  CHECK_THROWS_AS(muscle_excursion({1.0}), ShapeError);
}

TEST_CASE("metrics: exact zero on identical traces") {
  const std::vector<double> t = random_trace(100, 2);
  const std::vector<std::pair<int, int>> periods = {{0, 50}, {50, 100}};
  const MetricsReport r = compute_metrics(t, t, periods);
  CHECK(r.mtd_mean_mm == 0.0);
  CHECK(r.mtd_std_mm == 0.0);
  CHECK(r.me_mean_mm == 0.0);
  CHECK(r.mepct_mean == 0.0);
  CHECK(r.n_samples == 100);
  CHECK(r.n_periods == 2);
}

TEST_CASE("metrics: ME percentage arithmetic") {
  // One period; true excursion 5.0 mm, predicted 5.7 mm -> 0.7 mm, 14 %.
  std::vector<double> truth(20, 0.0), pred(20, 0.0);
  truth[10] = 5.0;
  pred[10] = 5.7;
  const MetricsReport r = compute_metrics(pred, truth, {{0, 20}});
  CHECK(r.me_mean_mm == doctest::Approx(0.7));
  CHECK(r.mepct_mean == doctest::Approx(14.0));
}

TEST_CASE("metrics match a brute-force loop oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 60;
    const std::vector<double> pred = random_trace(n, 100 + trial);
    const std::vector<double> truth = random_trace(n, 200 + trial);
    const std::vector<std::pair<int, int>> periods = {{0, 20}, {20, 41}, {41, 60}};
    const MetricsReport r = compute_metrics(pred, truth, periods);

    std::vector<double> abs_err;
    for (int i = 0; i < n; ++i) abs_err.push_back(std::fabs(pred[i] - truth[i]));
    double mean = 0.0;
    for (double v : abs_err) mean += v;
    mean /= abs_err.size();
    double var = 0.0;
    for (double v : abs_err) var += (v - mean) * (v - mean);
    CHECK(std::fabs(r.mtd_mean_mm - mean) < 1e-12);
    CHECK(std::fabs(r.mtd_std_mm - std::sqrt(var / abs_err.size())) < 1e-12);

    std::vector<double> me_err, me_pct;
    for (const auto& [s, e] : periods) {
      double pmin = pred[s], pmax = pred[s], tmin = truth[s], tmax = truth[s];
      for (int i = s; i < e; ++i) {
        pmin = std::min(pmin, pred[i]);
        pmax = std::max(pmax, pred[i]);
        tmin = std::min(tmin, truth[i]);
        tmax = std::max(tmax, truth[i]);
      }
      const double err = std::fabs((pmax - pmin) - (tmax - tmin));
      me_err.push_back(err);
      if (tmax - tmin >= 0.5) me_pct.push_back(100.0 * err / (tmax - tmin));
    }
    double me_mean = 0.0;
    for (double v : me_err) me_mean += v;
    me_mean /= me_err.size();
    CHECK(std::fabs(r.me_mean_mm - me_mean) < 1e-12);
    double pct_mean = 0.0;
    for (double v : me_pct) pct_mean += v;
    if (!me_pct.empty()) pct_mean /= me_pct.size();
    CHECK(std::fabs(r.mepct_mean - pct_mean) < 1e-12);
  }
}

TEST_CASE("degenerate periods are excluded from ME% only") {
  std::vector<double> truth(40, 0.0), pred(40, 0.0);
  truth[5] = 5.0;   // healthy period
  pred[5] = 5.5;
  truth[25] = 0.1;  // excursion below the 0.5 mm guard
  pred[25] = 4.0;
  const MetricsReport r = compute_metrics(pred, truth, {{0, 20}, {20, 40}});
  CHECK(r.n_periods == 2);
  CHECK(r.me_mean_mm == doctest::Approx(0.5 * (0.5 + 3.9)));
  CHECK(r.mepct_mean == doctest::Approx(10.0));  // only the healthy period counts
}

TEST_CASE("report string formatting") {
  CHECK(format_mean_std(0.743, 0.740) == "0.743 ± 0.740");
  CHECK(format_mean_std(14.031, 15.149) == "14.031 ± 15.149");
}

TEST_CASE("protocol configuration") {
  // Fifteen possible pairs for six subjects; the default suite names five.
  int pairs = 0;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) ++pairs;
  CHECK(pairs == 15);

  const auto defaults = default_protocol_pairs(6);
  REQUIRE(defaults.size() == 5);
  CHECK(defaults[0].label == "AD");
  CHECK(defaults[1].label == "AB");
  CHECK(defaults[2].label == "CD");
  CHECK(defaults[3].label == "CB");
  CHECK(defaults[4].label == "AF");
  for (const auto& p : defaults) {
    CHECK(p.train_subjects.size() == 4);
    CHECK(p.test_subjects.size() == 2);
    p.validate(6);
  }
  CHECK(defaults[0].test_subjects == std::vector<int>{0, 3});

  ProtocolConfig bad;
  bad.train_subjects = {0, 1};
  bad.test_subjects = {1};
  CHECK_THROWS_AS(bad.validate(6), ConfigError);
  CHECK_THROWS_AS(default_protocol_pairs(4), ConfigError);
}
