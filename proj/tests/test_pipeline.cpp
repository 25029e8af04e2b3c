#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "myoattn/dsp.hpp"
#include "myoattn/pipeline.hpp"

using namespace myoattn;
using namespace myoattn::emg;

namespace {

std::vector<double> tone(double f, double fs, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
  return x;
}

double mid_rms(const std::vector<double>& x) {
  const std::size_t a = x.size() / 4, b = 3 * x.size() / 4;
  double s = 0.0;
  for (std::size_t i = a; i < b; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(b - a));
}

}  // namespace

TEST_CASE("bandpass: linearity and tone sweep") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(3000);
  for (double& v : x) v = gauss(rng);
  std::vector<double> x2 = x;
  for (double& v : x2) v *= 2.0;
  const std::vector<double> y = bandpass(x);
  const std::vector<double> y2 = bandpass(x2);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::fabs(y2[i] - 2.0 * y[i]) < 1e-9);

  const double ref = mid_rms(tone(100.0, 1000.0, 4000));
  CHECK(20.0 * std::log10(mid_rms(bandpass(tone(1.0, 1000.0, 4000))) / ref) <= -40.0);
  CHECK(std::fabs(20.0 * std::log10(mid_rms(bandpass(tone(100.0, 1000.0, 4000))) / ref)) <=
        1.0);
  CHECK_THROWS_AS(bandpass(x, 450.0, 20.0), ConfigError);
}

TEST_CASE("envelope features: zeros, AM tracking, decimation length") {
  const std::vector<double> zeros(1000, 0.0);
  for (double v : envelope_features(zeros)) CHECK(v == 0.0);

  // Noise carrier under a triangular envelope.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n = 20000;
  std::vector<double> carrier(n), envelope_true(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double phase = static_cast<double>(i % 4000) / 4000.0;
    envelope_true[i] = phase < 0.5 ? 2.0 * phase : 2.0 * (1.0 - phase);
    carrier[i] = envelope_true[i] * gauss(rng);
  }
  const std::vector<double> feats = envelope_features(bandpass(carrier));
  std::vector<double> env_down;
  for (std::size_t i = 0; i < n; i += 10) env_down.push_back(envelope_true[i]);
  CHECK(dsp::pearson(feats, env_down) > 0.9);

  CHECK(envelope_features(std::vector<double>(1001, 1.0)).size() == 101);
  CHECK(envelope_features(std::vector<double>(1000, 1.0)).size() == 100);
}

TEST_CASE("normalizer closed form and self-normalization") {
  FeatureWindow w;
  w.features = ad::Tensor::matrix(1, 3, {1.0, 2.0, 3.0});
  const Normalizer norm = fit_normalizer({w});
  CHECK(norm.mean[0] == doctest::Approx(2.0));
  CHECK(norm.std_dev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
  const ad::Tensor z = apply_normalizer(norm, w.features);
  CHECK(z.at(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(z.at(0, 1) == doctest::Approx(0.0));
  CHECK(z.at(0, 2) == doctest::Approx(1.2247).epsilon(1e-4));

  // Applying a fitted normalizer to its own data gives mean 0, std 1.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(5.0, 2.5);
  std::vector<FeatureWindow> windows(4);
  for (FeatureWindow& fw : windows) {
    fw.features = ad::Tensor({2, 50});
    for (std::size_t i = 0; i < fw.features.numel(); ++i) fw.features[i] = gauss(rng);
  }
  const Normalizer big = fit_normalizer(windows);
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    for (const FeatureWindow& fw : windows) {
      const ad::Tensor z2 = apply_normalizer(big, fw.features);
      for (int i = 0; i < 50; ++i) mean += z2.at(c, i);
    }
    mean /= 200.0;
    for (const FeatureWindow& fw : windows) {
      const ad::Tensor z2 = apply_normalizer(big, fw.features);
      for (int i = 0; i < 50; ++i) var += (z2.at(c, i) - mean) * (z2.at(c, i) - mean);
    }
    var /= 200.0;
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(std::fabs(var - 1.0) < 1e-9);
  }

  // Constant channel: std replaced by 1, output zeros, flag raised.
  FeatureWindow flat;
  flat.features = ad::Tensor::full({1, 10}, 4.0);
  const Normalizer deg = fit_normalizer({flat});
  CHECK(deg.degenerate == std::vector<int>{0});
  CHECK(deg.std_dev[0] == 1.0);
  const ad::Tensor zf = apply_normalizer(deg, flat.features);
  for (std::size_t i = 0; i < zf.numel(); ++i) CHECK(zf[i] == 0.0);

  CHECK_THROWS_AS(fit_normalizer({}), DataError);
}

TEST_CASE("windowing: count, alignment, bounds") {
  // 60 s at 100 Hz features and 20 Hz deformation.
  std::vector<std::vector<double>> feats(4, std::vector<double>(6000));
  for (auto& ch : feats)
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] = static_cast<double>(i);
  sim::ThicknessTrace def;
  def.dt = 0.05;
  def.values.resize(1200);
  for (std::size_t i = 0; i < def.values.size(); ++i)
    def.values[i] = static_cast<double>(i);

  const WindowedDataset ds = make_windows(feats, def, 3, 2);
  CHECK(ds.windows.size() == 237);
  CHECK(ds.channels == 4);
  const FeatureWindow& first = ds.windows.front();
  CHECK(first.subject == 3);
  CHECK(first.stage == 2);
  CHECK(first.t_start == 0.0);
  for (int i = 0; i < 20; ++i) CHECK(first.target[static_cast<std::size_t>(i)] == i);
  // Window k starts at feature index 25k and target index 5k.
  const FeatureWindow& w10 = ds.windows[10];
  CHECK(w10.features.at(0, 0) == 250.0);
  CHECK(w10.target[0] == 50.0);

  sim::ThicknessTrace short_def = def;
  short_def.values.resize(1100);
  CHECK_THROWS_AS(make_windows(feats, short_def, 0, 1), DataError);
}

TEST_CASE("rest baseline averages the leading samples") {
  sim::ThicknessTrace tr;
  tr.dt = 0.05;
  tr.values.assign(100, 25.0);
  for (std::size_t i = 40; i < 100; ++i) tr.values[i] = 31.0;  // activity after 2 s
  CHECK(rest_baseline(tr, 2.0) == doctest::Approx(25.0));
  sim::ThicknessTrace tiny;
  tiny.dt = 0.05;
  tiny.values.assign(10, 25.0);
  CHECK_THROWS_AS(rest_baseline(tiny, 2.0), DataError);
}
