#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "myoattn/dsp.hpp"

using namespace myoattn;
using namespace myoattn::dsp;

namespace {

std::vector<double> tone(double f, double fs, double seconds) {
  const auto n = static_cast<std::size_t>(fs * seconds);
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

TEST_CASE("bandpass design: unity at center, steep at the edges") {
  const auto sos = butter_bandpass(20.0, 450.0, 1000.0);
  CHECK(sos.size() == 2);
  // Unity at the (prewarped) center; the geometric mean sits within 1e-3.
  const double center = std::sqrt(20.0 * 450.0);
  CHECK(gain_at(sos, center, 1000.0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(gain_at(sos, 1.0, 1000.0) < 0.01);      // -40 dB single pass
  CHECK(gain_at(sos, 100.0, 1000.0) > 0.93);    // within ~0.6 dB
  CHECK_THROWS_AS(butter_bandpass(450.0, 20.0, 1000.0), ConfigError);
}

TEST_CASE("lowpass design: flat passband, monotone rolloff") {
  const auto sos = butter_lowpass(2, 5.0, 1000.0);
  CHECK(gain_at(sos, 0.01, 1000.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(gain_at(sos, 5.0, 1000.0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-3));
  CHECK(gain_at(sos, 50.0, 1000.0) < 0.012);
  CHECK_THROWS_AS(butter_lowpass(3, 5.0, 1000.0), ConfigError);
}

TEST_CASE("filtfilt attenuation doubles in dB and keeps the passband") {
  const auto sos = butter_bandpass(20.0, 450.0, 1000.0);
  const std::vector<double> lo = filtfilt(sos, tone(1.0, 1000.0, 4.0));
  const std::vector<double> mid = filtfilt(sos, tone(100.0, 1000.0, 4.0));
  const double ref = mid_rms(tone(100.0, 1000.0, 4.0));
  CHECK(20.0 * std::log10(mid_rms(lo) / ref) < -40.0);
  CHECK(std::fabs(20.0 * std::log10(mid_rms(mid) / ref)) < 1.0);
}

TEST_CASE("filtering is linear") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(2000);
  for (double& v : x) v = gauss(rng);
  std::vector<double> x2 = x;
  for (double& v : x2) v *= 2.0;
  const auto sos = butter_bandpass(20.0, 450.0, 1000.0);
  const std::vector<double> y = filtfilt(sos, x);
  const std::vector<double> y2 = filtfilt(sos, x2);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(std::fabs(y2[i] - 2.0 * y[i]) < 1e-9);
}

TEST_CASE("centered moving average") {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> y = moving_average_centered(x, 3);
  CHECK(y[0] == doctest::Approx(1.5));  // truncated window
  CHECK(y[2] == doctest::Approx(3.0));
  CHECK(y[4] == doctest::Approx(4.5));
  CHECK_THROWS_AS(moving_average_centered(x, 0), ConfigError);
}

TEST_CASE("pearson correlation") {
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> b = {2.0, 4.0, 6.0, 8.0};
  CHECK(pearson(a, b) == doctest::Approx(1.0));
  for (double& v : b) v = -v;
  CHECK(pearson(a, b) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(pearson(a, {1.0, 1.0, 1.0, 1.0}), DataError);
}
