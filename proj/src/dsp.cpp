#include "myoattn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace myoattn::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Denominator coefficients of the section holding the conjugate pole pair
// (z, conj z): 1 + a1 z^-1 + a2 z^-2 = (1 - z p)(1 - z conj(p)).
void pole_pair_to_denominator(cplx zp, Biquad& s) {
  s.a1 = -2.0 * zp.real();
  s.a2 = std::norm(zp);
}

cplx bilinear(cplx s_pole, double fs) {
  return (1.0 + s_pole / (2.0 * fs)) / (1.0 - s_pole / (2.0 * fs));
}

cplx section_response(const Biquad& s, cplx z1) {
  // z1 = e^{-j omega}
  return (s.b0 + s.b1 * z1 + s.b2 * z1 * z1) /
         (1.0 + s.a1 * z1 + s.a2 * z1 * z1);
}

}  // namespace

std::vector<Biquad> butter_lowpass(int order, double fc_hz, double fs_hz) {
  if (order < 2 || order % 2 != 0)
    throw ConfigError("butter_lowpass supports even orders >= 2");
  if (!(fc_hz > 0.0 && fc_hz < fs_hz / 2.0))
    throw ConfigError("butter_lowpass cutoff must lie in (0, fs/2)");
  const double wc = 2.0 * fs_hz * std::tan(kPi * fc_hz / fs_hz);  // prewarped
  std::vector<Biquad> sos;
  for (int k = 0; k < order / 2; ++k) {
    // Prototype pole in the upper half plane, scaled to the cutoff.
    const double theta = kPi * (2.0 * k + 1.0 + order) / (2.0 * order);
    const cplx p = wc * std::exp(cplx(0.0, theta));
    Biquad s;
    pole_pair_to_denominator(bilinear(p, fs_hz), s);
    // Double zero at z = -1; normalize to unity DC gain.
    const double g = (1.0 + s.a1 + s.a2) / 4.0;
    s.b0 = g;
    s.b1 = 2.0 * g;
    s.b2 = g;
    sos.push_back(s);
  }
  return sos;
}

std::vector<Biquad> butter_bandpass(double lo_hz, double hi_hz, double fs_hz) {
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < fs_hz / 2.0))
    throw ConfigError("butter_bandpass requires 0 < lo < hi < fs/2");
  const double wlo = 2.0 * fs_hz * std::tan(kPi * lo_hz / fs_hz);
  const double whi = 2.0 * fs_hz * std::tan(kPi * hi_hz / fs_hz);
  const double w0 = std::sqrt(wlo * whi);
  const double bw = whi - wlo;

  // Order-2 lowpass prototype pole (upper half plane); the lowpass-to-bandpass
  // substitution s -> (s^2 + w0^2)/(bw s) maps it to two analog poles.
  const cplx proto = std::exp(cplx(0.0, 3.0 * kPi / 4.0));
  const cplx b = bw * proto / 2.0;
  const cplx root = std::sqrt(b * b - cplx(w0 * w0, 0.0));
  const cplx s_poles[2] = {b + root, b - root};

  // Digital center frequency for gain normalization.
  const double omega0 = 2.0 * std::atan(w0 / (2.0 * fs_hz));

  std::vector<Biquad> sos;
  for (const cplx& sp : s_poles) {
    Biquad s;
    pole_pair_to_denominator(bilinear(sp, fs_hz), s);
    // One zero at z = +1 and one at z = -1 per section.
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    const double mag = std::abs(section_response(s, std::exp(cplx(0.0, -omega0))));
    s.b0 /= mag;
    s.b2 /= mag;
    sos.push_back(s);
  }
  return sos;
}

std::vector<double> filter(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  std::vector<double> y = x;
  for (const Biquad& s : sos) {
    double w1 = 0.0, w2 = 0.0;  // direct form II transposed state
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + w1;
      w1 = s.b1 * in - s.a1 * out + w2;
      w2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x) {
  std::vector<double> y = filter(sos, x);
  std::reverse(y.begin(), y.end());
  y = filter(sos, y);
  std::reverse(y.begin(), y.end());
  return y;
}

double gain_at(const std::vector<Biquad>& sos, double f_hz, double fs_hz) {
  const cplx z1 = std::exp(cplx(0.0, -2.0 * kPi * f_hz / fs_hz));
  cplx h = 1.0;
  for (const Biquad& s : sos) h *= section_response(s, z1);
  return std::abs(h);
}

std::vector<double> moving_average_centered(const std::vector<double>& x, int len) {
  if (len < 1) throw ConfigError("moving average length must be >= 1");
  const int n = static_cast<int>(x.size());
  const int left = len / 2;
  const int right = len - left - 1;
  std::vector<double> prefix(n + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    const int a = std::max(0, i - left);
    const int b = std::min(n - 1, i + right);
    y[i] = (prefix[b + 1] - prefix[a]) / (b - a + 1);
  }
  return y;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw ShapeError("pearson requires two equal series of length >= 2");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DataError("pearson: zero-variance input");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace myoattn::dsp
