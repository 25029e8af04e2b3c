#include "myoattn/ultrasound.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "myoattn/dsp.hpp"

namespace myoattn::us {

namespace {

constexpr double kPi = std::numbers::pi;

struct Peak {
  int index;
  double amp;
};

std::vector<Peak> local_maxima(const std::vector<double>& env) {
  std::vector<Peak> peaks;
  for (std::size_t i = 1; i + 1 < env.size(); ++i)
    if (env[i] >= env[i - 1] && env[i] > env[i + 1])
      peaks.push_back({static_cast<int>(i), env[i]});
  return peaks;
}

double median_of_window(std::vector<double> w) {
  std::sort(w.begin(), w.end());
  const std::size_t n = w.size();
  return n % 2 ? w[n / 2] : 0.5 * (w[n / 2 - 1] + w[n / 2]);
}

}  // namespace

std::vector<double> envelope(const std::vector<double>& rf, double fc_hz, double fs_hz) {
  if (fs_hz <= 2.0 * fc_hz)
    throw ConfigError("envelope: sampling rate must exceed twice the carrier");
  const std::size_t n = rf.size();
  std::vector<double> i_mix(n), q_mix(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double ph = 2.0 * kPi * fc_hz * static_cast<double>(k) / fs_hz;
    i_mix[k] = rf[k] * std::cos(ph);
    q_mix[k] = rf[k] * std::sin(ph);
  }
  const int len = static_cast<int>(std::lround(2.0 * fs_hz / fc_hz));
  i_mix = dsp::moving_average_centered(i_mix, len);
  q_mix = dsp::moving_average_centered(q_mix, len);
  std::vector<double> env(n);
  for (std::size_t k = 0; k < n; ++k)
    env[k] = 2.0 * std::sqrt(i_mix[k] * i_mix[k] + q_mix[k] * q_mix[k]);
  return env;
}

double parabolic_offset(double y0, double y1, double y2) {
  const double denom = y0 - 2.0 * y1 + y2;
  if (denom == 0.0) return 0.0;  // flat triple
  return 0.5 * (y0 - y2) / denom;
}

EchoPair detect_interfaces(const std::vector<double>& env, double fs_hz,
                           double min_separation_s) {
  if (env.size() < 3) throw ShapeError("detect_interfaces needs at least 3 samples");
  std::vector<Peak> peaks = local_maxima(env);
  if (peaks.size() < 2) throw DataError("interface detection found fewer than 2 peaks");
  // Sort by amplitude descending, earlier index wins ties.
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.amp != b.amp) return a.amp > b.amp;
    return a.index < b.index;
  });
  const int min_sep = static_cast<int>(std::lround(min_separation_s * fs_hz));
  const Peak first = peaks.front();
  const Peak* second = nullptr;
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    if (std::abs(peaks[i].index - first.index) >= min_sep) {
      second = &peaks[i];
      break;
    }
  }
  if (!second)
    throw DataError("interface detection found no second peak beyond the separation gap");

  auto refine = [&env, fs_hz](int idx) {
    return (static_cast<double>(idx) +
            parabolic_offset(env[idx - 1], env[idx], env[idx + 1])) /
           fs_hz;
  };
  double da = refine(first.index);
  double db = refine(second->index);
  double amp_a = first.amp, amp_b = second->amp;
  if (da > db) {
    std::swap(da, db);
    std::swap(amp_a, amp_b);
  }
  return {da, db, amp_b / amp_a};
}

double thickness_from_delays(double d1_s, double d2_s, double c_m_s) {
  if (d2_s < d1_s) throw DataError("thickness_from_delays: echoes out of order");
  return (d2_s - d1_s) * c_m_s / 2.0 * 1e3;
}

sim::ThicknessTrace track_thickness(const sim::RfFrameSequence& frames,
                                    double c_m_s, double min_separation_s,
                                    double max_jump_mm) {
  if (frames.frames.empty()) throw DataError("track_thickness: no frames");
  sim::ThicknessTrace trace;
  trace.t0 = frames.t0;
  trace.dt = frames.dt;
  std::vector<double> raw;
  std::vector<char> detected;
  raw.reserve(frames.frames.size());
  for (const auto& frame : frames.frames) {
    double value = raw.empty() ? 0.0 : raw.back();
    bool ok = false;
    try {
      const EchoPair echoes =
          detect_interfaces(envelope(frame, frames.fc_hz, frames.fs_hz),
                            frames.fs_hz, min_separation_s);
      value = thickness_from_delays(echoes.d1_s, echoes.d2_s, c_m_s);
      ok = true;
    } catch (const DataError&) {
      // hold previous value
    }
    raw.push_back(value);
    detected.push_back(ok ? 1 : 0);
    if (!ok) ++trace.flagged;
  }
  const auto first_ok = std::find(detected.begin(), detected.end(), 1);
  if (first_ok == detected.end())
    throw DataError("track_thickness: detection failed on every frame");

  // Backfill any leading failures with the first detected value.
  const auto lead = static_cast<std::size_t>(first_ok - detected.begin());
  for (std::size_t i = 0; i < lead; ++i) raw[i] = raw[lead];

  // Jump guard before smoothing so a single wild detection cannot leak
  // through the median at the trace ends.
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (std::fabs(raw[i] - raw[i - 1]) > max_jump_mm) {
      raw[i] = raw[i - 1];
      ++trace.flagged;
    }
  }

  // 5-point median despike: replace a sample only when it strays more than
  // 1 mm from its window median. A plain median would clip the contraction
  // peaks by up to ~0.1 mm at this frame rate.
  const int n = static_cast<int>(raw.size());
  trace.values = raw;
  for (int i = 0; i < n; ++i) {
    const int a = std::max(0, i - 2);
    const int b = std::min(n - 1, i + 2);
    const double med =
        median_of_window(std::vector<double>(raw.begin() + a, raw.begin() + b + 1));
    if (std::fabs(raw[i] - med) > 1.0) {
      trace.values[i] = med;
      ++trace.flagged;
    }
  }
  return trace;
}

}  // namespace myoattn::us
