#include "myoattn/sim.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "myoattn/dsp.hpp"

namespace myoattn::sim {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> standardized(std::vector<double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  for (double& v : x) v = (v - mean) * inv;
  return x;
}

}  // namespace

void SubjectProfile::validate() const {
  if (rest_thickness_mm <= 0.0 || gain_mm <= 0.0 || tau_s <= 0.0 || period_s <= 0.0)
    throw ConfigError("subject profile values must be positive");
  if (!(duty > 0.0 && duty < 1.0))
    throw ConfigError("duty cycle must lie in (0,1)");
  for (double w : channel_weights)
    if (w <= 0.0) throw ConfigError("channel weights must be positive");
}

void SimConfig::validate() const {
  if (n_subjects < 2) throw ConfigError("cohort needs at least 2 subjects");
  if (channels < 1) throw ConfigError("need at least one sEMG channel");
  if (duration_s <= 0.0) throw ConfigError("stage duration must be positive");
  if (rf_fs_hz <= 2.0 * rf_fc_hz) throw ConfigError("RF sampling must exceed 2x center frequency");
}

std::vector<StageSpec> default_stages(double duration_s, double weighted_load) {
  return {{1, 1.0, duration_s}, {2, 1.0, duration_s}, {3, weighted_load, duration_s}};
}

double activation_profile(double t_s, double period_s, double duty,
                          double amplitude, double load) {
  if (period_s <= 0.0) throw ConfigError("activation period must be positive");
  if (!(duty > 0.0 && duty < 1.0)) throw ConfigError("duty cycle must lie in (0,1)");
  double phase = std::fmod(t_s / period_s, 1.0);
  if (phase < 0.0) phase += 1.0;
  if (phase >= duty) return 0.0;
  return amplitude * load * 0.5 * (1.0 - std::cos(2.0 * kPi * phase / duty));
}

ThicknessTrace thickness_dynamics(const std::vector<double>& activation,
                                  double dt_s, double tau_s, double rest_mm,
                                  double gain_mm, double frame_rate_hz) {
  if (dt_s <= 0.0) throw ConfigError("dynamics step must be positive");
  if (tau_s <= dt_s)
    throw ConfigError("dynamics unstable: time constant must exceed the step");
  const int stride = static_cast<int>(std::lround(1.0 / (frame_rate_hz * dt_s)));
  if (stride < 1) throw ConfigError("frame rate exceeds the dynamics rate");
  ThicknessTrace out;
  out.t0 = 0.0;
  out.dt = 1.0 / frame_rate_hz;
  double y = rest_mm;
  for (std::size_t i = 0; i < activation.size(); ++i) {
    if (i % static_cast<std::size_t>(stride) == 0) out.values.push_back(y);
    y += dt_s / tau_s * (rest_mm + gain_mm * activation[i] - y);
  }
  return out;
}

std::vector<std::vector<double>> synth_semg(const std::vector<double>& activation,
                                            const SubjectProfile& profile,
                                            const SimConfig& cfg,
                                            std::uint64_t seed) {
  profile.validate();
  if (static_cast<int>(profile.channel_weights.size()) != cfg.channels)
    throw ShapeError("profile channel weights do not match channel count");
  const std::size_t n = activation.size();
  const auto band = dsp::butter_bandpass(20.0, 450.0, cfg.fs_semg_hz);
  std::vector<std::vector<double>> channels(cfg.channels);
  for (int c = 0; c < cfg.channels; ++c) {
    std::mt19937_64 rng_z(derive_seed(seed, 2 * static_cast<std::uint64_t>(c)));
    std::mt19937_64 rng_w(derive_seed(seed, 2 * static_cast<std::uint64_t>(c) + 1));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> z(n);
    for (double& v : z) v = gauss(rng_z);
    z = standardized(dsp::filtfilt(band, z));
    std::vector<double>& e = channels[c];
    e.resize(n);
    const double w = profile.channel_weights[c];
    for (std::size_t i = 0; i < n; ++i)
      e[i] = (w * activation[i] + profile.noise_floor) * z[i] + 0.01 * gauss(rng_w);
  }
  return channels;
}

RfFrameSequence synth_rf_frames(const ThicknessTrace& thickness,
                                const SimConfig& cfg, std::uint64_t seed) {
  RfFrameSequence seq;
  seq.fs_hz = cfg.rf_fs_hz;
  seq.fc_hz = cfg.rf_fc_hz;
  seq.t0 = thickness.t0;
  seq.dt = thickness.dt;
  const double c = cfg.sound_speed_m_s;
  const double d1 = 2.0 * cfg.skin_depth_mm * 1e-3 / c;
  const double frame_span = cfg.rf_frame_len / cfg.rf_fs_hz;
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  seq.frames.reserve(thickness.size());
  for (double y_mm : thickness.values) {
    const double d2 = 2.0 * (cfg.skin_depth_mm + y_mm) * 1e-3 / c;
    if (d2 + 4.0 * cfg.pulse_sigma_s > frame_span)
      throw DataError("echo delay beyond RF frame: thickness out of probe range");
    std::vector<double> frame(cfg.rf_frame_len, 0.0);
    const struct { double delay, amp; } echoes[2] = {
        {d1, cfg.echo_amp_skin}, {d2, cfg.echo_amp_muscle}};
    for (const auto& e : echoes) {
      // Restrict to +-5 sigma around the echo; the pulse is zero beyond that.
      const int lo = std::max(0, static_cast<int>((e.delay - 5.0 * cfg.pulse_sigma_s) * cfg.rf_fs_hz));
      const int hi = std::min(cfg.rf_frame_len - 1,
                              static_cast<int>((e.delay + 5.0 * cfg.pulse_sigma_s) * cfg.rf_fs_hz) + 1);
      for (int i = lo; i <= hi; ++i) {
        const double t = i / cfg.rf_fs_hz - e.delay;
        frame[i] += e.amp * std::exp(-t * t / (2.0 * cfg.pulse_sigma_s * cfg.pulse_sigma_s)) *
                    std::sin(2.0 * kPi * cfg.rf_fc_hz * t);
      }
    }
    if (cfg.rf_noise_sigma > 0.0)
      for (double& v : frame) v += cfg.rf_noise_sigma * gauss(rng);
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

SubjectProfile draw_profile(int id, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  auto uni = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  SubjectProfile p;
  p.id = id;
  p.rest_thickness_mm = uni(22.0, 32.0);
  p.gain_mm = uni(4.0, 8.0);
  p.tau_s = uni(0.08, 0.15);
  p.period_s = uni(2.0, 4.0);
  p.channel_weights.resize(channels);
  for (double& w : p.channel_weights) w = uni(0.5, 1.5);
  return p;
}

SubjectRecording synth_subject(const SubjectProfile& profile,
                               const std::vector<StageSpec>& stages,
                               const SimConfig& cfg, std::uint64_t seed) {
  profile.validate();
  SubjectRecording rec;
  rec.profile = profile;
  const double dt = 1.0 / cfg.fs_semg_hz;
  for (const StageSpec& st : stages) {
    StageRecording stage;
    stage.spec = st;
    const auto n = static_cast<std::size_t>(std::lround(st.duration_s * cfg.fs_semg_hz));
    stage.activation.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      stage.activation[i] =
          t < cfg.rest_lead_in_s
              ? 0.0
              : activation_profile(t - cfg.rest_lead_in_s, profile.period_s,
                                   profile.duty, 1.0, st.load);
    }
    stage.thickness = thickness_dynamics(stage.activation, dt, profile.tau_s,
                                         profile.rest_thickness_mm, profile.gain_mm,
                                         cfg.frame_rate_hz);
    stage.semg = synth_semg(stage.activation, profile, cfg,
                            derive_seed(seed, 100 + static_cast<std::uint64_t>(st.index)));
    stage.rf = synth_rf_frames(stage.thickness, cfg,
                               derive_seed(seed, 200 + static_cast<std::uint64_t>(st.index)));
    rec.stages.push_back(std::move(stage));
  }
  return rec;
}

Cohort synth_cohort(const SimConfig& cfg, const std::vector<StageSpec>& stages,
                    std::uint64_t master_seed) {
  cfg.validate();
  Cohort cohort;
  cohort.config = cfg;
  cohort.master_seed = master_seed;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const std::uint64_t subject_seed = derive_seed(master_seed, static_cast<std::uint64_t>(s));
    const SubjectProfile profile =
        draw_profile(s, cfg.channels, derive_seed(subject_seed, 0));
    cohort.subjects.push_back(synth_subject(profile, stages, cfg, subject_seed));
  }
  return cohort;
}

}  // namespace myoattn::sim
