#pragma once

#include <cstdint>
#include <vector>

#include "myoattn/common.hpp"

namespace myoattn::sim {

// Thickness (or deformation) series on a uniform grid.
struct ThicknessTrace {
  double t0 = 0.0;
  double dt = 0.05;  // 20 Hz
  std::vector<double> values;
  int flagged = 0;  // samples replaced during tracking

  double t(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  std::size_t size() const { return values.size(); }
};

struct SubjectProfile {
  int id = 0;
  double rest_thickness_mm = 27.0;  // drawn from [22, 32]
  double gain_mm = 6.0;             // drawn from [4, 8]
  double tau_s = 0.1;               // drawn from [0.08, 0.15]
  double period_s = 3.0;            // drawn from [2, 4]
  double duty = 0.5;
  std::vector<double> channel_weights;  // drawn from [0.5, 1.5] each
  double noise_floor = 0.05;

  void validate() const;
};

struct StageSpec {
  int index = 1;          // 1..3
  double load = 1.0;      // 1.25 for the weighted stage
  double duration_s = 60.0;
};

// Three-stage default: two unloaded runs, then the weighted one.
std::vector<StageSpec> default_stages(double duration_s = 60.0,
                                      double weighted_load = 1.25);

struct RfFrameSequence {
  std::vector<std::vector<double>> frames;  // each frame_len samples
  double fs_hz = 50e6;
  double fc_hz = 5e6;
  double t0 = 0.0;
  double dt = 0.05;
};

struct StageRecording {
  StageSpec spec;
  std::vector<double> activation;            // 1 kHz
  std::vector<std::vector<double>> semg;     // channels x samples, 1 kHz
  ThicknessTrace thickness;                  // latent truth, 20 Hz
  RfFrameSequence rf;
};

struct SubjectRecording {
  SubjectProfile profile;
  std::vector<StageRecording> stages;
};

// Generation constants shared by the whole cohort.
struct SimConfig {
  int n_subjects = 6;
  int channels = 4;
  double duration_s = 60.0;
  double fs_semg_hz = 1000.0;
  double frame_rate_hz = 20.0;
  double rest_lead_in_s = 2.0;  // each stage starts at rest so the baseline window is quiet
  double load_weighted = 1.25;

  // A-mode device model.
  double rf_fs_hz = 50e6;
  double rf_fc_hz = 5e6;
  int rf_frame_len = 4096;
  double skin_depth_mm = 5.0;
  double sound_speed_m_s = 1540.0;
  double pulse_sigma_s = 0.2e-6;
  double echo_amp_skin = 1.0;
  double echo_amp_muscle = 0.8;
  double rf_noise_sigma = 0.02;

  void validate() const;
};

struct Cohort {
  SimConfig config;
  std::uint64_t master_seed = 0;
  std::vector<SubjectRecording> subjects;
};

// Raised-cosine burst over the first `duty` fraction of each period:
// amplitude * load * 0.5 * (1 - cos(2 pi phase / duty)) while phase < duty,
// zero for the rest of the period.
double activation_profile(double t_s, double period_s, double duty,
                          double amplitude, double load);

// First-order activation-to-thickness dynamics, forward Euler at the input
// rate, downsampled to the frame rate.
ThicknessTrace thickness_dynamics(const std::vector<double>& activation,
                                  double dt_s, double tau_s, double rest_mm,
                                  double gain_mm,
                                  double frame_rate_hz = 20.0);

// Amplitude-modulated band-limited noise model:
// e_c = (w_c a + noise_floor) z_c + 0.01 eta_c, with z_c unit-variance
// 20-450 Hz noise and eta_c white, both seeded per channel.
std::vector<std::vector<double>> synth_semg(const std::vector<double>& activation,
                                            const SubjectProfile& profile,
                                            const SimConfig& cfg,
                                            std::uint64_t seed);

// Two-interface A-mode frames: Gaussian-windowed tone bursts at the skin and
// muscle boundaries plus white noise.
RfFrameSequence synth_rf_frames(const ThicknessTrace& thickness,
                                const SimConfig& cfg, std::uint64_t seed);

SubjectProfile draw_profile(int id, int channels, std::uint64_t seed);

SubjectRecording synth_subject(const SubjectProfile& profile,
                               const std::vector<StageSpec>& stages,
                               const SimConfig& cfg, std::uint64_t seed);

Cohort synth_cohort(const SimConfig& cfg, const std::vector<StageSpec>& stages,
                    std::uint64_t master_seed);

}  // namespace myoattn::sim
