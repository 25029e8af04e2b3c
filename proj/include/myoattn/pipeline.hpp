#pragma once

#include <vector>

#include "myoattn/sim.hpp"
#include "myoattn/tensor.hpp"

namespace myoattn::emg {

// One aligned training example: 1.0 s of per-channel envelope features at
// 100 Hz against the matching 20-sample deformation target at 20 Hz.
struct FeatureWindow {
  int subject = 0;
  int stage = 0;
  double t_start = 0.0;
  ad::Tensor features;          // channels x 100
  std::vector<double> target;   // 20 values, mm (deformation)
};

struct WindowedDataset {
  int channels = 0;
  int feature_len = 100;
  int target_len = 20;
  double window_s = 1.0;
  double stride_s = 0.25;
  std::vector<FeatureWindow> windows;
};

// Per-channel z-scoring statistics, fitted on the training split only.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std_dev;   // population std; degenerate channels get 1
  std::vector<int> degenerate;   // channels whose std was replaced

  int channels() const { return static_cast<int>(mean.size()); }
};

// 4th-order Butterworth band-pass, applied forward then backward (zero phase).
std::vector<double> bandpass(const std::vector<double>& x, double lo_hz = 20.0,
                             double hi_hz = 450.0, double fs_hz = 1000.0);

// Rectify, 5 Hz 2nd-order zero-phase lowpass, decimate by 10 (1000 -> 100 Hz).
std::vector<double> envelope_features(const std::vector<double>& x,
                                      double fs_hz = 1000.0,
                                      double lowpass_hz = 5.0,
                                      int decimate = 10);

Normalizer fit_normalizer(const std::vector<FeatureWindow>& training_windows);
ad::Tensor apply_normalizer(const Normalizer& norm, const ad::Tensor& features);

// Mean thickness over the leading rest seconds of a stage-1 trace.
double rest_baseline(const sim::ThicknessTrace& stage1_thickness,
                     double rest_s = 2.0);

// Slide a 1.0 s window at 0.25 s stride over per-channel features (100 Hz)
// and a deformation trace (20 Hz). The deformation input must already be
// baseline-subtracted. Streams must cover the same span within one frame.
WindowedDataset make_windows(const std::vector<std::vector<double>>& features,
                             const sim::ThicknessTrace& deformation,
                             int subject, int stage, double window_s = 1.0,
                             double stride_s = 0.25,
                             double feature_rate_hz = 100.0);

}  // namespace myoattn::emg
