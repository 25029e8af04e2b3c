#include "myoattn/pipeline.hpp"

#include <cmath>

#include "myoattn/dsp.hpp"

namespace myoattn::emg {

std::vector<double> bandpass(const std::vector<double>& x, double lo_hz,
                             double hi_hz, double fs_hz) {
  return dsp::filtfilt(dsp::butter_bandpass(lo_hz, hi_hz, fs_hz), x);
}

std::vector<double> envelope_features(const std::vector<double>& x, double fs_hz,
                                      double lowpass_hz, int decimate) {
  if (decimate < 1) throw ConfigError("decimation factor must be >= 1");
  std::vector<double> rect(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) rect[i] = std::fabs(x[i]);
  rect = dsp::filtfilt(dsp::butter_lowpass(2, lowpass_hz, fs_hz), rect);
  std::vector<double> out;
  out.reserve(rect.size() / decimate + 1);
  for (std::size_t i = 0; i < rect.size(); i += static_cast<std::size_t>(decimate))
    out.push_back(rect[i]);
  return out;
}

Normalizer fit_normalizer(const std::vector<FeatureWindow>& training_windows) {
  if (training_windows.empty())
    throw DataError("fit_normalizer: empty training split");
  const int channels = training_windows.front().features.rows();
  const int len = training_windows.front().features.cols();
  if (training_windows.size() * static_cast<std::size_t>(len) < 2)
    throw DataError("fit_normalizer: need at least 2 samples per channel");
  Normalizer norm;
  norm.mean.assign(channels, 0.0);
  norm.std_dev.assign(channels, 0.0);
  const double n = static_cast<double>(training_windows.size()) * len;
  for (const FeatureWindow& w : training_windows) {
    if (w.features.rows() != channels || w.features.cols() != len)
      throw ShapeError("fit_normalizer: inconsistent window shapes");
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < len; ++i) norm.mean[c] += w.features.at(c, i);
  }
  for (int c = 0; c < channels; ++c) norm.mean[c] /= n;
  for (const FeatureWindow& w : training_windows)
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < len; ++i) {
        const double d = w.features.at(c, i) - norm.mean[c];
        norm.std_dev[c] += d * d;
      }
  for (int c = 0; c < channels; ++c) {
    norm.std_dev[c] = std::sqrt(norm.std_dev[c] / n);
    if (norm.std_dev[c] <= 0.0) {
      norm.std_dev[c] = 1.0;
      norm.degenerate.push_back(c);
    }
  }
  return norm;
}

ad::Tensor apply_normalizer(const Normalizer& norm, const ad::Tensor& features) {
  if (features.rows() != norm.channels())
    throw ShapeError("apply_normalizer: channel count mismatch");
  ad::Tensor out = features;
  const int len = features.cols();
  for (int c = 0; c < norm.channels(); ++c)
    for (int i = 0; i < len; ++i)
      out.at(c, i) = (out.at(c, i) - norm.mean[c]) / norm.std_dev[c];
  return out;
}

double rest_baseline(const sim::ThicknessTrace& stage1_thickness, double rest_s) {
  const auto n = static_cast<std::size_t>(std::lround(rest_s / stage1_thickness.dt));
  if (n < 1 || stage1_thickness.size() < n)
    throw DataError("rest_baseline: trace shorter than the rest window");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += stage1_thickness.values[i];
  return sum / static_cast<double>(n);
}

WindowedDataset make_windows(const std::vector<std::vector<double>>& features,
                             const sim::ThicknessTrace& deformation,
                             int subject, int stage, double window_s,
                             double stride_s, double feature_rate_hz) {
  if (features.empty()) throw DataError("make_windows: no feature channels");
  const int channels = static_cast<int>(features.size());
  const std::size_t n_feat = features.front().size();
  for (const auto& ch : features)
    if (ch.size() != n_feat) throw ShapeError("make_windows: ragged feature channels");

  const double feat_span = static_cast<double>(n_feat) / feature_rate_hz;
  const double target_rate = 1.0 / deformation.dt;
  const double def_span = static_cast<double>(deformation.size()) / target_rate;
  if (std::fabs(feat_span - def_span) > deformation.dt + 1e-9)
    throw DataError("make_windows: feature and deformation spans differ by more than one frame");

  const int win_feat = static_cast<int>(std::lround(window_s * feature_rate_hz));
  const int stride_feat = static_cast<int>(std::lround(stride_s * feature_rate_hz));
  const int win_tgt = static_cast<int>(std::lround(window_s * target_rate));
  const int stride_tgt = static_cast<int>(std::lround(stride_s * target_rate));
  if (stride_feat < 1 || stride_tgt < 1)
    throw ConfigError("make_windows: stride below one sample");

  WindowedDataset ds;
  ds.channels = channels;
  ds.feature_len = win_feat;
  ds.target_len = win_tgt;
  ds.window_s = window_s;
  ds.stride_s = stride_s;
  for (int k = 0;; ++k) {
    const std::size_t f0 = static_cast<std::size_t>(k) * stride_feat;
    const std::size_t t0 = static_cast<std::size_t>(k) * stride_tgt;
    if (f0 + win_feat > n_feat || t0 + win_tgt > deformation.size()) break;
    FeatureWindow w;
    w.subject = subject;
    w.stage = stage;
    w.t_start = static_cast<double>(k) * stride_s;
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(channels) * win_feat);
    for (int c = 0; c < channels; ++c)
      data.insert(data.end(), features[c].begin() + f0,
                  features[c].begin() + f0 + win_feat);
    w.features = ad::Tensor::matrix(channels, win_feat, std::move(data));
    w.target.assign(deformation.values.begin() + t0,
                    deformation.values.begin() + t0 + win_tgt);
    ds.windows.push_back(std::move(w));
  }
  if (ds.windows.empty()) throw DataError("make_windows: streams shorter than one window");
  return ds;
}

}  // namespace myoattn::emg
