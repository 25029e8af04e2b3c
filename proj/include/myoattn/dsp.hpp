#pragma once

#include <vector>

#include "myoattn/common.hpp"

namespace myoattn::dsp {

// One second-order section: H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

// Butterworth lowpass of even order as a cascade of order/2 sections.
std::vector<Biquad> butter_lowpass(int order, double fc_hz, double fs_hz);

// Butterworth bandpass of order 4 (order-2 lowpass prototype) as two sections,
// unity gain at the geometric center frequency.
std::vector<Biquad> butter_bandpass(double lo_hz, double hi_hz, double fs_hz);

// Single forward pass through the cascade, zero initial state.
std::vector<double> filter(const std::vector<Biquad>& sos, const std::vector<double>& x);

// Forward-backward pass (zero phase, magnitude response squared).
std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x);

// |H(f)| of the cascade at frequency f (single pass).
double gain_at(const std::vector<Biquad>& sos, double f_hz, double fs_hz);

// Centered moving average of the given window length; the window is
// truncated at the edges.
std::vector<double> moving_average_centered(const std::vector<double>& x, int len);

// Pearson correlation coefficient.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace myoattn::dsp
