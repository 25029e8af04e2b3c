#pragma once

#include <vector>

#include "myoattn/sim.hpp"

namespace myoattn::us {

struct EchoPair {
  double d1_s = 0.0;        // shallower interface delay
  double d2_s = 0.0;        // deeper interface delay
  double confidence = 0.0;  // second peak amplitude over first
};

// Quadrature demodulation envelope: mix with cos/sin at fc, smooth I and Q
// with a centered moving average spanning two carrier periods, return
// 2*sqrt(I^2+Q^2) so a pure tone of amplitude A maps to A.
std::vector<double> envelope(const std::vector<double>& rf, double fc_hz = 5e6,
                             double fs_hz = 50e6);

// Two largest local maxima at least min_separation apart, each refined by
// 3-point parabolic interpolation. Equal-amplitude ties keep the earlier
// peak. Throws DataError when fewer than two peaks qualify.
EchoPair detect_interfaces(const std::vector<double>& env, double fs_hz = 50e6,
                           double min_separation_s = 3e-6);

// Sub-sample offset of a peak from its three surrounding samples:
// 0.5 (y0 - y2) / (y0 - 2 y1 + y2).
double parabolic_offset(double y0, double y1, double y2);

// Pulse-echo range equation, (d2 - d1) c / 2, in millimetres.
double thickness_from_delays(double d1_s, double d2_s, double c_m_s = 1540.0);

// Per-frame envelope -> interface detection -> thickness, followed by a
// +-3 mm/frame jump guard (hold previous value) and a 5-point median filter.
// Frames whose detection fails inherit the previous value; both repairs are
// counted in ThicknessTrace::flagged.
sim::ThicknessTrace track_thickness(const sim::RfFrameSequence& frames,
                                    double c_m_s = 1540.0,
                                    double min_separation_s = 3e-6,
                                    double max_jump_mm = 3.0);

}  // namespace myoattn::us
