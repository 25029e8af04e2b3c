#pragma once

#include <map>
#include <string>
#include <vector>

#include "myoattn/training.hpp"

namespace myoattn::eval {

struct MetricsReport {
  std::string group;      // test-pair code, e.g. "AD"
  std::string condition;  // zeroshot / adapted / adapted_stage12 / adapted_stage3
  std::string arm;        // baseline / no_contraction_loss / no_cross_attention
  double mtd_mean_mm = 0.0;
  double mtd_std_mm = 0.0;
  double me_mean_mm = 0.0;
  double me_std_mm = 0.0;
  double mepct_mean = 0.0;
  double mepct_std = 0.0;
  long n_periods = 0;
  long n_samples = 0;
};

// "m.mmm ± s.sss", the table rendering used in reports.
std::string format_mean_std(double mean, double std_dev);

struct PredictedWindow {
  double t_start = 0.0;
  std::vector<double> values;  // 20 Hz, window_s long
};

// Averages overlapping window predictions onto the common 20 Hz grid.
// Throws DataError listing any gaps in coverage.
sim::ThicknessTrace stitch_predictions(const std::vector<PredictedWindow>& windows,
                                       double rate_hz = 20.0);

// Period bounds [start, end) between successive upward crossings of the
// half-range threshold, computed on the true trace only; leading and
// trailing partial periods are dropped.
std::vector<std::pair<int, int>> segment_periods(const sim::ThicknessTrace& truth);

// max - min over a segment of at least 2 samples.
double muscle_excursion(const std::vector<double>& segment);

// MTD: per-sample |pred - true| mean +- population std over the whole trace.
// ME: per-period |ex(pred) - ex(true)|; ME%: 100 |dME| / ME(true) with
// periods below 0.5 mm true excursion excluded from the percentage only.
MetricsReport compute_metrics(const std::vector<double>& pred,
                              const std::vector<double>& truth,
                              const std::vector<std::pair<int, int>>& periods);

// One train/test split of the cohort plus the ablation switches.
struct ProtocolConfig {
  std::vector<int> train_subjects;
  std::vector<int> test_subjects;
  std::string label;  // letter pair, e.g. "AD"
  double adapt_fraction = 0.2;
  bool run_no_contraction = true;
  bool run_no_cross_attention = true;
  bool emit_load_rows = true;

  void validate(int n_subjects) const;
};

// Letter code for a subject index (0 -> A).
std::string subject_letter(int subject);

// The five test pairs the reports default to, mirroring the docs.
std::vector<ProtocolConfig> default_protocol_pairs(int n_subjects);

// Windowed data plus the per-(subject, stage) deformation traces the windows
// were cut from; needed to stitch and score stitched predictions.
struct ProtocolDataset {
  emg::WindowedDataset windows;
  std::map<std::pair<int, int>, sim::ThicknessTrace> traces;  // deformation, mm
  std::vector<int> subjects;
  double stride_s = 0.25;
};

// Runs one split end to end: train on the four train subjects, zero-shot
// score the held-out pair on its reserved windows, adapt on the first 20%
// and re-score, emit the per-load breakdown, and repeat for each enabled
// ablation arm. Reports are ordered by (arm, condition).
std::vector<MetricsReport> run_protocol(const ProtocolDataset& data,
                                        const ProtocolConfig& protocol,
                                        const train::TrainConfig& tcfg,
                                        const model::ArchConfig& arch);

}  // namespace myoattn::eval
