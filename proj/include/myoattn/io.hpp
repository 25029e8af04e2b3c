#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "myoattn/evaluation.hpp"

namespace myoattn::io {

struct PathsConfig {
  std::string dataset_dir = "data";
  std::string windows_file = "windows.bin";
  std::string checkpoint = "model.ckpt";
  std::string report_prefix = "report";

  bool operator==(const PathsConfig&) const = default;
};

struct ProtocolSuiteConfig {
  std::vector<std::string> pair_labels = {"AD", "AB", "CD", "CB", "AF"};
  double adapt_fraction = 0.2;
  bool ablation_no_contraction = true;
  bool ablation_no_cross_attention = true;
  bool emit_load_rows = true;

  bool operator==(const ProtocolSuiteConfig&) const = default;
};

// Simulation knobs exposed in the config file; device constants stay in
// sim::SimConfig defaults.
struct SimSection {
  int n_subjects = 6;
  int channels = 4;
  double duration_s = 60.0;
  double rest_lead_in_s = 2.0;
  double load_weighted = 1.25;
  double rf_noise_sigma = 0.02;

  sim::SimConfig to_sim_config() const;
  bool operator==(const SimSection&) const = default;
};

// Whole-run configuration, serialized as one JSON document. Unknown keys are
// rejected; every field has a default. The train seed is always derived from
// master_seed (flag > MYOATTN_SEED env > config).
struct RunConfig {
  int format_version = 1;
  std::uint64_t master_seed = 7;
  SimSection sim;
  model::ArchConfig arch;
  train::TrainConfig train;
  ProtocolSuiteConfig protocol;
  PathsConfig paths;

  RunConfig() { train.seed = master_seed; }
  bool operator==(const RunConfig&) const = default;
};

RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical form: sorted keys, floats rendered %.12g, no whitespace.
// Idempotent under load/dump cycles.
std::string canonical_config_json(const RunConfig& cfg);

// Expands a letter-pair label (e.g. "AD") into a train/test split carrying
// the suite's ablation switches.
eval::ProtocolConfig protocol_from_label(const std::string& label, int n_subjects,
                                         const ProtocolSuiteConfig& suite);

// --- dataset directory ------------------------------------------------------

void save_dataset(const std::filesystem::path& dir, const sim::Cohort& cohort);
sim::Cohort load_dataset(const std::filesystem::path& dir);

// --- windows file -----------------------------------------------------------

void save_windows(const std::filesystem::path& path, const eval::ProtocolDataset& data);
eval::ProtocolDataset load_windows(const std::filesystem::path& path);

// --- checkpoints ------------------------------------------------------------

struct CheckpointMeta {
  model::ArchConfig arch;
  emg::Normalizer normalizer;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string history_digest;
  std::vector<int> trained_subjects;
};

struct Checkpoint {
  model::Parameters params;
  CheckpointMeta meta;
};

void save_checkpoint(const std::filesystem::path& path, const model::Parameters& params,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Shape-checks the stored tensors against what `expected` implies; throws
// DataError naming the first mismatching tensor.
void validate_checkpoint_arch(const Checkpoint& ckpt, const model::ArchConfig& expected);

std::string history_digest(const std::vector<train::EpochStats>& history);

// --- reports and plots ------------------------------------------------------

std::string render_report_csv(const std::vector<eval::MetricsReport>& reports);
// Full-precision JSON (%.17g), sorted keys; byte-stable for fixed inputs.
std::string render_report_json(const std::vector<eval::MetricsReport>& reports);
std::vector<eval::MetricsReport> reports_from_json(const std::string& text);

std::string render_history_json(const train::TrainState& state);

// Overlay of predicted vs true deformation with period boundaries marked;
// exactly two polylines.
std::string render_trace_svg(const sim::ThicknessTrace& pred,
                             const sim::ThicknessTrace& truth,
                             const std::vector<std::pair<int, int>>& periods);
std::string render_report_svg(const std::vector<eval::MetricsReport>& reports);

// --- small file helpers -----------------------------------------------------

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace myoattn::io
