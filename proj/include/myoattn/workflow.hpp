#pragma once

#include "myoattn/io.hpp"
#include "myoattn/ultrasound.hpp"

namespace myoattn::flow {

// Label + feature pipeline for a whole cohort: ultrasound-derived deformation
// (tracked thickness minus the subject's stage-1 rest baseline) and
// per-channel sEMG envelope features, cut into aligned windows.
eval::ProtocolDataset preprocess_cohort(const sim::Cohort& cohort);

// Windows belonging to one subject.
std::vector<emg::FeatureWindow> subject_windows(const eval::ProtocolDataset& data,
                                                int subject);

// Training on a subject subset of a windows file; returns state plus the
// subjects used (for checkpoint provenance).
train::TrainState train_on_subjects(const eval::ProtocolDataset& data,
                                    const std::vector<int>& subjects,
                                    const train::TrainConfig& cfg,
                                    const model::ArchConfig& arch);

// Every pair in the suite config, reports concatenated in pair order.
std::vector<eval::MetricsReport> run_protocol_suite(const eval::ProtocolDataset& data,
                                                    const io::RunConfig& cfg);

// Eval-mode predictions for one subject/stage, stitched onto the 20 Hz grid,
// with the aligned true deformation slice.
struct StitchedPair {
  sim::ThicknessTrace pred;
  sim::ThicknessTrace truth;
};
StitchedPair infer_stage(const eval::ProtocolDataset& data,
                         const model::Parameters& params,
                         const model::ArchConfig& arch,
                         const emg::Normalizer& normalizer, int subject, int stage);

}  // namespace myoattn::flow
