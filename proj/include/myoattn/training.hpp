#pragma once

#include <cstdint>
#include <vector>

#include "myoattn/model.hpp"
#include "myoattn/pipeline.hpp"

namespace myoattn::train {

struct TrainConfig {
  int epochs = 50;
  int batch = 32;
  double lr_max = 1e-3;
  double lr_min = 1e-5;  // cosine decay floor
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
  double lambda_contraction = 0.2;
  double val_fraction = 0.1;
  int adapt_epochs = 10;
  double adapt_lr = 1e-4;
  double adapt_fraction = 0.2;
  bool freeze_encoder_on_adapt = false;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// --- losses (tape graph builders + value-level conveniences) ---------------

// Mean squared error over equal-length column traces.
ad::NodeId mse_loss(ad::Tape& tape, ad::NodeId pred, ad::NodeId target);

// Excursion gap plus first-difference MSE:
// |ex(pred) - ex(target)| + mean((d pred - d target)^2), ex(v) = max - min.
// Shift-invariant in either argument; max/min ties route subgradients to the
// first index.
ad::NodeId contraction_loss(ad::Tape& tape, ad::NodeId pred, ad::NodeId target);

// mse + lambda_c * contraction.
ad::NodeId total_loss(ad::Tape& tape, ad::NodeId pred, ad::NodeId target,
                      double lambda_c);

double mse_loss(const std::vector<double>& pred, const std::vector<double>& target);
double contraction_loss(const std::vector<double>& pred,
                        const std::vector<double>& target);
double total_loss(const std::vector<double>& pred, const std::vector<double>& target,
                  double lambda_c);

// --- optimizer --------------------------------------------------------------

struct AdamState {
  model::Parameters m;
  model::Parameters v;
  long step = 0;
};

AdamState make_adam_state(const model::Parameters& params);

// Rescales all gradients so the global L2 norm is at most max_norm; returns
// the pre-clip norm. Throws on non-finite values, naming the tensor.
double clip_global_norm(model::Parameters& grads, double max_norm);

// One clipped, bias-corrected Adam update over every tensor. `trainable`
// (when non-null) marks tensors to update; frozen tensors keep their values
// and contribute nothing to the clip norm.
void adam_step(model::Parameters& params, AdamState& state,
               model::Parameters grads, double lr, const TrainConfig& cfg,
               const std::vector<bool>* trainable = nullptr);

// Cosine schedule from lr_max to lr_min over total_steps.
double cosine_lr(const TrainConfig& cfg, long step, long total_steps);

// --- training loop ----------------------------------------------------------

struct EpochStats {
  double train_total = 0.0;
  double train_mse = 0.0;
  double train_contraction = 0.0;
  double val_total = 0.0;
  double val_mse = 0.0;
  double val_contraction = 0.0;
};

struct TrainState {
  model::ArchConfig arch;
  model::Parameters params;  // best-validation snapshot
  emg::Normalizer normalizer;
  AdamState opt;
  int epochs_run = 0;
  int best_epoch = 0;
  std::vector<EpochStats> history;
};

// Fits the normalizer on the given windows, holds out a subject-stratified
// validation fraction, trains with seeded shuffling and per-step cosine lr,
// and returns the parameters from the best-validation epoch.
TrainState train(const emg::WindowedDataset& dataset, const TrainConfig& cfg,
                 const model::ArchConfig& arch);

// Chronological (stage-major) ordering of one subject's window indices.
std::vector<int> chronological_order(const std::vector<emg::FeatureWindow>& windows);

// First `fraction` of the chronologically ordered windows adapt, the rest are
// reserved for evaluation.
struct AdaptationSplit {
  std::vector<int> adapt;
  std::vector<int> eval;
};
AdaptationSplit split_adaptation(const std::vector<emg::FeatureWindow>& windows,
                                 double fraction);

// Full-parameter finetune on the chronologically first adapt_fraction of the
// target subject's windows (constant lr, same losses). The reserved windows
// are never touched.
model::Parameters domain_adapt(const model::Parameters& params,
                               const emg::Normalizer& normalizer,
                               const model::ArchConfig& arch,
                               const std::vector<emg::FeatureWindow>& target_windows,
                               const TrainConfig& cfg);

}  // namespace myoattn::train
