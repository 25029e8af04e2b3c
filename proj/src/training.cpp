#include "myoattn/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>

namespace myoattn::train {

namespace {

ad::NodeId as_column(ad::Tape& tape, const std::vector<double>& v) {
  return tape.constant(ad::Tensor({static_cast<int>(v.size()), 1}, v));
}

struct LossNodes {
  ad::NodeId mse;
  ad::NodeId contraction;
  ad::NodeId total;
};

LossNodes build_losses(ad::Tape& tape, ad::NodeId pred, ad::NodeId target,
                       double lambda_c) {
  LossNodes nodes;
  nodes.mse = mse_loss(tape, pred, target);
  nodes.contraction = contraction_loss(tape, pred, target);
  nodes.total = tape.add(nodes.mse, tape.mul_scalar(nodes.contraction, lambda_c));
  return nodes;
}

void check_trace_pair(const ad::Tensor& p, const ad::Tensor& t, int min_len) {
  if (!p.same_shape(t))
    throw ShapeError("loss: shape mismatch " + shape_str(p) + " vs " + shape_str(t));
  if (p.ndim() != 2 || p.cols() != 1)
    throw ShapeError("loss expects column traces, got " + shape_str(p));
  if (p.rows() < min_len)
    throw ShapeError("loss: trace needs at least " + std::to_string(min_len) +
                     " samples");
}

// Per-window gradient accumulation in a fixed order keeps training bitwise
// reproducible.
void accumulate_grads(model::Parameters& acc, const ad::Tape& tape,
                      const model::BoundParams& bound, double scale) {
  for (std::size_t i = 0; i < bound.ids.size(); ++i) {
    ad::Tensor& dst = acc.items()[i].second;
    if (!tape.has_grad(bound.ids[i])) continue;
    const ad::Tensor& g = tape.grad(bound.ids[i]);
    for (std::size_t k = 0; k < dst.numel(); ++k) dst[k] += scale * g[k];
  }
}

model::Parameters zeros_like(const model::Parameters& params) {
  model::Parameters out;
  for (const auto& [name, t] : params.items())
    out.add(name, ad::Tensor::zeros(t.shape()));
  return out;
}

struct WindowLoss {
  double total, mse, contraction;
};

WindowLoss eval_window(const model::Parameters& params, const model::ArchConfig& arch,
                       const emg::Normalizer& norm, const emg::FeatureWindow& w,
                       double lambda_c) {
  ad::Tape tape;
  const model::BoundParams bound = model::bind_params(tape, params);
  const ad::NodeId pred =
      model::forward(tape, bound, arch, emg::apply_normalizer(norm, w.features));
  const ad::NodeId target = as_column(tape, w.target);
  const LossNodes loss = build_losses(tape, pred, target, lambda_c);
  return {tape.value(loss.total)[0], tape.value(loss.mse)[0],
          lambda_c * tape.value(loss.contraction)[0]};
}

struct FinetuneOptions {
  int epochs;
  double lr;               // constant when cosine == false
  bool cosine;
  std::uint64_t seed;
  const std::vector<bool>* trainable = nullptr;
};

// Shared mini-batch loop for the main fit and for domain adaptation.
void run_epochs(model::Parameters& params, AdamState& opt,
                const model::ArchConfig& arch, const emg::Normalizer& norm,
                const std::vector<const emg::FeatureWindow*>& windows,
                const TrainConfig& cfg, const FinetuneOptions& opt_cfg,
                std::vector<EpochStats>* history_out,
                const std::function<void(int, EpochStats&)>& on_epoch_end) {
  const long n = static_cast<long>(windows.size());
  const long steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total_steps = steps_per_epoch * opt_cfg.epochs;
  std::vector<int> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::uint64_t dropout_counter = 0;
  for (int epoch = 0; epoch < opt_cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(opt_cfg.seed, 100 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochStats stats;
    for (long b0 = 0; b0 < n; b0 += cfg.batch) {
      const long b1 = std::min(n, b0 + cfg.batch);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      model::Parameters grads = zeros_like(params);
      for (long i = b0; i < b1; ++i) {
        const emg::FeatureWindow& w = *windows[static_cast<std::size_t>(order[i])];
        ad::Tape tape;
        const model::BoundParams bound = model::bind_params(tape, params);
        const ad::NodeId pred = model::forward(
            tape, bound, arch, emg::apply_normalizer(norm, w.features), true,
            derive_seed(opt_cfg.seed, 0xd120 + dropout_counter++));
        const LossNodes loss =
            build_losses(tape, pred, as_column(tape, w.target), cfg.lambda_contraction);
        tape.backward(loss.total);
        accumulate_grads(grads, tape, bound, inv);
        stats.train_total += tape.value(loss.total)[0];
        stats.train_mse += tape.value(loss.mse)[0];
        // weighted contribution, so the lambda = 0 arm records zeros
        stats.train_contraction +=
            cfg.lambda_contraction * tape.value(loss.contraction)[0];
      }
      const double lr = opt_cfg.cosine ? cosine_lr(cfg, opt.step, total_steps)
                                       : opt_cfg.lr;
      adam_step(params, opt, std::move(grads), lr, cfg, opt_cfg.trainable);
    }
    stats.train_total /= static_cast<double>(n);
    stats.train_mse /= static_cast<double>(n);
    stats.train_contraction /= static_cast<double>(n);
    on_epoch_end(epoch, stats);
    if (history_out) history_out->push_back(stats);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  // lambda 0 is the ablation arm, so only negatives are rejected
  if (lambda_contraction < 0.0)
    throw ConfigError("contraction weight must be >= 0");
  if (lr_max <= 0.0 || lr_min < 0.0 || lr_min > lr_max)
    throw ConfigError("learning rates must satisfy 0 < lr_min <= lr_max");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("validation fraction must lie in [0,1)");
  if (adapt_fraction <= 0.0 || adapt_fraction >= 1.0)
    throw ConfigError("adaptation fraction must lie in (0,1)");
  if (adapt_epochs < 1) throw ConfigError("adaptation epochs must be >= 1");
}

ad::NodeId mse_loss(ad::Tape& tape, ad::NodeId pred, ad::NodeId target) {
  check_trace_pair(tape.value(pred), tape.value(target), 1);
  return tape.mean_all(tape.square(tape.sub(pred, target)));
}

ad::NodeId contraction_loss(ad::Tape& tape, ad::NodeId pred, ad::NodeId target) {
  check_trace_pair(tape.value(pred), tape.value(target), 2);
  const int n = tape.value(pred).rows();
  const ad::NodeId ex_pred = tape.sub(tape.reduce_max(pred), tape.reduce_min(pred));
  const ad::NodeId ex_target = tape.sub(tape.reduce_max(target), tape.reduce_min(target));
  const ad::NodeId excursion_gap = tape.abs(tape.sub(ex_pred, ex_target));
  const ad::NodeId d_pred =
      tape.sub(tape.slice_rows(pred, 1, n), tape.slice_rows(pred, 0, n - 1));
  const ad::NodeId d_target =
      tape.sub(tape.slice_rows(target, 1, n), tape.slice_rows(target, 0, n - 1));
  const ad::NodeId slope_mse = tape.mean_all(tape.square(tape.sub(d_pred, d_target)));
  return tape.add(excursion_gap, slope_mse);
}

ad::NodeId total_loss(ad::Tape& tape, ad::NodeId pred, ad::NodeId target,
                      double lambda_c) {
  return build_losses(tape, pred, target, lambda_c).total;
}

namespace {

double loss_value(const std::vector<double>& pred, const std::vector<double>& target,
                  const std::function<ad::NodeId(ad::Tape&, ad::NodeId, ad::NodeId)>& f) {
  ad::Tape tape;
  return tape.value(f(tape, as_column(tape, pred), as_column(tape, target)))[0];
}

}  // namespace

double mse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
  return loss_value(pred, target,
                    [](ad::Tape& t, ad::NodeId p, ad::NodeId g) { return mse_loss(t, p, g); });
}

double contraction_loss(const std::vector<double>& pred,
                        const std::vector<double>& target) {
  return loss_value(pred, target, [](ad::Tape& t, ad::NodeId p, ad::NodeId g) {
    return contraction_loss(t, p, g);
  });
}

double total_loss(const std::vector<double>& pred, const std::vector<double>& target,
                  double lambda_c) {
  return loss_value(pred, target, [lambda_c](ad::Tape& t, ad::NodeId p, ad::NodeId g) {
    return total_loss(t, p, g, lambda_c);
  });
}

AdamState make_adam_state(const model::Parameters& params) {
  AdamState st;
  st.m = zeros_like(params);
  st.v = zeros_like(params);
  return st;
}

double clip_global_norm(model::Parameters& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads.items()) {
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (!std::isfinite(g[i]))
        throw Error("non-finite gradient in tensor '" + name + "'");
      sq += g[i] * g[i];
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [name, g] : grads.items())
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= scale;
  }
  return norm;
}

void adam_step(model::Parameters& params, AdamState& state, model::Parameters grads,
               double lr, const TrainConfig& cfg, const std::vector<bool>* trainable) {
  if (grads.size() != params.size())
    throw ShapeError("adam_step: gradient roster does not match parameters");
  if (trainable)
    for (std::size_t i = 0; i < grads.items().size(); ++i)
      if (!(*trainable)[i]) {
        ad::Tensor& g = grads.items()[i].second;
        std::fill(g.data().begin(), g.data().end(), 0.0);
      }
  clip_global_norm(grads, cfg.clip_norm);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    if (trainable && !(*trainable)[i]) continue;
    ad::Tensor& p = params.items()[i].second;
    ad::Tensor& m = state.m.items()[i].second;
    ad::Tensor& v = state.v.items()[i].second;
    const ad::Tensor& g = grads.items()[i].second;
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double cosine_lr(const TrainConfig& cfg, long step, long total_steps) {
  if (total_steps <= 1) return cfg.lr_max;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
  return cfg.lr_min +
         0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

TrainState train(const emg::WindowedDataset& dataset, const TrainConfig& cfg,
                 const model::ArchConfig& arch) {
  cfg.validate();
  arch.validate();
  if (dataset.windows.empty()) throw DataError("train: empty window set");

  TrainState state;
  state.arch = arch;
  state.normalizer = emg::fit_normalizer(dataset.windows);
  state.params = model::init_params(arch, derive_seed(cfg.seed, 1));
  state.opt = make_adam_state(state.params);

  // Subject-stratified validation split.
  std::map<int, std::vector<int>> by_subject;
  for (std::size_t i = 0; i < dataset.windows.size(); ++i)
    by_subject[dataset.windows[i].subject].push_back(static_cast<int>(i));
  std::vector<const emg::FeatureWindow*> train_set, val_set;
  for (auto& [subject, idxs] : by_subject) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5a17 + static_cast<std::uint64_t>(subject)));
    std::shuffle(idxs.begin(), idxs.end(), rng);
    const auto n_val = static_cast<std::size_t>(
        std::floor(cfg.val_fraction * static_cast<double>(idxs.size())));
    for (std::size_t i = 0; i < idxs.size(); ++i) {
      const emg::FeatureWindow* w = &dataset.windows[static_cast<std::size_t>(idxs[i])];
      (i < n_val ? val_set : train_set).push_back(w);
    }
  }
  if (train_set.empty()) throw DataError("train: empty training split");

  model::Parameters best = state.params;
  double best_val = std::numeric_limits<double>::infinity();
  FinetuneOptions run{cfg.epochs, cfg.lr_max, true, cfg.seed, nullptr};
  run_epochs(state.params, state.opt, arch, state.normalizer, train_set, cfg, run,
             &state.history, [&](int epoch, EpochStats& stats) {
               for (const emg::FeatureWindow* w : val_set) {
                 const WindowLoss l = eval_window(state.params, arch, state.normalizer,
                                                  *w, cfg.lambda_contraction);
                 stats.val_total += l.total;
                 stats.val_mse += l.mse;
                 stats.val_contraction += l.contraction;
               }
               if (!val_set.empty()) {
                 stats.val_total /= static_cast<double>(val_set.size());
                 stats.val_mse /= static_cast<double>(val_set.size());
                 stats.val_contraction /= static_cast<double>(val_set.size());
               } else {
                 stats.val_total = stats.train_total;
                 stats.val_mse = stats.train_mse;
                 stats.val_contraction = stats.train_contraction;
               }
               if (stats.val_total < best_val) {
                 best_val = stats.val_total;
                 best = state.params;
                 state.best_epoch = epoch;
               }
             });
  state.epochs_run = cfg.epochs;
  state.params = std::move(best);
  return state;
}

std::vector<int> chronological_order(const std::vector<emg::FeatureWindow>& windows) {
  std::vector<int> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&windows](int a, int b) {
    const auto& wa = windows[static_cast<std::size_t>(a)];
    const auto& wb = windows[static_cast<std::size_t>(b)];
    if (wa.stage != wb.stage) return wa.stage < wb.stage;
    return wa.t_start < wb.t_start;
  });
  return order;
}

AdaptationSplit split_adaptation(const std::vector<emg::FeatureWindow>& windows,
                                 double fraction) {
  if (windows.size() < 5)
    throw DataError("domain adaptation needs at least 5 target windows");
  const std::vector<int> order = chronological_order(windows);
  const auto n_adapt = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(windows.size())));
  AdaptationSplit split;
  split.adapt.assign(order.begin(), order.begin() + static_cast<long>(n_adapt));
  split.eval.assign(order.begin() + static_cast<long>(n_adapt), order.end());
  return split;
}

model::Parameters domain_adapt(const model::Parameters& params,
                               const emg::Normalizer& normalizer,
                               const model::ArchConfig& arch,
                               const std::vector<emg::FeatureWindow>& target_windows,
                               const TrainConfig& cfg) {
  cfg.validate();
  const AdaptationSplit split = split_adaptation(target_windows, cfg.adapt_fraction);
  std::vector<const emg::FeatureWindow*> adapt_set;
  adapt_set.reserve(split.adapt.size());
  for (int i : split.adapt) adapt_set.push_back(&target_windows[static_cast<std::size_t>(i)]);

  std::vector<bool> trainable(params.size(), true);
  if (cfg.freeze_encoder_on_adapt)
    for (std::size_t i = 0; i < params.items().size(); ++i) {
      const std::string& name = params.items()[i].first;
      if (name.rfind("embed.", 0) == 0 || name.rfind("self.", 0) == 0 ||
          name == "channel_embed")
        trainable[i] = false;
    }

  model::Parameters adapted = params;
  AdamState opt = make_adam_state(adapted);
  FinetuneOptions run{cfg.adapt_epochs, cfg.adapt_lr, false,
                      derive_seed(cfg.seed, 0xada7), &trainable};
  run_epochs(adapted, opt, arch, normalizer, adapt_set, cfg, run, nullptr,
             [](int, EpochStats&) {});
  return adapted;
}

}  // namespace myoattn::train
