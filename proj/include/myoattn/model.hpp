#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "myoattn/autodiff.hpp"

namespace myoattn::model {

// Dual-attention architecture: per-channel hierarchical self-attention
// encoders (banded layer then global layer) fused by cross-attention from
// learned output queries. The no_cross ablation swaps the fusion stage for
// mean pooling with a per-step linear head.
struct ArchConfig {
  int channels = 4;
  int tokens_per_channel = 20;
  int patch_len = 5;
  int d_model = 64;
  int heads = 4;
  int ff_dim = 128;
  int n_self = 2;
  int n_cross = 2;
  int out_len = 20;
  double dropout = 0.1;
  bool use_cross_attention = true;
  int band_half_width = 2;

  int feature_len() const { return tokens_per_channel * patch_len; }
  int head_dim() const { return d_model / heads; }
  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

// Named parameter tensors in a fixed order. The order is the contract for
// initialization draws, optimizer state and checkpoint layout.
class Parameters {
 public:
  void add(std::string name, ad::Tensor t);
  bool has(const std::string& name) const;
  ad::Tensor& at(const std::string& name);
  const ad::Tensor& at(const std::string& name) const;
  int index_of(const std::string& name) const;  // -1 when absent

  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  bool all_finite() const;

  std::vector<std::pair<std::string, ad::Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, ad::Tensor>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, ad::Tensor>> items_;
};

// Walks the parameter roster for a config: fn(name, shape, init_kind).
// init_kind: 0 = Glorot uniform, 1 = zeros, 2 = ones, 3 = N(0, 0.02).
void for_each_parameter_spec(
    const ArchConfig& cfg,
    const std::function<void(const std::string&, const std::vector<int>&, int)>& fn);

// Glorot for projections, zeros for biases, ones for norm gains, N(0, 0.02)
// for learned queries and channel embeddings; deterministic per seed.
Parameters init_params(const ArchConfig& cfg, std::uint64_t seed);

// Fixed sinusoidal position table (length x d_model).
ad::Tensor sinusoidal_encoding(int length, int d_model);

// Additive logit mask that restricts token i to keys within +-half_width
// (-inf outside the band).
ad::Tensor band_mask(int tokens, int half_width);

// Parameters bound to a tape as leaves, one node per tensor.
struct BoundParams {
  const Parameters* source = nullptr;
  std::vector<ad::NodeId> ids;

  ad::NodeId at(const std::string& name) const;
};

BoundParams bind_params(ad::Tape& tape, const Parameters& params);

// Per-channel encoder: patchify, embed, add position and channel codes, then
// n_self pre-norm blocks (banded attention first, global attention above).
// `channel_features` holds feature_len() values.
ad::NodeId encode_channel(ad::Tape& tape, const BoundParams& p, const ArchConfig& cfg,
                          ad::NodeId channel_features, int channel,
                          bool train_mode, std::uint64_t dropout_seed);

// Fusion stage: concatenate channel tokens into the memory and run the output
// queries through n_cross pre-norm cross-attention blocks, then the scalar
// head. memory_mask (out_len x channels*tokens) optionally excludes memory
// positions. Returns an out_len x 1 node in mm.
ad::NodeId fuse_predict(ad::Tape& tape, const BoundParams& p, const ArchConfig& cfg,
                        std::span<const ad::NodeId> channel_tokens,
                        bool train_mode, std::uint64_t dropout_seed,
                        const ad::Tensor* memory_mask = nullptr);

// Full forward pass on the tape. Features must already be normalized
// (channels x feature_len). Dropout applies only in train mode.
ad::NodeId forward(ad::Tape& tape, const BoundParams& p, const ArchConfig& cfg,
                   const ad::Tensor& features, bool train_mode = false,
                   std::uint64_t dropout_seed = 0,
                   const ad::Tensor* memory_mask = nullptr);

// Eval-mode convenience: one throwaway tape, returns the prediction values.
std::vector<double> predict(const Parameters& params, const ArchConfig& cfg,
                            const ad::Tensor& features);

}  // namespace myoattn::model
