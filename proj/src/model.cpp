#include "myoattn/model.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace myoattn::model {

namespace {

enum InitKind { kGlorot = 0, kZeros = 1, kOnes = 2, kGauss02 = 3 };

void block_parameter_specs(
    const std::string& prefix, int d_model, int ff_dim,
    const std::function<void(const std::string&, const std::vector<int>&, int)>& fn) {
  fn(prefix + ".ln1.gain", {d_model}, kOnes);
  fn(prefix + ".ln1.bias", {d_model}, kZeros);
  fn(prefix + ".attn.wq", {d_model, d_model}, kGlorot);
  fn(prefix + ".attn.bq", {d_model}, kZeros);
  // No key bias: softmax rows are invariant to a constant key shift, so the
  // parameter would be unidentifiable (and its gradient identically zero).
  fn(prefix + ".attn.wk", {d_model, d_model}, kGlorot);
  fn(prefix + ".attn.wv", {d_model, d_model}, kGlorot);
  fn(prefix + ".attn.bv", {d_model}, kZeros);
  fn(prefix + ".attn.wo", {d_model, d_model}, kGlorot);
  fn(prefix + ".attn.bo", {d_model}, kZeros);
  fn(prefix + ".ln2.gain", {d_model}, kOnes);
  fn(prefix + ".ln2.bias", {d_model}, kZeros);
  fn(prefix + ".ff.w1", {d_model, ff_dim}, kGlorot);
  fn(prefix + ".ff.b1", {ff_dim}, kZeros);
  fn(prefix + ".ff.w2", {ff_dim, d_model}, kGlorot);
  fn(prefix + ".ff.b2", {d_model}, kZeros);
}

// Dropout seed counter threaded through one forward build so every dropout
// op draws an independent mask.
struct DropoutStream {
  bool active = false;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  ad::NodeId apply(ad::Tape& tape, ad::NodeId x) {
    if (!active || rate <= 0.0) return x;
    return tape.dropout(x, rate, derive_seed(seed, counter++));
  }
};

ad::NodeId multihead_attention(ad::Tape& tape, const BoundParams& p,
                               const std::string& prefix, int heads,
                               ad::NodeId q_in, ad::NodeId kv_in,
                               const ad::Tensor* logit_mask) {
  const ad::NodeId q = tape.linear(q_in, p.at(prefix + ".wq"), p.at(prefix + ".bq"));
  const int d_model = tape.value(q).cols();
  const ad::NodeId k = tape.linear(kv_in, p.at(prefix + ".wk"),
                                   tape.constant(ad::Tensor({d_model})));
  const ad::NodeId v = tape.linear(kv_in, p.at(prefix + ".wv"), p.at(prefix + ".bv"));
  const ad::NodeId merged = tape.multihead_attention(
      q, k, v, heads, logit_mask ? *logit_mask : ad::Tensor{});
  return tape.linear(merged, p.at(prefix + ".wo"), p.at(prefix + ".bo"));
}

ad::NodeId feed_forward(ad::Tape& tape, const BoundParams& p,
                        const std::string& prefix, ad::NodeId x) {
  const ad::NodeId h =
      tape.relu(tape.linear(x, p.at(prefix + ".w1"), p.at(prefix + ".b1")));
  return tape.linear(h, p.at(prefix + ".w2"), p.at(prefix + ".b2"));
}

// Pre-norm residual block; kv == x gives self-attention, anything else
// cross-attention.
ad::NodeId transformer_block(ad::Tape& tape, const BoundParams& p,
                             const std::string& prefix, const ArchConfig& cfg,
                             ad::NodeId x, ad::NodeId kv,
                             const ad::Tensor* logit_mask, DropoutStream& drop) {
  const ad::NodeId normed =
      tape.layer_norm(x, p.at(prefix + ".ln1.gain"), p.at(prefix + ".ln1.bias"));
  const ad::NodeId kv_in = (kv == x) ? normed : kv;
  ad::NodeId attn = multihead_attention(tape, p, prefix + ".attn", cfg.heads,
                                        normed, kv_in, logit_mask);
  x = tape.add(x, drop.apply(tape, attn));
  const ad::NodeId normed2 =
      tape.layer_norm(x, p.at(prefix + ".ln2.gain"), p.at(prefix + ".ln2.bias"));
  return tape.add(x, drop.apply(tape, feed_forward(tape, p, prefix + ".ff", normed2)));
}

ad::NodeId param_row(ad::Tape& tape, const BoundParams& p, const std::string& name,
                     int row, int width) {
  return tape.reshape(tape.slice_rows(p.at(name), row, row + 1), {width});
}

}  // namespace

void ArchConfig::validate() const {
  if (channels < 1 || tokens_per_channel < 1 || patch_len < 1 || d_model < 2 ||
      heads < 1 || ff_dim < 1 || n_self < 0 || n_cross < 0 || out_len < 1)
    throw ConfigError("architecture dimensions must be positive");
  if (d_model % heads != 0)
    throw ConfigError("d_model must be divisible by the head count");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout rate must lie in [0,1)");
  if (band_half_width < 0) throw ConfigError("band half width must be >= 0");
}

void Parameters::add(std::string name, ad::Tensor t) {
  if (has(name)) throw ConfigError("duplicate parameter name: " + name);
  items_.emplace_back(std::move(name), std::move(t));
}

bool Parameters::has(const std::string& name) const { return index_of(name) >= 0; }

int Parameters::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].first == name) return static_cast<int>(i);
  return -1;
}

ad::Tensor& Parameters::at(const std::string& name) {
  const int i = index_of(name);
  if (i < 0) throw ConfigError("unknown parameter: " + name);
  return items_[static_cast<std::size_t>(i)].second;
}

const ad::Tensor& Parameters::at(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw ConfigError("unknown parameter: " + name);
  return items_[static_cast<std::size_t>(i)].second;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

bool Parameters::all_finite() const {
  for (const auto& [name, t] : items_)
    if (!t.all_finite()) return false;
  return true;
}

void for_each_parameter_spec(
    const ArchConfig& cfg,
    const std::function<void(const std::string&, const std::vector<int>&, int)>& fn) {
  cfg.validate();
  fn("embed.weight", {cfg.patch_len, cfg.d_model}, kGlorot);
  fn("embed.bias", {cfg.d_model}, kZeros);
  fn("channel_embed", {cfg.channels, cfg.d_model}, kGauss02);
  for (int l = 0; l < cfg.n_self; ++l)
    block_parameter_specs("self." + std::to_string(l), cfg.d_model, cfg.ff_dim, fn);
  if (cfg.use_cross_attention) {
    fn("queries", {cfg.out_len, cfg.d_model}, kGauss02);
    for (int l = 0; l < cfg.n_cross; ++l)
      block_parameter_specs("cross." + std::to_string(l), cfg.d_model, cfg.ff_dim, fn);
    fn("head.weight", {cfg.d_model, 1}, kGlorot);
    fn("head.bias", {1}, kZeros);
  } else {
    fn("pool.weight", {cfg.d_model, cfg.out_len}, kGlorot);
    fn("pool.bias", {cfg.out_len}, kZeros);
  }
}

Parameters init_params(const ArchConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  Parameters params;
  for_each_parameter_spec(cfg, [&](const std::string& name,
                                   const std::vector<int>& shape, int kind) {
    ad::Tensor t(shape);
    switch (kind) {
      case kGlorot: {
        const double fan_in = shape[0];
        const double fan_out = shape.size() > 1 ? shape[1] : 1.0;
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> uni(-a, a);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uni(rng);
        break;
      }
      case kOnes:
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 1.0;
        break;
      case kGauss02: {
        std::normal_distribution<double> gauss(0.0, 0.02);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
        break;
      }
      default:
        break;  // zeros
    }
    params.add(name, std::move(t));
  });
  return params;
}

ad::Tensor sinusoidal_encoding(int length, int d_model) {
  ad::Tensor pe({length, d_model});
  for (int pos = 0; pos < length; ++pos)
    for (int i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i / 2 * 2) / d_model);
      pe.at(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  return pe;
}

ad::Tensor band_mask(int tokens, int half_width) {
  ad::Tensor mask({tokens, tokens});
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < tokens; ++i)
    for (int j = 0; j < tokens; ++j)
      if (std::abs(i - j) > half_width) mask.at(i, j) = ninf;
  return mask;
}

ad::NodeId BoundParams::at(const std::string& name) const {
  const int i = source->index_of(name);
  if (i < 0) throw ConfigError("unknown parameter: " + name);
  return ids[static_cast<std::size_t>(i)];
}

BoundParams bind_params(ad::Tape& tape, const Parameters& params) {
  BoundParams bound;
  bound.source = &params;
  bound.ids.reserve(params.size());
  for (const auto& [name, t] : params.items()) bound.ids.push_back(tape.parameter(t));
  return bound;
}

ad::NodeId encode_channel(ad::Tape& tape, const BoundParams& p, const ArchConfig& cfg,
                          ad::NodeId channel_features, int channel,
                          bool train_mode, std::uint64_t dropout_seed) {
  if (channel < 0 || channel >= cfg.channels)
    throw ShapeError("encode_channel: channel index out of range");
  const ad::Tensor& feats = tape.value(channel_features);
  if (static_cast<int>(feats.numel()) != cfg.feature_len())
    throw ShapeError("encode_channel: expected " + std::to_string(cfg.feature_len()) +
                     " features, got " + shape_str(feats));
  DropoutStream drop{train_mode, cfg.dropout,
                     derive_seed(dropout_seed, static_cast<std::uint64_t>(channel)), 0};

  const ad::NodeId patches = tape.reshape(
      channel_features, {cfg.tokens_per_channel, cfg.patch_len});
  ad::NodeId tokens = tape.linear(patches, p.at("embed.weight"), p.at("embed.bias"));
  tokens = tape.add(tokens, tape.constant(sinusoidal_encoding(cfg.tokens_per_channel,
                                                              cfg.d_model)));
  tokens = tape.add_rowvec(tokens, param_row(tape, p, "channel_embed", channel,
                                             cfg.d_model));

  const ad::Tensor band = band_mask(cfg.tokens_per_channel, cfg.band_half_width);
  for (int l = 0; l < cfg.n_self; ++l) {
    // Hierarchy: the first layer sees a local band, later layers the full span.
    const ad::Tensor* mask = (l == 0) ? &band : nullptr;
    tokens = transformer_block(tape, p, "self." + std::to_string(l), cfg, tokens,
                               tokens, mask, drop);
  }
  return tokens;
}

ad::NodeId fuse_predict(ad::Tape& tape, const BoundParams& p, const ArchConfig& cfg,
                        std::span<const ad::NodeId> channel_tokens,
                        bool train_mode, std::uint64_t dropout_seed,
                        const ad::Tensor* memory_mask) {
  if (static_cast<int>(channel_tokens.size()) != cfg.channels)
    throw ShapeError("fuse_predict: expected one token block per channel");
  const ad::NodeId memory = tape.concat_rows(channel_tokens);

  if (!cfg.use_cross_attention) {
    // Ablation arm: mean-pool the memory, then a per-step linear head.
    const int rows = tape.value(memory).rows();
    const ad::NodeId pool_weights = tape.constant(
        ad::Tensor::matrix(1, rows, std::vector<double>(rows, 1.0 / rows)));
    const ad::NodeId pooled =
        tape.linear(pool_weights, memory, tape.constant(ad::Tensor({cfg.d_model})));
    const ad::NodeId out = tape.linear(pooled, p.at("pool.weight"), p.at("pool.bias"));
    return tape.reshape(out, {cfg.out_len, 1});
  }

  DropoutStream drop{train_mode, cfg.dropout, derive_seed(dropout_seed, 0x1000), 0};
  ad::NodeId queries = tape.add(
      p.at("queries"), tape.constant(sinusoidal_encoding(cfg.out_len, cfg.d_model)));
  for (int l = 0; l < cfg.n_cross; ++l)
    queries = transformer_block(tape, p, "cross." + std::to_string(l), cfg, queries,
                                memory, memory_mask, drop);
  return tape.linear(queries, p.at("head.weight"), p.at("head.bias"));
}

ad::NodeId forward(ad::Tape& tape, const BoundParams& p, const ArchConfig& cfg,
                   const ad::Tensor& features, bool train_mode,
                   std::uint64_t dropout_seed, const ad::Tensor* memory_mask) {
  if (features.rows() != cfg.channels || features.cols() != cfg.feature_len())
    throw ShapeError("forward: features must be " + std::to_string(cfg.channels) + "x" +
                     std::to_string(cfg.feature_len()) + ", got " + shape_str(features));
  const ad::NodeId input = tape.constant(features);
  std::vector<ad::NodeId> encoded;
  encoded.reserve(cfg.channels);
  for (int c = 0; c < cfg.channels; ++c) {
    const ad::NodeId row = tape.slice_rows(input, c, c + 1);
    encoded.push_back(encode_channel(tape, p, cfg, row, c, train_mode, dropout_seed));
  }
  return fuse_predict(tape, p, cfg, encoded, train_mode, dropout_seed, memory_mask);
}

std::vector<double> predict(const Parameters& params, const ArchConfig& cfg,
                            const ad::Tensor& features) {
  ad::Tape tape;
  const BoundParams bound = bind_params(tape, params);
  const ad::NodeId out = forward(tape, bound, cfg, features, false, 0);
  return tape.value(out).data();
}

}  // namespace myoattn::model
