#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "myoattn/tensor.hpp"

namespace myoattn::ad {

using NodeId = int;

// Reverse-mode tape over whole-tensor primitives. Nodes are appended in
// topological order (inputs always precede outputs), so the reverse sweep
// is a single backwards pass that visits each node at most once.
//
// Primitive set: leaf, linear, add, sub, mul_scalar, add_rowvec, relu,
// square, abs, softmax_rows, layer_norm, scaled_dot_attention, concat,
// slice, reshape, mean, sum, reduce_max/min, dropout. Everything else in
// the model composes from these.
class Tape {
 public:
  // Leaves. Parameters participate in gradient propagation; constants do not.
  NodeId parameter(Tensor v);
  NodeId constant(Tensor v);

  // out = x * w + b, b broadcast over rows.
  NodeId linear(NodeId x, NodeId w, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul_scalar(NodeId x, double s);
  // out[i,:] = x[i,:] + r (r is a 1-D length-cols vector).
  NodeId add_rowvec(NodeId x, NodeId r);
  NodeId relu(NodeId x);
  NodeId square(NodeId x);
  NodeId abs(NodeId x);

  // Row-stochastic softmax with per-row max subtraction. -inf logits give
  // exact zeros.
  NodeId softmax_rows(NodeId x);
  // Per-row normalization with population variance: (x - mu)/sqrt(var + eps)
  // * gain + bias. gain/bias are length-cols vectors.
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  // softmax_rows(q k^T / sqrt(d)) v, optionally with an additive logit mask
  // (q.rows x k.rows; use -inf to exclude a key). The mask is a constant.
  NodeId scaled_dot_attention(NodeId q, NodeId k, NodeId v);
  NodeId scaled_dot_attention(NodeId q, NodeId k, NodeId v, const Tensor& mask);
  // Head-parallel variant over column blocks of q/k/v: head h attends within
  // columns [h*d/heads, (h+1)*d/heads). One node instead of a
  // slice/attend/concat chain per head; the same mask applies to every head.
  NodeId multihead_attention(NodeId q, NodeId k, NodeId v, int heads,
                             const Tensor& mask = Tensor{});

  NodeId concat_rows(std::span<const NodeId> xs);
  NodeId concat_cols(std::span<const NodeId> xs);
  NodeId slice_rows(NodeId x, int r0, int r1);
  NodeId slice_cols(NodeId x, int c0, int c1);
  NodeId reshape(NodeId x, std::vector<int> shape);

  NodeId mean_all(NodeId x);
  NodeId sum_all(NodeId x);
  // First-index tie break so subgradients route deterministically.
  NodeId reduce_max(NodeId x);
  NodeId reduce_min(NodeId x);

  // Inverted dropout with an explicitly seeded mask. Training-mode only;
  // callers skip the op entirely in eval mode.
  NodeId dropout(NodeId x, double rate, std::uint64_t seed);

  // Invalidated by subsequent op calls (node storage may grow); copy the
  // tensor if it must outlive further graph construction.
  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse sweep from a scalar loss. Fills gradients for every node on the
  // path to a parameter; throws ShapeError if the loss is not scalar.
  void backward(NodeId loss);
  bool has_grad(NodeId id) const;
  const Tensor& grad(NodeId id) const;

  void clear();

 private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    // Receives dLoss/dvalue, accumulates into input gradients via add_grad.
    std::function<void(Tape&, const Tensor&)> backward;
  };

  NodeId push(Tensor value, bool needs_grad,
              std::function<void(Tape&, const Tensor&)> backward);
  void add_grad(NodeId id, const Tensor& g);
  void add_grad_scaled(NodeId id, const Tensor& g, double s);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;

  friend struct TapeTestAccess;
};

// --- gradient checking -----------------------------------------------------

struct GradCheckFailure {
  int param_index = 0;
  std::size_t coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  int n_checked = 0;
  std::vector<GradCheckFailure> failures;
  bool passed(double tol) const { return max_rel_err < tol; }
};

// Compares supplied analytic gradients against central differences of
// f_value. rel_err = |a - n| / max(1e-8, |a| + |n|). If
// max_coords_per_tensor >= 0, samples that many coordinates per tensor
// (seeded); otherwise checks every coordinate.
GradCheckResult compare_gradients(
    const std::function<double(const std::vector<Tensor>&)>& f_value,
    const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
    double h, double tol, int max_coords_per_tensor = -1,
    std::uint64_t seed = 0);

// End-to-end check: builds the graph via `build` (which receives one
// parameter node per tensor and returns the scalar loss node), runs the
// tape backward, and compares against central differences.
GradCheckResult grad_check(
    const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
    const std::vector<Tensor>& params, double h = 1e-5, double tol = 1e-4,
    int max_coords_per_tensor = -1, std::uint64_t seed = 0);

}  // namespace myoattn::ad
