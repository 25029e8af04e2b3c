#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "myoattn/autodiff.hpp"

using namespace myoattn;
using namespace myoattn::ad;

namespace {

Tensor random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor t({r, c});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
  return t;
}

}  // namespace

TEST_CASE("linear: identity and hand arithmetic") {
  Tape tape;
  const NodeId x = tape.constant(Tensor::matrix({{1.0, 2.0}}));
  const NodeId w = tape.constant(Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}}));
  const NodeId b = tape.constant(Tensor::vec({0.0, 0.0}));
  const Tensor& out = tape.value(tape.linear(x, w, b));
  CHECK(out.at(0, 0) == 1.0);
  CHECK(out.at(0, 1) == 2.0);

  const NodeId x2 = tape.constant(Tensor::matrix({{1.0, 1.0}}));
  const NodeId w2 = tape.constant(Tensor::matrix({{2.0}, {3.0}}));
  const NodeId b2 = tape.constant(Tensor::vec({1.0}));
  CHECK(tape.value(tape.linear(x2, w2, b2)).at(0, 0) == 6.0);

  const NodeId w_wide = tape.constant(Tensor::matrix({{1.0, 2.0, 3.0}}));
  CHECK_THROWS_AS(tape.linear(x, w_wide, b2), ShapeError);
}

TEST_CASE("linear matches the naive triple-loop oracle") {
  const Tensor a = random_matrix(3, 4, 11);
  const Tensor w = random_matrix(4, 2, 12);
  const Tensor b = random_matrix(1, 2, 13);
  Tape tape;
  const Tensor& out = tape.value(tape.linear(
      tape.constant(a), tape.constant(w),
      tape.constant(Tensor::vec({b[0], b[1]}))));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double want = b[static_cast<std::size_t>(j)];
      for (int k = 0; k < 4; ++k) want += a.at(i, k) * w.at(k, j);
      CHECK(out.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("softmax rows: symmetry, closed form, overflow safety") {
  Tape tape;
  const Tensor& sym = tape.value(tape.softmax_rows(tape.constant(Tensor::vec({0.0, 0.0}))));
  CHECK(sym[0] == doctest::Approx(0.5));
  CHECK(sym[1] == doctest::Approx(0.5));

  const Tensor& closed =
      tape.value(tape.softmax_rows(tape.constant(Tensor::vec({0.0, std::log(3.0)}))));
  CHECK(closed[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(closed[1] == doctest::Approx(0.75).epsilon(1e-12));

  const Tensor& big =
      tape.value(tape.softmax_rows(tape.constant(Tensor::vec({1000.0, 1000.0}))));
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
}

TEST_CASE("softmax rows sum to one on random input") {
  const Tensor x = random_matrix(17, 9, 21);
  Tape tape;
  const Tensor& p = tape.value(tape.softmax_rows(tape.constant(x)));
  for (int i = 0; i < 17; ++i) {
    double s = 0.0;
    for (int j = 0; j < 9; ++j) {
      CHECK(p.at(i, j) >= 0.0);
      s += p.at(i, j);
    }
    CHECK(std::fabs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("attention with a single key returns the value row") {
  Tape tape;
  const NodeId q = tape.constant(random_matrix(4, 3, 31));
  const NodeId k = tape.constant(random_matrix(1, 3, 32));
  const Tensor v_val = random_matrix(1, 3, 33);
  const NodeId v = tape.constant(v_val);
  const Tensor& out = tape.value(tape.scaled_dot_attention(q, k, v));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) CHECK(out.at(i, j) == doctest::Approx(v_val.at(0, j)));
}

TEST_CASE("attention with scaled orthonormal queries recovers matching values") {
  // Q = K = s * I; softmax concentrates on the matching key as s grows.
  const double s = 60.0;
  Tensor qk({4, 4});
  for (int i = 0; i < 4; ++i) qk.at(i, i) = s;
  const Tensor v_val = random_matrix(4, 5, 41);
  Tape tape;
  const Tensor& out = tape.value(tape.scaled_dot_attention(
      tape.constant(qk), tape.constant(qk), tape.constant(v_val)));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(out.at(i, j) == doctest::Approx(v_val.at(i, j)).epsilon(1e-6));
}

TEST_CASE("attention outputs stay within the value column bounds") {
  const Tensor q = random_matrix(6, 3, 51);
  const Tensor k = random_matrix(8, 3, 52);
  const Tensor v = random_matrix(8, 4, 53);
  Tape tape;
  const Tensor& out = tape.value(tape.scaled_dot_attention(
      tape.constant(q), tape.constant(k), tape.constant(v)));
  for (int j = 0; j < 4; ++j) {
    double lo = v.at(0, j), hi = v.at(0, j);
    for (int i = 1; i < 8; ++i) {
      lo = std::min(lo, v.at(i, j));
      hi = std::max(hi, v.at(i, j));
    }
    for (int i = 0; i < 6; ++i) {
      CHECK(out.at(i, j) >= lo - 1e-12);
      CHECK(out.at(i, j) <= hi + 1e-12);
    }
  }
}

TEST_CASE("attention mask excludes keys exactly") {
  Tape tape;
  const NodeId q = tape.constant(random_matrix(2, 3, 61));
  const NodeId k = tape.parameter(random_matrix(3, 3, 62));
  const NodeId v = tape.parameter(random_matrix(3, 2, 63));
  Tensor mask({2, 3});
  mask.at(0, 2) = -std::numeric_limits<double>::infinity();
  mask.at(1, 2) = -std::numeric_limits<double>::infinity();
  const NodeId out = tape.scaled_dot_attention(q, k, v, mask);
  const NodeId loss = tape.sum_all(out);
  tape.backward(loss);
  // No gradient may reach the masked key/value row.
  const Tensor& dk = tape.grad(k);
  const Tensor& dv = tape.grad(v);
  for (int j = 0; j < 3; ++j) CHECK(dk.at(2, j) == 0.0);
  for (int j = 0; j < 2; ++j) CHECK(dv.at(2, j) == 0.0);
}

TEST_CASE("layer norm closed forms") {
  Tape tape;
  const NodeId gain = tape.constant(Tensor::vec({1.0, 1.0}));
  const NodeId bias = tape.constant(Tensor::vec({0.0, 0.0}));
  const Tensor& zeroed = tape.value(
      tape.layer_norm(tape.constant(Tensor::matrix({{1.0, 1.0}})), gain, bias));
  CHECK(zeroed.at(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(zeroed.at(0, 1) == doctest::Approx(0.0).epsilon(1e-9));

  const Tensor& pm1 = tape.value(
      tape.layer_norm(tape.constant(Tensor::matrix({{0.0, 2.0}})), gain, bias));
  CHECK(pm1.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(pm1.at(0, 1) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layer norm output row mean equals the bias mean") {
  const Tensor x = random_matrix(7, 6, 71);
  const Tensor gain = random_matrix(1, 6, 72);
  const Tensor bias = random_matrix(1, 6, 73);
  double bias_mean = 0.0;
  for (int j = 0; j < 6; ++j) bias_mean += bias[static_cast<std::size_t>(j)];
  bias_mean /= 6.0;
  Tape tape;
  // Unit gain: the normalized part has zero row mean, so mean(out) = mean(bias).
  const Tensor& out = tape.value(tape.layer_norm(
      tape.constant(x), tape.constant(Tensor::full({6}, 1.0)),
      tape.constant(Tensor(std::vector<int>{6}, bias.data()))));
  for (int i = 0; i < 7; ++i) {
    double m = 0.0;
    for (int j = 0; j < 6; ++j) m += out.at(i, j);
    CHECK(std::fabs(m / 6.0 - bias_mean) < 1e-9);
  }
}

TEST_CASE("backward of a linear map has the outer-product structure") {
  // loss = sum(x W + 0) with fixed x: dL/dW[i][j] = sum_rows x[:,i].
  const Tensor x = random_matrix(3, 4, 81);
  Tape tape;
  const NodeId xc = tape.constant(x);
  const NodeId w = tape.parameter(random_matrix(4, 2, 82));
  const NodeId b = tape.constant(Tensor({2}));
  tape.backward(tape.sum_all(tape.linear(xc, w, b)));
  const Tensor& dw = tape.grad(w);
  for (int i = 0; i < 4; ++i) {
    double col_sum = 0.0;
    for (int r = 0; r < 3; ++r) col_sum += x.at(r, i);
    for (int j = 0; j < 2; ++j)
      CHECK(dw.at(i, j) == doctest::Approx(col_sum).epsilon(1e-12));
  }
}

TEST_CASE("zero loss gives zero gradients") {
  Tape tape;
  const NodeId p = tape.parameter(Tensor::matrix({{1.0}, {2.0}, {3.0}}));
  const NodeId t = tape.constant(Tensor::matrix({{1.0}, {2.0}, {3.0}}));
  tape.backward(tape.mean_all(tape.square(tape.sub(p, t))));
  const Tensor& g = tape.grad(p);
  for (std::size_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  const NodeId p = tape.parameter(random_matrix(2, 2, 91));
  CHECK_THROWS_AS(tape.backward(tape.square(p)), ShapeError);
}

TEST_CASE("composite of every primitive matches central differences") {
  const std::vector<Tensor> params = {random_matrix(4, 3, 101),
                                      random_matrix(3, 3, 102),
                                      random_matrix(1, 3, 103)};
  auto build = [](Tape& tape, const std::vector<NodeId>& ids) {
    const NodeId x = ids[0];
    const NodeId w = ids[1];
    const NodeId bias = tape.reshape(ids[2], {3});
    NodeId h = tape.linear(x, w, bias);
    h = tape.layer_norm(h, tape.constant(Tensor::full({3}, 1.2)),
                        tape.constant(Tensor({3})));
    h = tape.relu(h);
    const NodeId attn = tape.scaled_dot_attention(h, h, h);
    h = tape.add(h, attn);
    const NodeId sm = tape.softmax_rows(h);
    h = tape.sub(h, sm);
    h = tape.add_rowvec(h, bias);
    const NodeId top = tape.slice_rows(h, 0, 2);
    const NodeId bottom = tape.slice_rows(h, 2, 4);
    const std::vector<NodeId> parts = {top, bottom};
    NodeId joined = tape.concat_cols(parts);
    joined = tape.mul_scalar(joined, 0.7);
    const NodeId sq = tape.square(joined);
    const NodeId spread = tape.sub(tape.reduce_max(joined), tape.reduce_min(joined));
    return tape.add(tape.add(tape.mean_all(sq), tape.abs(spread)),
                    tape.sum_all(tape.slice_cols(joined, 1, 4)));
  };
  const GradCheckResult res = grad_check(build, params, 1e-5, 1e-4);
  CHECK(res.n_checked == 24);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("fused multi-head attention equals the slice/attend/concat chain") {
  const Tensor q = random_matrix(6, 8, 141);
  const Tensor k = random_matrix(9, 8, 142);
  const Tensor v = random_matrix(9, 8, 143);
  Tensor mask({6, 9});
  mask.at(1, 4) = -std::numeric_limits<double>::infinity();

  Tape tape;
  const NodeId qn = tape.constant(q), kn = tape.constant(k), vn = tape.constant(v);
  const Tensor fused = tape.value(tape.multihead_attention(qn, kn, vn, 2, mask));
  std::vector<NodeId> heads;
  for (int h = 0; h < 2; ++h)
    heads.push_back(tape.scaled_dot_attention(tape.slice_cols(qn, h * 4, h * 4 + 4),
                                              tape.slice_cols(kn, h * 4, h * 4 + 4),
                                              tape.slice_cols(vn, h * 4, h * 4 + 4),
                                              mask));
  const Tensor& chained = tape.value(tape.concat_cols(heads));
  REQUIRE(fused.same_shape(chained));
  for (std::size_t i = 0; i < fused.numel(); ++i)
    CHECK(fused[i] == doctest::Approx(chained[i]).epsilon(1e-14));

  // and its backward matches central differences
  const std::vector<Tensor> params = {q, k, v};
  auto build = [&mask](Tape& t, const std::vector<NodeId>& ids) {
    return t.mean_all(t.square(t.multihead_attention(ids[0], ids[1], ids[2], 2, mask)));
  };
  CHECK(grad_check(build, params, 1e-5, 1e-4).max_rel_err < 1e-4);
}

TEST_CASE("concat_rows and dropout backward match central differences") {
  const std::vector<Tensor> params = {random_matrix(2, 3, 111),
                                      random_matrix(3, 3, 112)};
  auto build = [](Tape& tape, const std::vector<NodeId>& ids) {
    const std::vector<NodeId> parts = {ids[0], ids[1]};
    NodeId m = tape.concat_rows(parts);
    m = tape.dropout(m, 0.3, 99);  // fixed seed: same mask on every build
    return tape.mean_all(tape.square(m));
  };
  const GradCheckResult res = grad_check(build, params, 1e-5, 1e-4);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("grad_check on a quadratic is exact to rounding") {
  const std::vector<Tensor> params = {Tensor::scalar(3.0)};
  auto build = [](Tape& tape, const std::vector<NodeId>& ids) {
    return tape.sum_all(tape.square(ids[0]));
  };
  Tape tape;
  const NodeId p = tape.parameter(params[0]);
  tape.backward(tape.sum_all(tape.square(p)));
  CHECK(tape.grad(p)[0] == doctest::Approx(6.0));
  const GradCheckResult res = grad_check(build, params, 1e-5, 1e-9);
  CHECK(res.max_rel_err < 1e-9);
}

TEST_CASE("corrupted gradients are flagged") {
  const std::vector<Tensor> params = {Tensor::vec({1.0, -2.0, 0.5})};
  auto f = [](const std::vector<Tensor>& ps) {
    double s = 0.0;
    for (std::size_t i = 0; i < ps[0].numel(); ++i) s += ps[0][i] * ps[0][i];
    return s;
  };
  std::vector<Tensor> grads = {Tensor::vec({2.0, -4.0, 1.0})};
  CHECK(compare_gradients(f, params, grads, 1e-5, 1e-6).failures.empty());
  grads[0][1] = 4.0;  // wrong sign
  const GradCheckResult res = compare_gradients(f, params, grads, 1e-5, 1e-6);
  CHECK(res.failures.size() == 1);
  CHECK(res.failures[0].coord == 1);
  CHECK_FALSE(res.passed(1e-6));
}

TEST_CASE("forward ops are pure") {
  const Tensor x = random_matrix(5, 5, 121);
  Tape a, b;
  const Tensor& ra = a.value(a.softmax_rows(a.constant(x)));
  const Tensor& rb = b.value(b.softmax_rows(b.constant(x)));
  for (std::size_t i = 0; i < ra.numel(); ++i) CHECK(ra[i] == rb[i]);
}

TEST_CASE("dropout disabled rate zero is identity and eval path never records it") {
  Tape tape;
  const Tensor x = random_matrix(3, 3, 131);
  const NodeId n = tape.dropout(tape.constant(x), 0.0, 5);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(tape.value(n)[i] == x[i]);
  CHECK_THROWS_AS(tape.dropout(tape.constant(x), 1.0, 5), ConfigError);
}
