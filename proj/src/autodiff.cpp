#include "myoattn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

namespace myoattn::ad {

namespace {

// C(m x n) += A(m x k) * B(k x n); all row-major.
void gemm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<std::size_t>(i) * k;
    double* c = C + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C(m x n) += A(m x k) * B(n x k)^T.
void gemm_nt(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* a = A + static_cast<std::size_t>(i) * k;
    double* c = C + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b = B + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[p] * b[p];
      c[j] += s;
    }
  }
}

// C(m x n) += A(k x m)^T * B(k x n).
void gemm_tn(const double* A, const double* B, double* C, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* a = A + static_cast<std::size_t>(p) * m;
    const double* b = B + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = a[i];
      double* c = C + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

void require_2d(const Tensor& t, const char* what) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(what) + " must be 2-D, got " + shape_str(t));
}

void require_vec(const Tensor& t, int len, const char* what) {
  if (t.ndim() != 1 || t.shape()[0] != len)
    throw ShapeError(std::string(what) + " must be a length-" +
                     std::to_string(len) + " vector, got " + shape_str(t));
}

// Row-stochastic softmax with per-row max subtraction; -inf maps to exact 0.
Tensor softmax_rows_value(const Tensor& x) {
  const int n = x.rows(), m = x.cols();
  Tensor out = x;
  for (int i = 0; i < n; ++i) {
    double* row = out.ptr() + static_cast<std::size_t>(i) * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, row[j]);
    if (!std::isfinite(mx))
      throw ShapeError("softmax row has no finite entries");
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < m; ++j) row[j] /= sum;
  }
  return out;
}

}  // namespace

NodeId Tape::push(Tensor value, bool needs_grad,
                  std::function<void(Tape&, const Tensor&)> backward) {
  nodes_.push_back(Node{std::move(value), needs_grad, std::move(backward)});
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::add_grad(NodeId id, const Tensor& g) {
  if (!nodes_[id].needs_grad) return;
  Tensor& acc = grads_[id];
  if (acc.numel() == 0) acc = Tensor::zeros(nodes_[id].value.shape());
  double* a = acc.ptr();
  const double* p = g.ptr();
  for (std::size_t i = 0; i < acc.numel(); ++i) a[i] += p[i];
}

void Tape::add_grad_scaled(NodeId id, const Tensor& g, double s) {
  if (!nodes_[id].needs_grad) return;
  Tensor& acc = grads_[id];
  if (acc.numel() == 0) acc = Tensor::zeros(nodes_[id].value.shape());
  double* a = acc.ptr();
  const double* p = g.ptr();
  for (std::size_t i = 0; i < acc.numel(); ++i) a[i] += s * p[i];
}

NodeId Tape::parameter(Tensor v) { return push(std::move(v), true, nullptr); }

NodeId Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  require_2d(xv, "linear input");
  require_2d(wv, "linear weight");
  if (xv.cols() != wv.rows())
    throw ShapeError("linear: input " + shape_str(xv) + " does not conform with weight " +
                     shape_str(wv));
  require_vec(bv, wv.cols(), "linear bias");
  const int n = xv.rows(), k = xv.cols(), m = wv.cols();
  Tensor out({n, m});
  for (int i = 0; i < n; ++i)
    std::copy(bv.ptr(), bv.ptr() + m, out.ptr() + static_cast<std::size_t>(i) * m);
  gemm_nn(xv.ptr(), wv.ptr(), out.ptr(), n, k, m);
  bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  return push(std::move(out), ng, [x, w, b, n, k, m](Tape& t, const Tensor& g) {
    if (t.nodes_[x].needs_grad) {
      Tensor dx({n, k});
      gemm_nt(g.ptr(), t.value(w).ptr(), dx.ptr(), n, m, k);
      t.add_grad(x, dx);
    }
    if (t.nodes_[w].needs_grad) {
      Tensor dw({k, m});
      gemm_tn(t.value(x).ptr(), g.ptr(), dw.ptr(), k, n, m);
      t.add_grad(w, dw);
    }
    if (t.nodes_[b].needs_grad) {
      Tensor db({m});
      for (int i = 0; i < n; ++i) {
        const double* gr = g.ptr() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) db[j] += gr[j];
      }
      t.add_grad(b, db);
    }
  });
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    throw ShapeError("add: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(out), ng, [a, b](Tape& t, const Tensor& g) {
    t.add_grad(a, g);
    t.add_grad(b, g);
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv))
    throw ShapeError("sub: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(out), ng, [a, b](Tape& t, const Tensor& g) {
    t.add_grad(a, g);
    t.add_grad_scaled(b, g, -1.0);
  });
}

NodeId Tape::mul_scalar(NodeId x, double s) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= s;
  return push(std::move(out), nodes_[x].needs_grad, [x, s](Tape& t, const Tensor& g) {
    t.add_grad_scaled(x, g, s);
  });
}

NodeId Tape::add_rowvec(NodeId x, NodeId r) {
  const Tensor& xv = value(x);
  const Tensor& rv = value(r);
  require_2d(xv, "add_rowvec input");
  require_vec(rv, xv.cols(), "add_rowvec row");
  const int n = xv.rows(), m = xv.cols();
  Tensor out = xv;
  for (int i = 0; i < n; ++i) {
    double* row = out.ptr() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) row[j] += rv[j];
  }
  bool ng = nodes_[x].needs_grad || nodes_[r].needs_grad;
  return push(std::move(out), ng, [x, r, n, m](Tape& t, const Tensor& g) {
    t.add_grad(x, g);
    if (t.nodes_[r].needs_grad) {
      Tensor dr({m});
      for (int i = 0; i < n; ++i) {
        const double* gr = g.ptr() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) dr[j] += gr[j];
      }
      t.add_grad(r, dr);
    }
  });
}

NodeId Tape::relu(NodeId x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.numel(); ++i)
      if (xv[i] <= 0.0) dx[i] = 0.0;
    t.add_grad(x, dx);
  });
}

NodeId Tape::square(NodeId x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] *= 2.0 * xv[i];
    t.add_grad(x, dx);
  });
}

NodeId Tape::abs(NodeId x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(out[i]);
  // Subgradient 0 at the kink.
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.numel(); ++i)
      dx[i] *= (xv[i] > 0.0) ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
    t.add_grad(x, dx);
  });
}

NodeId Tape::softmax_rows(NodeId x) {
  Tensor out = softmax_rows_value(value(x));
  Tensor saved = out;
  return push(std::move(out), nodes_[x].needs_grad,
              [x, p = std::move(saved)](Tape& t, const Tensor& g) {
                const int n = p.rows(), m = p.cols();
                Tensor dx({n, m});
                for (int i = 0; i < n; ++i) {
                  const double* pr = p.ptr() + static_cast<std::size_t>(i) * m;
                  const double* gr = g.ptr() + static_cast<std::size_t>(i) * m;
                  double* dr = dx.ptr() + static_cast<std::size_t>(i) * m;
                  double dot = 0.0;
                  for (int j = 0; j < m; ++j) dot += gr[j] * pr[j];
                  for (int j = 0; j < m; ++j) dr[j] = pr[j] * (gr[j] - dot);
                }
                t.add_grad(x, dx);
              });
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  const Tensor& xv = value(x);
  require_2d(xv, "layer_norm input");
  const int n = xv.rows(), m = xv.cols();
  if (m < 2) throw ShapeError("layer_norm requires at least 2 features per row");
  require_vec(value(gain), m, "layer_norm gain");
  require_vec(value(bias), m, "layer_norm bias");
  Tensor out({n, m});
  Tensor xhat({n, m});
  Tensor inv({n});
  const Tensor& gv = value(gain);
  const Tensor& bv = value(bias);
  for (int i = 0; i < n; ++i) {
    const double* row = xv.ptr() + static_cast<std::size_t>(i) * m;
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += row[j];
    mean /= m;
    double var = 0.0;
    for (int j = 0; j < m; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= m;  // population variance
    const double iv = 1.0 / std::sqrt(var + eps);
    inv[i] = iv;
    double* xh = xhat.ptr() + static_cast<std::size_t>(i) * m;
    double* o = out.ptr() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      xh[j] = (row[j] - mean) * iv;
      o[j] = xh[j] * gv[j] + bv[j];
    }
  }
  bool ng = nodes_[x].needs_grad || nodes_[gain].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(out), ng,
              [x, gain, bias, n, m, xh = std::move(xhat),
               iv = std::move(inv)](Tape& t, const Tensor& g) {
                const Tensor& gv = t.value(gain);
                if (t.nodes_[gain].needs_grad || t.nodes_[bias].needs_grad) {
                  Tensor dgain({m}), dbias({m});
                  for (int i = 0; i < n; ++i) {
                    const double* gr = g.ptr() + static_cast<std::size_t>(i) * m;
                    const double* xr = xh.ptr() + static_cast<std::size_t>(i) * m;
                    for (int j = 0; j < m; ++j) {
                      dgain[j] += gr[j] * xr[j];
                      dbias[j] += gr[j];
                    }
                  }
                  t.add_grad(gain, dgain);
                  t.add_grad(bias, dbias);
                }
                if (t.nodes_[x].needs_grad) {
                  Tensor dx({n, m});
                  for (int i = 0; i < n; ++i) {
                    const double* gr = g.ptr() + static_cast<std::size_t>(i) * m;
                    const double* xr = xh.ptr() + static_cast<std::size_t>(i) * m;
                    double* dr = dx.ptr() + static_cast<std::size_t>(i) * m;
                    double ds_mean = 0.0, dsx_mean = 0.0;
                    for (int j = 0; j < m; ++j) {
                      const double ds = gr[j] * gv[j];
                      ds_mean += ds;
                      dsx_mean += ds * xr[j];
                    }
                    ds_mean /= m;
                    dsx_mean /= m;
                    for (int j = 0; j < m; ++j)
                      dr[j] = iv[i] * (gr[j] * gv[j] - ds_mean - xr[j] * dsx_mean);
                  }
                  t.add_grad(x, dx);
                }
              });
}

NodeId Tape::scaled_dot_attention(NodeId q, NodeId k, NodeId v) {
  return scaled_dot_attention(q, k, v, Tensor{});
}

NodeId Tape::scaled_dot_attention(NodeId q, NodeId k, NodeId v, const Tensor& mask) {
  const Tensor& qv = value(q);
  const Tensor& kv = value(k);
  const Tensor& vv = value(v);
  require_2d(qv, "attention query");
  require_2d(kv, "attention key");
  require_2d(vv, "attention value");
  if (qv.cols() != kv.cols())
    throw ShapeError("attention: query/key width mismatch " + shape_str(qv) + " vs " +
                     shape_str(kv));
  if (kv.rows() != vv.rows())
    throw ShapeError("attention: key/value count mismatch " + shape_str(kv) + " vs " +
                     shape_str(vv));
  const int nq = qv.rows(), d = qv.cols(), nk = kv.rows(), dv = vv.cols();
  if (mask.numel() != 0 &&
      (mask.ndim() != 2 || mask.rows() != nq || mask.cols() != nk))
    throw ShapeError("attention: mask must be " + std::to_string(nq) + "x" +
                     std::to_string(nk) + ", got " + shape_str(mask));
  const double alpha = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor logits({nq, nk});
  gemm_nt(qv.ptr(), kv.ptr(), logits.ptr(), nq, d, nk);
  for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] *= alpha;
  if (mask.numel() != 0)
    for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] += mask[i];
  Tensor weights = softmax_rows_value(logits);

  Tensor out({nq, dv});
  gemm_nn(weights.ptr(), vv.ptr(), out.ptr(), nq, nk, dv);

  bool ng = nodes_[q].needs_grad || nodes_[k].needs_grad || nodes_[v].needs_grad;
  return push(std::move(out), ng,
              [q, k, v, nq, d, nk, dv, alpha,
               p = std::move(weights)](Tape& t, const Tensor& g) {
                if (t.nodes_[v].needs_grad) {
                  Tensor dvt({nk, dv});
                  gemm_tn(p.ptr(), g.ptr(), dvt.ptr(), nk, nq, dv);
                  t.add_grad(v, dvt);
                }
                if (!t.nodes_[q].needs_grad && !t.nodes_[k].needs_grad) return;
                // dS = P o (dP - rowsum(dP o P)), then fold in the 1/sqrt(d).
                Tensor dp({nq, nk});
                gemm_nt(g.ptr(), t.value(v).ptr(), dp.ptr(), nq, dv, nk);
                Tensor ds({nq, nk});
                for (int i = 0; i < nq; ++i) {
                  const double* pr = p.ptr() + static_cast<std::size_t>(i) * nk;
                  const double* dpr = dp.ptr() + static_cast<std::size_t>(i) * nk;
                  double* dsr = ds.ptr() + static_cast<std::size_t>(i) * nk;
                  double dot = 0.0;
                  for (int j = 0; j < nk; ++j) dot += dpr[j] * pr[j];
                  for (int j = 0; j < nk; ++j) dsr[j] = alpha * pr[j] * (dpr[j] - dot);
                }
                if (t.nodes_[q].needs_grad) {
                  Tensor dq({nq, d});
                  gemm_nn(ds.ptr(), t.value(k).ptr(), dq.ptr(), nq, nk, d);
                  t.add_grad(q, dq);
                }
                if (t.nodes_[k].needs_grad) {
                  Tensor dk({nk, d});
                  gemm_tn(ds.ptr(), t.value(q).ptr(), dk.ptr(), nk, nq, d);
                  t.add_grad(k, dk);
                }
              });
}

NodeId Tape::multihead_attention(NodeId q, NodeId k, NodeId v, int heads,
                                 const Tensor& mask) {
  const Tensor& qv = value(q);
  const Tensor& kv = value(k);
  const Tensor& vv = value(v);
  require_2d(qv, "attention query");
  require_2d(kv, "attention key");
  require_2d(vv, "attention value");
  const int nq = qv.rows(), d = qv.cols(), nk = kv.rows();
  if (kv.cols() != d || vv.cols() != d || vv.rows() != nk)
    throw ShapeError("multihead_attention: q/k/v widths must match");
  if (heads < 1 || d % heads != 0)
    throw ShapeError("multihead_attention: width not divisible by head count");
  if (mask.numel() != 0 &&
      (mask.ndim() != 2 || mask.rows() != nq || mask.cols() != nk))
    throw ShapeError("multihead_attention: mask must be " + std::to_string(nq) + "x" +
                     std::to_string(nk));
  const int dh = d / heads;
  const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));

  // Contiguous per-head copies; the GEMMs dominate, not these gathers.
  auto gather = [dh, d](const Tensor& src, int head, Tensor& dst) {
    const int n = src.rows();
    for (int i = 0; i < n; ++i)
      std::copy(src.ptr() + static_cast<std::size_t>(i) * d + head * dh,
                src.ptr() + static_cast<std::size_t>(i) * d + (head + 1) * dh,
                dst.ptr() + static_cast<std::size_t>(i) * dh);
  };

  Tensor out({nq, d});
  Tensor weights({heads, nq * nk});  // softmax rows saved per head
  Tensor qh({nq, dh}), kh({nk, dh}), vh({nk, dh});
  for (int h = 0; h < heads; ++h) {
    gather(qv, h, qh);
    gather(kv, h, kh);
    gather(vv, h, vh);
    Tensor logits({nq, nk});
    gemm_nt(qh.ptr(), kh.ptr(), logits.ptr(), nq, dh, nk);
    for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] *= alpha;
    if (mask.numel() != 0)
      for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] += mask[i];
    const Tensor p = softmax_rows_value(logits);
    Tensor oh({nq, dh});
    gemm_nn(p.ptr(), vh.ptr(), oh.ptr(), nq, nk, dh);
    for (int i = 0; i < nq; ++i)
      std::copy(oh.ptr() + static_cast<std::size_t>(i) * dh,
                oh.ptr() + static_cast<std::size_t>(i + 1) * dh,
                out.ptr() + static_cast<std::size_t>(i) * d + h * dh);
    std::copy(p.ptr(), p.ptr() + p.numel(),
              weights.ptr() + static_cast<std::size_t>(h) * nq * nk);
  }

  bool ng = nodes_[q].needs_grad || nodes_[k].needs_grad || nodes_[v].needs_grad;
  return push(std::move(out), ng,
              [q, k, v, nq, d, nk, dh, heads, alpha,
               w = std::move(weights)](Tape& t, const Tensor& g) {
                const Tensor& qv = t.value(q);
                const Tensor& kv = t.value(k);
                const Tensor& vv = t.value(v);
                const bool need_q = t.nodes_[q].needs_grad;
                const bool need_k = t.nodes_[k].needs_grad;
                const bool need_v = t.nodes_[v].needs_grad;
                Tensor dq({nq, d}), dk({nk, d}), dv({nk, d});
                Tensor qh({nq, dh}), kh({nk, dh}), vh({nk, dh}), gh({nq, dh});
                auto gather = [dh, d](const Tensor& src, int head, Tensor& dst) {
                  const int n = src.rows();
                  for (int i = 0; i < n; ++i)
                    std::copy(src.ptr() + static_cast<std::size_t>(i) * d + head * dh,
                              src.ptr() + static_cast<std::size_t>(i) * d + (head + 1) * dh,
                              dst.ptr() + static_cast<std::size_t>(i) * dh);
                };
                auto scatter = [dh, d](const Tensor& src, int head, Tensor& dst) {
                  const int n = src.rows();
                  for (int i = 0; i < n; ++i)
                    std::copy(src.ptr() + static_cast<std::size_t>(i) * dh,
                              src.ptr() + static_cast<std::size_t>(i + 1) * dh,
                              dst.ptr() + static_cast<std::size_t>(i) * d + head * dh);
                };
                for (int h = 0; h < heads; ++h) {
                  gather(qv, h, qh);
                  gather(kv, h, kh);
                  gather(vv, h, vh);
                  gather(g, h, gh);
                  const double* p = w.ptr() + static_cast<std::size_t>(h) * nq * nk;
                  if (need_v) {
                    Tensor dvh({nk, dh});
                    gemm_tn(p, gh.ptr(), dvh.ptr(), nk, nq, dh);
                    scatter(dvh, h, dv);
                  }
                  if (!need_q && !need_k) continue;
                  Tensor dp({nq, nk});
                  gemm_nt(gh.ptr(), vh.ptr(), dp.ptr(), nq, dh, nk);
                  Tensor ds({nq, nk});
                  for (int i = 0; i < nq; ++i) {
                    const double* pr = p + static_cast<std::size_t>(i) * nk;
                    const double* dpr = dp.ptr() + static_cast<std::size_t>(i) * nk;
                    double* dsr = ds.ptr() + static_cast<std::size_t>(i) * nk;
                    double dot = 0.0;
                    for (int j = 0; j < nk; ++j) dot += dpr[j] * pr[j];
                    for (int j = 0; j < nk; ++j) dsr[j] = alpha * pr[j] * (dpr[j] - dot);
                  }
                  if (need_q) {
                    Tensor dqh({nq, dh});
                    gemm_nn(ds.ptr(), kh.ptr(), dqh.ptr(), nq, nk, dh);
                    scatter(dqh, h, dq);
                  }
                  if (need_k) {
                    Tensor dkh({nk, dh});
                    gemm_tn(ds.ptr(), qh.ptr(), dkh.ptr(), nk, nq, dh);
                    scatter(dkh, h, dk);
                  }
                }
                if (need_q) t.add_grad(q, dq);
                if (need_k) t.add_grad(k, dk);
                if (need_v) t.add_grad(v, dv);
              });
}

NodeId Tape::concat_rows(std::span<const NodeId> xs) {
  if (xs.empty()) throw ShapeError("concat_rows: no inputs");
  const int m = value(xs[0]).cols();
  int total = 0;
  bool ng = false;
  for (NodeId id : xs) {
    require_2d(value(id), "concat_rows input");
    if (value(id).cols() != m)
      throw ShapeError("concat_rows: column mismatch");
    total += value(id).rows();
    ng = ng || nodes_[id].needs_grad;
  }
  Tensor out({total, m});
  int r = 0;
  for (NodeId id : xs) {
    const Tensor& xv = value(id);
    std::copy(xv.ptr(), xv.ptr() + xv.numel(),
              out.ptr() + static_cast<std::size_t>(r) * m);
    r += xv.rows();
  }
  std::vector<NodeId> ids(xs.begin(), xs.end());
  return push(std::move(out), ng, [ids, m](Tape& t, const Tensor& g) {
    int r = 0;
    for (NodeId id : ids) {
      const int ni = t.value(id).rows();
      if (t.nodes_[id].needs_grad) {
        Tensor gi({ni, m});
        std::copy(g.ptr() + static_cast<std::size_t>(r) * m,
                  g.ptr() + static_cast<std::size_t>(r + ni) * m, gi.ptr());
        t.add_grad(id, gi);
      }
      r += ni;
    }
  });
}

NodeId Tape::concat_cols(std::span<const NodeId> xs) {
  if (xs.empty()) throw ShapeError("concat_cols: no inputs");
  const int n = value(xs[0]).rows();
  int total = 0;
  bool ng = false;
  for (NodeId id : xs) {
    require_2d(value(id), "concat_cols input");
    if (value(id).rows() != n) throw ShapeError("concat_cols: row mismatch");
    total += value(id).cols();
    ng = ng || nodes_[id].needs_grad;
  }
  Tensor out({n, total});
  int c = 0;
  for (NodeId id : xs) {
    const Tensor& xv = value(id);
    const int mi = xv.cols();
    for (int i = 0; i < n; ++i)
      std::copy(xv.ptr() + static_cast<std::size_t>(i) * mi,
                xv.ptr() + static_cast<std::size_t>(i + 1) * mi,
                out.ptr() + static_cast<std::size_t>(i) * total + c);
    c += mi;
  }
  std::vector<NodeId> ids(xs.begin(), xs.end());
  return push(std::move(out), ng, [ids, n, total](Tape& t, const Tensor& g) {
    int c = 0;
    for (NodeId id : ids) {
      const int mi = t.value(id).cols();
      if (t.nodes_[id].needs_grad) {
        Tensor gi({n, mi});
        for (int i = 0; i < n; ++i)
          std::copy(g.ptr() + static_cast<std::size_t>(i) * total + c,
                    g.ptr() + static_cast<std::size_t>(i) * total + c + mi,
                    gi.ptr() + static_cast<std::size_t>(i) * mi);
        t.add_grad(id, gi);
      }
      c += mi;
    }
  });
}

NodeId Tape::slice_rows(NodeId x, int r0, int r1) {
  const Tensor& xv = value(x);
  require_2d(xv, "slice_rows input");
  const int n = xv.rows(), m = xv.cols();
  if (r0 < 0 || r1 > n || r0 >= r1)
    throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") for " + shape_str(xv));
  Tensor out({r1 - r0, m});
  std::copy(xv.ptr() + static_cast<std::size_t>(r0) * m,
            xv.ptr() + static_cast<std::size_t>(r1) * m, out.ptr());
  return push(std::move(out), nodes_[x].needs_grad,
              [x, r0, r1, n, m](Tape& t, const Tensor& g) {
                Tensor dx({n, m});
                std::copy(g.ptr(), g.ptr() + g.numel(),
                          dx.ptr() + static_cast<std::size_t>(r0) * m);
                t.add_grad(x, dx);
              });
}

NodeId Tape::slice_cols(NodeId x, int c0, int c1) {
  const Tensor& xv = value(x);
  require_2d(xv, "slice_cols input");
  const int n = xv.rows(), m = xv.cols();
  if (c0 < 0 || c1 > m || c0 >= c1)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for " + shape_str(xv));
  const int mi = c1 - c0;
  Tensor out({n, mi});
  for (int i = 0; i < n; ++i)
    std::copy(xv.ptr() + static_cast<std::size_t>(i) * m + c0,
              xv.ptr() + static_cast<std::size_t>(i) * m + c1,
              out.ptr() + static_cast<std::size_t>(i) * mi);
  return push(std::move(out), nodes_[x].needs_grad,
              [x, c0, n, m, mi](Tape& t, const Tensor& g) {
                Tensor dx({n, m});
                for (int i = 0; i < n; ++i)
                  std::copy(g.ptr() + static_cast<std::size_t>(i) * mi,
                            g.ptr() + static_cast<std::size_t>(i + 1) * mi,
                            dx.ptr() + static_cast<std::size_t>(i) * m + c0);
                t.add_grad(x, dx);
              });
}

NodeId Tape::reshape(NodeId x, std::vector<int> shape) {
  const Tensor& xv = value(x);
  Tensor out(shape, xv.data());
  auto old_shape = xv.shape();
  return push(std::move(out), nodes_[x].needs_grad,
              [x, old_shape](Tape& t, const Tensor& g) {
                t.add_grad(x, Tensor(old_shape, g.data()));
              });
}

NodeId Tape::mean_all(NodeId x) {
  const Tensor& xv = value(x);
  const std::size_t n = xv.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += xv[i];
  return push(Tensor::scalar(s / static_cast<double>(n)), nodes_[x].needs_grad,
              [x, n](Tape& t, const Tensor& g) {
                t.add_grad(x, Tensor::full(t.value(x).shape(),
                                           g[0] / static_cast<double>(n)));
              });
}

NodeId Tape::sum_all(NodeId x) {
  const Tensor& xv = value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv[i];
  return push(Tensor::scalar(s), nodes_[x].needs_grad,
              [x](Tape& t, const Tensor& g) {
                t.add_grad(x, Tensor::full(t.value(x).shape(), g[0]));
              });
}

NodeId Tape::reduce_max(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.numel() == 0) throw ShapeError("reduce_max on empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < xv.numel(); ++i)
    if (xv[i] > xv[arg]) arg = i;  // strict: ties keep the first index
  return push(Tensor::scalar(xv[arg]), nodes_[x].needs_grad,
              [x, arg](Tape& t, const Tensor& g) {
                Tensor dx = Tensor::zeros(t.value(x).shape());
                dx[arg] = g[0];
                t.add_grad(x, dx);
              });
}

NodeId Tape::reduce_min(NodeId x) {
  const Tensor& xv = value(x);
  if (xv.numel() == 0) throw ShapeError("reduce_min on empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < xv.numel(); ++i)
    if (xv[i] < xv[arg]) arg = i;
  return push(Tensor::scalar(xv[arg]), nodes_[x].needs_grad,
              [x, arg](Tape& t, const Tensor& g) {
                Tensor dx = Tensor::zeros(t.value(x).shape());
                dx[arg] = g[0];
                t.add_grad(x, dx);
              });
}

NodeId Tape::dropout(NodeId x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0,1)");
  const Tensor& xv = value(x);
  const double keep = 1.0 - rate;
  Tensor mask(xv.shape());
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < mask.numel(); ++i)
    mask[i] = (uni(rng) < keep) ? 1.0 / keep : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return push(std::move(out), nodes_[x].needs_grad,
              [x, m = std::move(mask)](Tape& t, const Tensor& g) {
                Tensor dx = g;
                for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] *= m[i];
                t.add_grad(x, dx);
              });
}

void Tape::backward(NodeId loss) {
  if (loss < 0 || loss >= size()) throw ShapeError("backward: bad node id");
  if (!nodes_[loss].value.is_scalar())
    throw ShapeError("backward requires a scalar loss, got " +
                     shape_str(nodes_[loss].value));
  grads_.assign(nodes_.size(), Tensor{});
  if (!nodes_[loss].needs_grad) return;  // loss does not depend on any parameter
  grads_[loss] = Tensor::scalar(1.0);
  for (NodeId id = loss; id >= 0; --id) {
    if (grads_[id].numel() == 0) continue;
    const Node& n = nodes_[id];
    if (n.backward) n.backward(*this, grads_[id]);
  }
}

bool Tape::has_grad(NodeId id) const {
  return id >= 0 && id < static_cast<NodeId>(grads_.size()) &&
         grads_[id].numel() != 0;
}

const Tensor& Tape::grad(NodeId id) const {
  if (!has_grad(id)) throw ShapeError("no gradient recorded for node");
  return grads_[id];
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

// --- gradient checking -----------------------------------------------------

GradCheckResult compare_gradients(
    const std::function<double(const std::vector<Tensor>&)>& f_value,
    const std::vector<Tensor>& params, const std::vector<Tensor>& grads,
    double h, double tol, int max_coords_per_tensor, std::uint64_t seed) {
  if (h <= 0.0) throw ConfigError("grad_check step h must be positive");
  if (grads.size() != params.size())
    throw ShapeError("compare_gradients: gradient count mismatch");
  GradCheckResult res;
  std::vector<Tensor> work = params;
  std::mt19937_64 rng(splitmix64(seed));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::size_t n = params[pi].numel();
    std::vector<std::size_t> coords;
    if (max_coords_per_tensor < 0 ||
        static_cast<std::size_t>(max_coords_per_tensor) >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      for (int i = 0; i < max_coords_per_tensor; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(all[i], all[pick(rng)]);
        coords.push_back(all[i]);
      }
    }
    for (std::size_t c : coords) {
      const double orig = work[pi][c];
      work[pi][c] = orig + h;
      const double fp = f_value(work);
      work[pi][c] = orig - h;
      const double fm = f_value(work);
      work[pi][c] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = grads[pi][c];
      const double rel = std::fabs(analytic - numeric) /
                         std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.n_checked;
      if (rel >= tol)
        res.failures.push_back(
            {static_cast<int>(pi), c, analytic, numeric, rel});
    }
  }
  return res;
}

GradCheckResult grad_check(
    const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
    const std::vector<Tensor>& params, double h, double tol,
    int max_coords_per_tensor, std::uint64_t seed) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const Tensor& p : params) ids.push_back(tape.parameter(p));
  const NodeId loss = build(tape, ids);
  if (!tape.value(loss).is_scalar())
    throw ShapeError("grad_check: build must return a scalar loss node");
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    grads.push_back(tape.has_grad(ids[i]) ? tape.grad(ids[i])
                                          : Tensor::zeros(params[i].shape()));
  auto f_value = [&build](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<NodeId> pids;
    pids.reserve(ps.size());
    for (const Tensor& p : ps) pids.push_back(t.parameter(p));
    return t.value(build(t, pids))[0];
  };
  return compare_gradients(f_value, params, grads, h, tol,
                           max_coords_per_tensor, seed);
}

}  // namespace myoattn::ad
