#pragma once

// Dense row-major tensor engine with reverse-mode automatic differentiation.
//
// The scalar type parameter selects the precision mode: float for training
// (4 bytes per parameter) and double for finite-difference verification.
// Operations validate shapes eagerly, compute eagerly, and append a backward
// rule to a Graph tape when one is supplied and any input requires gradients.
// Replaying the tape in reverse gives dLoss/dLeaf for every requires_grad
// leaf, with fan-out contributions accumulating additively.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "wmt/error.hpp"
#include "wmt/util.hpp"

namespace wmt {

constexpr int kMaxRank = 5;

template <typename T>
struct Tensor;

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
struct Tensor {
  std::vector<int64_t> shape;  // up to kMaxRank extents
  std::vector<T> data;         // row-major
  bool requires_grad = false;
  std::vector<T> grad;         // empty until first touched; same length as data after

  int64_t numel() const { return static_cast<int64_t>(data.size()); }

  int64_t extent(size_t axis) const { return shape[axis]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }
};

template <typename T>
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int64_t> shape, bool requires_grad = false) {
  if (shape.size() > kMaxRank) {
    throw DimensionError("tensor rank " + std::to_string(shape.size()) + " exceeds " +
                         std::to_string(kMaxRank));
  }
  for (int64_t e : shape) {
    if (e <= 0) throw DimensionError("non-positive tensor extent");
  }
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<size_t>(shape_numel<T>(t->shape)), T(0));
  t->requires_grad = requires_grad;
  return t;
}

template <typename T>
TensorPtr<T> tensor_of(std::vector<int64_t> shape, std::vector<T> values, bool requires_grad = false) {
  auto t = make_tensor<T>(std::move(shape), requires_grad);
  if (static_cast<int64_t>(values.size()) != t->numel()) {
    throw DimensionError("value count does not match tensor shape");
  }
  t->data = std::move(values);
  return t;
}

template <typename T>
std::string shape_str(const Tensor<T>& t) {
  std::string s = "[";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Graph: topologically ordered tape of operation records
// ---------------------------------------------------------------------------

template <typename T>
struct OpRecord {
  std::vector<TensorPtr<T>> inputs;
  TensorPtr<T> output;
  // Reads output->grad, accumulates into the inputs' grads.
  std::function<void(const OpRecord<T>&)> backward;
};

template <typename T>
class Graph {
 public:
  void record(std::vector<TensorPtr<T>> inputs, TensorPtr<T> output,
              std::function<void(const OpRecord<T>&)> backward) {
    records_.push_back(OpRecord<T>{std::move(inputs), std::move(output), std::move(backward)});
  }

  size_t size() const { return records_.size(); }

  // Seeds dLoss/dLoss = 1 and replays the tape in reverse. `loss` must be a
  // scalar produced by this graph (or a leaf, in which case nothing flows).
  void backward(const TensorPtr<T>& loss) {
    if (!loss || loss->numel() != 1) {
      throw ContractError("backward requires a scalar loss tensor");
    }
    loss->requires_grad = true;
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      const OpRecord<T>& rec = *it;
      if (!rec.output->requires_grad || rec.output->grad.empty()) continue;
      rec.backward(rec);
    }
  }

 private:
  std::vector<OpRecord<T>> records_;
};

namespace detail {

template <typename T>
bool tracing(Graph<T>* g, std::initializer_list<const TensorPtr<T>*> inputs) {
  if (!g) return false;
  for (const TensorPtr<T>* in : inputs) {
    if (*in && (*in)->requires_grad) return true;
  }
  return false;
}

template <typename T>
void accum(const TensorPtr<T>& t, int64_t i, T v) {
  t->grad[static_cast<size_t>(i)] += v;
}

// Kaiming-uniform initialization: bound = sqrt(6 / fan_in).
template <typename T>
void kaiming_uniform(const TensorPtr<T>& w, int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w->data) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace detail

// Marks `out` as an op output and registers the backward rule.
template <typename T, typename Fn>
void record_op(Graph<T>* g, std::vector<TensorPtr<T>> inputs, const TensorPtr<T>& out, Fn&& fn) {
  out->requires_grad = true;
  for (auto& in : inputs) {
    if (in->requires_grad) in->ensure_grad();
  }
  out->ensure_grad();
  g->record(std::move(inputs), out, std::forward<Fn>(fn));
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> add(Graph<T>* g, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) {
    throw DimensionError("add: shape mismatch " + shape_str(*a) + " vs " + shape_str(*b));
  }
  auto out = make_tensor<T>(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (detail::tracing<T>(g, {&a, &b})) {
    record_op<T>(g, {a, b}, out, [](const OpRecord<T>& r) {
      const auto& dy = r.output->grad;
      for (int64_t i = 0; i < r.output->numel(); ++i) {
        if (r.inputs[0]->requires_grad) detail::accum(r.inputs[0], i, dy[i]);
        if (r.inputs[1]->requires_grad) detail::accum(r.inputs[1], i, dy[i]);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(Graph<T>* g, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) {
    throw DimensionError("mul: shape mismatch " + shape_str(*a) + " vs " + shape_str(*b));
  }
  auto out = make_tensor<T>(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  if (detail::tracing<T>(g, {&a, &b})) {
    record_op<T>(g, {a, b}, out, [](const OpRecord<T>& r) {
      const auto& dy = r.output->grad;
      const auto& a_ = r.inputs[0];
      const auto& b_ = r.inputs[1];
      for (int64_t i = 0; i < r.output->numel(); ++i) {
        if (a_->requires_grad) detail::accum(a_, i, dy[i] * b_->data[i]);
        if (b_->requires_grad) detail::accum(b_, i, dy[i] * a_->data[i]);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> scale(Graph<T>* g, const TensorPtr<T>& a, T factor) {
  auto out = make_tensor<T>(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] * factor;
  if (detail::tracing<T>(g, {&a})) {
    record_op<T>(g, {a}, out, [factor](const OpRecord<T>& r) {
      const auto& dy = r.output->grad;
      for (int64_t i = 0; i < r.output->numel(); ++i) {
        detail::accum(r.inputs[0], i, dy[i] * factor);
      }
    });
  }
  return out;
}

// Subgradient at exactly 0 is 0.
template <typename T>
TensorPtr<T> relu(Graph<T>* g, const TensorPtr<T>& a) {
  auto out = make_tensor<T>(a->shape);
  const int64_t n = a->numel();
  for (int64_t i = 0; i < n; ++i) out->data[i] = a->data[i] > T(0) ? a->data[i] : T(0);
  if (detail::tracing<T>(g, {&a})) {
    record_op<T>(g, {a}, out, [](const OpRecord<T>& r) {
      const auto& dy = r.output->grad;
      const auto& x = r.inputs[0]->data;
      for (int64_t i = 0; i < r.output->numel(); ++i) {
        if (x[i] > T(0)) detail::accum(r.inputs[0], i, dy[i]);
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> reshape(Graph<T>* g, const TensorPtr<T>& a, std::vector<int64_t> new_shape) {
  if (shape_numel<T>(new_shape) != a->numel()) {
    throw DimensionError("reshape: element count mismatch");
  }
  auto out = make_tensor<T>(new_shape);
  out->data = a->data;
  if (detail::tracing<T>(g, {&a})) {
    record_op<T>(g, {a}, out, [](const OpRecord<T>& r) {
      const auto& dy = r.output->grad;
      for (int64_t i = 0; i < r.output->numel(); ++i) detail::accum(r.inputs[0], i, dy[i]);
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sum_all(Graph<T>* g, const TensorPtr<T>& a) {
  auto out = make_tensor<T>({1});
  T s = 0;
  for (int64_t i = 0; i < a->numel(); ++i) s += a->data[i];
  out->data[0] = s;
  if (detail::tracing<T>(g, {&a})) {
    record_op<T>(g, {a}, out, [](const OpRecord<T>& r) {
      const T dy = r.output->grad[0];
      for (int64_t i = 0; i < r.inputs[0]->numel(); ++i) detail::accum(r.inputs[0], i, dy);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// conv2d: discrete cross-correlation, B x Cin x H x W -> B x Cout x H' x W'
// ---------------------------------------------------------------------------

namespace detail {

// Copies one input plane into a zero-padded buffer of (H+2p) x (W+2p).
template <typename T>
void fill_padded(const T* src, T* dst, int64_t h, int64_t w, int64_t pad) {
  const int64_t wp = w + 2 * pad;
  std::fill(dst, dst + (h + 2 * pad) * wp, T(0));
  for (int64_t r = 0; r < h; ++r) {
    std::memcpy(dst + (r + pad) * wp + pad, src + r * w, static_cast<size_t>(w) * sizeof(T));
  }
}

}  // namespace detail

template <typename T>
TensorPtr<T> conv2d(Graph<T>* g, const TensorPtr<T>& input, const TensorPtr<T>& weights,
                    const TensorPtr<T>& bias, int64_t stride, int64_t padding, int threads = 1) {
  if (input->shape.size() != 4 || weights->shape.size() != 4) {
    throw DimensionError("conv2d: input and weights must be rank-4");
  }
  if (stride < 1) throw DimensionError("conv2d: stride must be positive");
  if (padding < 0) throw DimensionError("conv2d: padding must be non-negative");
  const int64_t batch = input->shape[0], cin = input->shape[1];
  const int64_t h = input->shape[2], w = input->shape[3];
  const int64_t cout = weights->shape[0], k = weights->shape[2];
  if (weights->shape[1] != cin) {
    throw DimensionError("conv2d: weight C_in " + std::to_string(weights->shape[1]) +
                         " does not match input C_in " + std::to_string(cin));
  }
  if (weights->shape[3] != k) throw DimensionError("conv2d: kernel must be square");
  if (bias->shape != std::vector<int64_t>{cout}) {
    throw DimensionError("conv2d: bias must have C_out entries");
  }
  if (k > h + 2 * padding || k > w + 2 * padding) {
    throw DimensionError("conv2d: kernel exceeds padded spatial extent");
  }
  const int64_t ho = (h + 2 * padding - k) / stride + 1;
  const int64_t wo = (w + 2 * padding - k) / stride + 1;
  const int64_t hp = h + 2 * padding, wp = w + 2 * padding;

  auto out = make_tensor<T>({batch, cout, ho, wo});
  const T* in_d = input->data.data();
  const T* w_d = weights->data.data();
  const T* b_d = bias->data.data();
  T* out_d = out->data.data();

  parallel_for(batch, threads, [&](int64_t b0, int64_t b1) {
    std::vector<T> pad(static_cast<size_t>(hp * wp));
    for (int64_t b = b0; b < b1; ++b) {
      T* ob = out_d + b * cout * ho * wo;
      for (int64_t co = 0; co < cout; ++co) {
        T* plane = ob + co * ho * wo;
        std::fill(plane, plane + ho * wo, b_d[co]);
      }
      for (int64_t ci = 0; ci < cin; ++ci) {
        detail::fill_padded(in_d + (b * cin + ci) * h * w, pad.data(), h, w, padding);
        for (int64_t co = 0; co < cout; ++co) {
          T* plane = ob + co * ho * wo;
          const T* wk = w_d + (co * cin + ci) * k * k;
          for (int64_t kh = 0; kh < k; ++kh) {
            for (int64_t kw = 0; kw < k; ++kw) {
              const T wv = wk[kh * k + kw];
              for (int64_t r = 0; r < ho; ++r) {
                const T* src = pad.data() + (r * stride + kh) * wp + kw;
                T* dst = plane + r * wo;
                if (stride == 1) {
                  for (int64_t c = 0; c < wo; ++c) dst[c] += wv * src[c];
                } else {
                  for (int64_t c = 0; c < wo; ++c) dst[c] += wv * src[c * stride];
                }
              }
            }
          }
        }
      }
    }
  });

  if (detail::tracing<T>(g, {&input, &weights, &bias})) {
    record_op<T>(g, {input, weights, bias}, out,
                 [stride, padding](const OpRecord<T>& r) {
      const auto& input = r.inputs[0];
      const auto& weights = r.inputs[1];
      const auto& bias = r.inputs[2];
      const int64_t batch = input->shape[0], cin = input->shape[1];
      const int64_t h = input->shape[2], w = input->shape[3];
      const int64_t cout = weights->shape[0], k = weights->shape[2];
      const int64_t ho = r.output->shape[2], wo = r.output->shape[3];
      const int64_t hp = h + 2 * padding, wp = w + 2 * padding;
      const T* dy = r.output->grad.data();
      const T* in_d = input->data.data();
      const T* w_d = weights->data.data();

      if (bias->requires_grad) {
        for (int64_t b = 0; b < batch; ++b) {
          for (int64_t co = 0; co < cout; ++co) {
            const T* plane = dy + (b * cout + co) * ho * wo;
            T s = 0;
            for (int64_t i = 0; i < ho * wo; ++i) s += plane[i];
            bias->grad[co] += s;
          }
        }
      }
      const bool need_dw = weights->requires_grad;
      const bool need_dx = input->requires_grad;
      if (!need_dw && !need_dx) return;

      std::vector<T> pad(static_cast<size_t>(hp * wp));
      std::vector<T> dpad(static_cast<size_t>(hp * wp));
      // Per-column partial products for dW; summing at the end keeps the
      // hot loop elementwise so it vectorizes without FP reassociation.
      std::vector<T> acc(static_cast<size_t>(wo));
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t ci = 0; ci < cin; ++ci) {
          detail::fill_padded(in_d + (b * cin + ci) * h * w, pad.data(), h, w, padding);
          if (need_dx) std::fill(dpad.begin(), dpad.end(), T(0));
          for (int64_t co = 0; co < cout; ++co) {
            const T* dplane = dy + (b * cout + co) * ho * wo;
            const T* wk = w_d + (co * cin + ci) * k * k;
            for (int64_t kh = 0; kh < k; ++kh) {
              for (int64_t kw = 0; kw < k; ++kw) {
                const T wv = wk[kh * k + kw];
                if (need_dw) std::fill(acc.begin(), acc.end(), T(0));
                for (int64_t r = 0; r < ho; ++r) {
                  const T* __restrict drow = dplane + r * wo;
                  const int64_t base = (r * stride + kh) * wp + kw;
                  if (stride == 1) {
                    if (need_dw && need_dx) {
                      const T* __restrict prow = pad.data() + base;
                      T* __restrict dprow = dpad.data() + base;
                      T* __restrict ac = acc.data();
                      for (int64_t c = 0; c < wo; ++c) {
                        const T d = drow[c];
                        ac[c] += d * prow[c];
                        dprow[c] += d * wv;
                      }
                    } else if (need_dw) {
                      const T* __restrict prow = pad.data() + base;
                      T* __restrict ac = acc.data();
                      for (int64_t c = 0; c < wo; ++c) ac[c] += drow[c] * prow[c];
                    } else {
                      T* __restrict dprow = dpad.data() + base;
                      for (int64_t c = 0; c < wo; ++c) dprow[c] += drow[c] * wv;
                    }
                  } else {
                    const T* prow = pad.data() + base;
                    T* dprow = dpad.data() + base;
                    for (int64_t c = 0; c < wo; ++c) {
                      if (need_dw) acc[c] += drow[c] * prow[c * stride];
                      if (need_dx) dprow[c * stride] += drow[c] * wv;
                    }
                  }
                }
                if (need_dw) {
                  T dw_acc = 0;
                  for (int64_t c = 0; c < wo; ++c) dw_acc += acc[c];
                  weights->grad[(co * cin + ci) * k * k + kh * k + kw] += dw_acc;
                }
              }
            }
          }
          if (need_dx) {
            T* dx = input->grad.data() + (b * cin + ci) * h * w;
            for (int64_t r = 0; r < h; ++r) {
              const T* src = dpad.data() + (r + padding) * wp + padding;
              T* dst = dx + r * w;
              for (int64_t c = 0; c < w; ++c) dst[c] += src[c];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch_norm2d
// ---------------------------------------------------------------------------

// Running statistics live outside the tape (requires_grad stays false); train
// mode mutates them in place via an exponential moving average using the
// population-variance convention.
template <typename T>
TensorPtr<T> batch_norm2d(Graph<T>* g, const TensorPtr<T>& input, const TensorPtr<T>& gamma,
                          const TensorPtr<T>& beta, const TensorPtr<T>& running_mean,
                          const TensorPtr<T>& running_var, bool training, T momentum = T(0.1),
                          T eps = T(1e-5)) {
  if (input->shape.size() != 4) throw DimensionError("batch_norm2d: input must be rank-4");
  const int64_t batch = input->shape[0], ch = input->shape[1];
  const int64_t h = input->shape[2], w = input->shape[3];
  if (gamma->shape != std::vector<int64_t>{ch} || beta->shape != std::vector<int64_t>{ch}) {
    throw DimensionError("batch_norm2d: gamma/beta must have C entries");
  }
  if (running_mean->shape != std::vector<int64_t>{ch} ||
      running_var->shape != std::vector<int64_t>{ch}) {
    throw DimensionError("batch_norm2d: running stats have wrong channel count");
  }
  const int64_t m = batch * h * w;
  if (training && m < 2) {
    throw DegenerateError("batch_norm2d: train mode needs B*H*W >= 2, got " + std::to_string(m));
  }

  std::vector<T> mean(static_cast<size_t>(ch)), invstd(static_cast<size_t>(ch));
  const int64_t plane = h * w;
  const T* in_d = input->data.data();
  if (training) {
    for (int64_t c = 0; c < ch; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int64_t b = 0; b < batch; ++b) {
        const T* p = in_d + (b * ch + c) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          s += p[i];
          s2 += static_cast<double>(p[i]) * p[i];
        }
      }
      const double mu = s / static_cast<double>(m);
      const double var = std::max(0.0, s2 / static_cast<double>(m) - mu * mu);
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      running_mean->data[c] =
          (T(1) - momentum) * running_mean->data[c] + momentum * static_cast<T>(mu);
      running_var->data[c] =
          (T(1) - momentum) * running_var->data[c] + momentum * static_cast<T>(var);
    }
  } else {
    for (int64_t c = 0; c < ch; ++c) {
      mean[c] = running_mean->data[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var->data[c]) +
                                                 static_cast<double>(eps)));
    }
  }

  auto out = make_tensor<T>(input->shape);
  T* out_d = out->data.data();
  const T* g_d = gamma->data.data();
  const T* b_d = beta->data.data();
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t c = 0; c < ch; ++c) {
      const T* src = in_d + (b * ch + c) * plane;
      T* dst = out_d + (b * ch + c) * plane;
      const T mu = mean[c], is = invstd[c], ga = g_d[c], be = b_d[c];
      for (int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) * is * ga + be;
    }
  }

  if (detail::tracing<T>(g, {&input, &gamma, &beta})) {
    record_op<T>(g, {input, gamma, beta}, out,
                 [mean, invstd, training, m, plane, batch, ch](const OpRecord<T>& r) {
      const auto& input = r.inputs[0];
      const auto& gamma = r.inputs[1];
      const auto& beta = r.inputs[2];
      const T* dy = r.output->grad.data();
      const T* in_d = input->data.data();
      for (int64_t c = 0; c < ch; ++c) {
        const T mu = mean[c], is = invstd[c];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
          const T* dyr = dy + (b * ch + c) * plane;
          const T* xr = in_d + (b * ch + c) * plane;
          for (int64_t i = 0; i < plane; ++i) {
            sum_dy += dyr[i];
            sum_dy_xhat += static_cast<double>(dyr[i]) * ((xr[i] - mu) * is);
          }
        }
        if (gamma->requires_grad) gamma->grad[c] += static_cast<T>(sum_dy_xhat);
        if (beta->requires_grad) beta->grad[c] += static_cast<T>(sum_dy);
        if (input->requires_grad) {
          const T ga = gamma->data[c];
          if (training) {
            const T k1 = static_cast<T>(sum_dy / static_cast<double>(m));
            const T k2 = static_cast<T>(sum_dy_xhat / static_cast<double>(m));
            for (int64_t b = 0; b < batch; ++b) {
              const T* dyr = dy + (b * ch + c) * plane;
              const T* xr = in_d + (b * ch + c) * plane;
              T* dx = input->grad.data() + (b * ch + c) * plane;
              for (int64_t i = 0; i < plane; ++i) {
                const T xhat = (xr[i] - mu) * is;
                dx[i] += ga * is * (dyr[i] - k1 - xhat * k2);
              }
            }
          } else {
            for (int64_t b = 0; b < batch; ++b) {
              const T* dyr = dy + (b * ch + c) * plane;
              T* dx = input->grad.data() + (b * ch + c) * plane;
              for (int64_t i = 0; i < plane; ++i) dx[i] += ga * is * dyr[i];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// adaptive_avg_pool2d: B x C x H x W -> B x C x 1 x 1, any H and W
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> adaptive_avg_pool2d(Graph<T>* g, const TensorPtr<T>& input) {
  if (input->shape.size() != 4) throw DimensionError("adaptive_avg_pool2d: input must be rank-4");
  const int64_t batch = input->shape[0], ch = input->shape[1];
  const int64_t h = input->shape[2], w = input->shape[3];
  const int64_t plane = h * w;
  auto out = make_tensor<T>({batch, ch, 1, 1});
  for (int64_t bc = 0; bc < batch * ch; ++bc) {
    const T* src = input->data.data() + bc * plane;
    double s = 0.0;
    for (int64_t i = 0; i < plane; ++i) s += src[i];
    out->data[bc] = static_cast<T>(s / static_cast<double>(plane));
  }
  if (detail::tracing<T>(g, {&input})) {
    record_op<T>(g, {input}, out, [plane](const OpRecord<T>& r) {
      const auto& input = r.inputs[0];
      const int64_t n = r.output->numel();
      for (int64_t bc = 0; bc < n; ++bc) {
        const T d = r.output->grad[bc] / static_cast<T>(plane);
        T* dst = input->grad.data() + bc * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] += d;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear: affine map over the last axis, ... x Din -> ... x Dout
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> linear(Graph<T>* g, const TensorPtr<T>& input, const TensorPtr<T>& weights,
                    const TensorPtr<T>& bias, int threads = 1) {
  if (weights->shape.size() != 2) throw DimensionError("linear: weights must be rank-2");
  const int64_t dout = weights->shape[0], din = weights->shape[1];
  if (input->shape.empty() || input->shape.back() != din) {
    throw DimensionError("linear: input last extent " +
                         std::to_string(input->shape.empty() ? 0 : input->shape.back()) +
                         " does not match D_in " + std::to_string(din));
  }
  if (bias->shape != std::vector<int64_t>{dout}) {
    throw DimensionError("linear: bias must have D_out entries");
  }
  const int64_t rows = input->numel() / din;
  std::vector<int64_t> out_shape = input->shape;
  out_shape.back() = dout;
  auto out = make_tensor<T>(out_shape);

  const T* x = input->data.data();
  const T* w = weights->data.data();
  const T* b = bias->data.data();
  T* y = out->data.data();
  parallel_for(rows, threads, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const T* xr = x + r * din;
      T* yr = y + r * dout;
      for (int64_t o = 0; o < dout; ++o) {
        const T* wr = w + o * din;
        T acc = b[o];
        for (int64_t i = 0; i < din; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
  });

  if (detail::tracing<T>(g, {&input, &weights, &bias})) {
    record_op<T>(g, {input, weights, bias}, out, [rows, din, dout](const OpRecord<T>& r) {
      const auto& input = r.inputs[0];
      const auto& weights = r.inputs[1];
      const auto& bias = r.inputs[2];
      const T* dy = r.output->grad.data();
      const T* x = input->data.data();
      const T* w = weights->data.data();
      for (int64_t row = 0; row < rows; ++row) {
        const T* dyr = dy + row * dout;
        const T* xr = x + row * din;
        if (input->requires_grad) {
          T* dxr = input->grad.data() + row * din;
          for (int64_t o = 0; o < dout; ++o) {
            const T d = dyr[o];
            const T* wr = w + o * din;
            for (int64_t i = 0; i < din; ++i) dxr[i] += d * wr[i];
          }
        }
        if (weights->requires_grad) {
          for (int64_t o = 0; o < dout; ++o) {
            const T d = dyr[o];
            T* dwr = weights->grad.data() + o * din;
            for (int64_t i = 0; i < din; ++i) dwr[i] += d * xr[i];
          }
        }
        if (bias->requires_grad) {
          for (int64_t o = 0; o < dout; ++o) bias->grad[o] += dyr[o];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// layer_norm over the last axis
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> layer_norm(Graph<T>* g, const TensorPtr<T>& input, const TensorPtr<T>& gamma,
                        const TensorPtr<T>& beta, T eps = T(1e-5)) {
  if (input->shape.empty()) throw DimensionError("layer_norm: input must have rank >= 1");
  const int64_t d = input->shape.back();
  if (d < 2) throw DimensionError("layer_norm: last extent must be >= 2");
  if (gamma->shape != std::vector<int64_t>{d} || beta->shape != std::vector<int64_t>{d}) {
    throw DimensionError("layer_norm: gamma/beta must have D entries");
  }
  const int64_t rows = input->numel() / d;
  auto out = make_tensor<T>(input->shape);
  std::vector<T> mean(static_cast<size_t>(rows)), invstd(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = input->data.data() + r * d;
    double s = 0.0, s2 = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      s += x[i];
      s2 += static_cast<double>(x[i]) * x[i];
    }
    const double mu = s / static_cast<double>(d);
    const double var = std::max(0.0, s2 / static_cast<double>(d) - mu * mu);
    mean[r] = static_cast<T>(mu);
    invstd[r] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    T* y = out->data.data() + r * d;
    for (int64_t i = 0; i < d; ++i) {
      y[i] = (x[i] - mean[r]) * invstd[r] * gamma->data[i] + beta->data[i];
    }
  }
  if (detail::tracing<T>(g, {&input, &gamma, &beta})) {
    record_op<T>(g, {input, gamma, beta}, out,
                 [rows, d, mean, invstd](const OpRecord<T>& r) {
      const auto& input = r.inputs[0];
      const auto& gamma = r.inputs[1];
      const auto& beta = r.inputs[2];
      const T* dy = r.output->grad.data();
      const T* x = input->data.data();
      for (int64_t row = 0; row < rows; ++row) {
        const T mu = mean[row], is = invstd[row];
        const T* dyr = dy + row * d;
        const T* xr = x + row * d;
        double sum_dg = 0.0, sum_dg_xhat = 0.0;
        for (int64_t i = 0; i < d; ++i) {
          const T xhat = (xr[i] - mu) * is;
          const T dg = dyr[i] * gamma->data[i];
          sum_dg += dg;
          sum_dg_xhat += static_cast<double>(dg) * xhat;
          if (gamma->requires_grad) gamma->grad[i] += dyr[i] * xhat;
          if (beta->requires_grad) beta->grad[i] += dyr[i];
        }
        if (input->requires_grad) {
          const T k1 = static_cast<T>(sum_dg / static_cast<double>(d));
          const T k2 = static_cast<T>(sum_dg_xhat / static_cast<double>(d));
          T* dx = input->grad.data() + row * d;
          for (int64_t i = 0; i < d; ++i) {
            const T xhat = (xr[i] - mu) * is;
            dx[i] += is * (dyr[i] * gamma->data[i] - k1 - xhat * k2);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax over the last axis (max-subtracted)
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> softmax(Graph<T>* g, const TensorPtr<T>& input) {
  if (input->shape.empty()) throw DimensionError("softmax: input must have rank >= 1");
  const int64_t n = input->shape.back();
  const int64_t rows = input->numel() / n;
  auto out = make_tensor<T>(input->shape);
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = input->data.data() + r * n;
    T* y = out->data.data() + r * n;
    T mx = x[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      y[i] = std::exp(x[i] - mx);
      z += y[i];
    }
    const T inv = static_cast<T>(1.0 / z);
    for (int64_t i = 0; i < n; ++i) y[i] *= inv;
  }
  if (detail::tracing<T>(g, {&input})) {
    record_op<T>(g, {input}, out, [rows, n](const OpRecord<T>& r) {
      const auto& input = r.inputs[0];
      const T* dy = r.output->grad.data();
      const T* s = r.output->data.data();
      for (int64_t row = 0; row < rows; ++row) {
        const T* dyr = dy + row * n;
        const T* sr = s + row * n;
        double dot = 0.0;
        for (int64_t i = 0; i < n; ++i) dot += static_cast<double>(dyr[i]) * sr[i];
        T* dx = input->grad.data() + row * n;
        for (int64_t i = 0; i < n; ++i) {
          dx[i] += sr[i] * (dyr[i] - static_cast<T>(dot));
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul: rank-2 a (MxK) times b (KxN), or a (MxK) times b^T with b (NxK)
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> matmul(Graph<T>* g, const TensorPtr<T>& a, const TensorPtr<T>& b,
                    bool transpose_b = false) {
  if (a->shape.size() != 2 || b->shape.size() != 2) {
    throw DimensionError("matmul: both operands must be rank-2");
  }
  const int64_t m = a->shape[0], k = a->shape[1];
  const int64_t bk = transpose_b ? b->shape[1] : b->shape[0];
  const int64_t n = transpose_b ? b->shape[0] : b->shape[1];
  if (bk != k) {
    throw DimensionError("matmul: inner extents differ (" + std::to_string(k) + " vs " +
                         std::to_string(bk) + ")");
  }
  auto out = make_tensor<T>({m, n});
  const T* ad = a->data.data();
  const T* bd = b->data.data();
  T* od = out->data.data();
  if (transpose_b) {
    // out[i][j] = dot(a_row_i, b_row_j)
    for (int64_t i = 0; i < m; ++i) {
      const T* ar = ad + i * k;
      T* orow = od + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const T* br = bd + j * k;
        T acc = 0;
        for (int64_t x = 0; x < k; ++x) acc += ar[x] * br[x];
        orow[j] = acc;
      }
    }
  } else {
    for (int64_t i = 0; i < m; ++i) {
      const T* ar = ad + i * k;
      T* orow = od + i * n;
      std::fill(orow, orow + n, T(0));
      for (int64_t x = 0; x < k; ++x) {
        const T av = ar[x];
        const T* br = bd + x * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * br[j];
      }
    }
  }
  if (detail::tracing<T>(g, {&a, &b})) {
    record_op<T>(g, {a, b}, out, [m, k, n, transpose_b](const OpRecord<T>& r) {
      const auto& a = r.inputs[0];
      const auto& b = r.inputs[1];
      const T* dy = r.output->grad.data();
      const T* ad = a->data.data();
      const T* bd = b->data.data();
      if (transpose_b) {
        // y = a b^T: da += dy b ; db += dy^T a
        if (a->requires_grad) {
          for (int64_t i = 0; i < m; ++i) {
            T* dar = a->grad.data() + i * k;
            const T* dyr = dy + i * n;
            for (int64_t j = 0; j < n; ++j) {
              const T d = dyr[j];
              const T* br = bd + j * k;
              for (int64_t x = 0; x < k; ++x) dar[x] += d * br[x];
            }
          }
        }
        if (b->requires_grad) {
          for (int64_t i = 0; i < m; ++i) {
            const T* dyr = dy + i * n;
            const T* ar = ad + i * k;
            for (int64_t j = 0; j < n; ++j) {
              const T d = dyr[j];
              T* dbr = b->grad.data() + j * k;
              for (int64_t x = 0; x < k; ++x) dbr[x] += d * ar[x];
            }
          }
        }
      } else {
        // y = a b: da += dy b^T ; db += a^T dy
        if (a->requires_grad) {
          for (int64_t i = 0; i < m; ++i) {
            const T* dyr = dy + i * n;
            T* dar = a->grad.data() + i * k;
            for (int64_t x = 0; x < k; ++x) {
              const T* br = bd + x * n;
              T acc = 0;
              for (int64_t j = 0; j < n; ++j) acc += dyr[j] * br[j];
              dar[x] += acc;
            }
          }
        }
        if (b->requires_grad) {
          for (int64_t i = 0; i < m; ++i) {
            const T* ar = ad + i * k;
            const T* dyr = dy + i * n;
            for (int64_t x = 0; x < k; ++x) {
              const T av = ar[x];
              T* dbr = b->grad.data() + x * n;
              for (int64_t j = 0; j < n; ++j) dbr[j] += av * dyr[j];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// slicing / concatenation
// ---------------------------------------------------------------------------

// Rows along axis 0; the row size is the product of the remaining extents.
template <typename T>
TensorPtr<T> slice_rows(Graph<T>* g, const TensorPtr<T>& a, int64_t first, int64_t count) {
  if (a->shape.empty()) throw DimensionError("slice_rows: input must have rank >= 1");
  const int64_t total = a->shape[0];
  if (first < 0 || count < 1 || first + count > total) {
    throw DimensionError("slice_rows: range out of bounds");
  }
  const int64_t row = a->numel() / total;
  std::vector<int64_t> shape = a->shape;
  shape[0] = count;
  auto out = make_tensor<T>(shape);
  std::memcpy(out->data.data(), a->data.data() + first * row,
              static_cast<size_t>(count * row) * sizeof(T));
  if (detail::tracing<T>(g, {&a})) {
    record_op<T>(g, {a}, out, [first, count, row](const OpRecord<T>& r) {
      const T* dy = r.output->grad.data();
      T* dst = r.inputs[0]->grad.data() + first * row;
      for (int64_t i = 0; i < count * row; ++i) dst[i] += dy[i];
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> concat_rows(Graph<T>* g, const std::vector<TensorPtr<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  std::vector<int64_t> shape = parts[0]->shape;
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p->shape.size() != shape.size()) throw DimensionError("concat_rows: rank mismatch");
    for (size_t i = 1; i < shape.size(); ++i) {
      if (p->shape[i] != shape[i]) throw DimensionError("concat_rows: trailing extents differ");
    }
    total += p->shape[0];
  }
  shape[0] = total;
  auto out = make_tensor<T>(shape);
  int64_t off = 0;
  for (const auto& p : parts) {
    std::memcpy(out->data.data() + off, p->data.data(),
                static_cast<size_t>(p->numel()) * sizeof(T));
    off += p->numel();
  }
  bool any = false;
  for (const auto& p : parts) any = any || p->requires_grad;
  if (g && any) {
    record_op<T>(g, parts, out, [](const OpRecord<T>& r) {
      const T* dy = r.output->grad.data();
      int64_t off = 0;
      for (const auto& p : r.inputs) {
        if (p->requires_grad) {
          for (int64_t i = 0; i < p->numel(); ++i) p->grad[i] += dy[off + i];
        }
        off += p->numel();
      }
    });
  }
  return out;
}

// Rank-2 column slice, used to split attention heads.
template <typename T>
TensorPtr<T> slice_cols(Graph<T>* g, const TensorPtr<T>& a, int64_t first, int64_t count) {
  if (a->shape.size() != 2) throw DimensionError("slice_cols: input must be rank-2");
  const int64_t rows = a->shape[0], cols = a->shape[1];
  if (first < 0 || count < 1 || first + count > cols) {
    throw DimensionError("slice_cols: range out of bounds");
  }
  auto out = make_tensor<T>({rows, count});
  for (int64_t r = 0; r < rows; ++r) {
    std::memcpy(out->data.data() + r * count, a->data.data() + r * cols + first,
                static_cast<size_t>(count) * sizeof(T));
  }
  if (detail::tracing<T>(g, {&a})) {
    record_op<T>(g, {a}, out, [first, count, rows, cols](const OpRecord<T>& r) {
      const T* dy = r.output->grad.data();
      T* dst = r.inputs[0]->grad.data();
      for (int64_t row = 0; row < rows; ++row) {
        for (int64_t c = 0; c < count; ++c) {
          dst[row * cols + first + c] += dy[row * count + c];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> concat_cols(Graph<T>* g, const std::vector<TensorPtr<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int64_t rows = parts[0]->shape[0];
  int64_t cols = 0;
  for (const auto& p : parts) {
    if (p->shape.size() != 2 || p->shape[0] != rows) {
      throw DimensionError("concat_cols: inputs must be rank-2 with equal row counts");
    }
    cols += p->shape[1];
  }
  auto out = make_tensor<T>({rows, cols});
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t pc = p->shape[1];
    for (int64_t r = 0; r < rows; ++r) {
      std::memcpy(out->data.data() + r * cols + off, p->data.data() + r * pc,
                  static_cast<size_t>(pc) * sizeof(T));
    }
    off += pc;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p->requires_grad;
  if (g && any) {
    record_op<T>(g, parts, out, [rows, cols](const OpRecord<T>& r) {
      const T* dy = r.output->grad.data();
      int64_t off = 0;
      for (const auto& p : r.inputs) {
        const int64_t pc = p->shape[1];
        if (p->requires_grad) {
          for (int64_t row = 0; row < rows; ++row) {
            for (int64_t c = 0; c < pc; ++c) {
              p->grad[row * pc + c] += dy[row * cols + off + c];
            }
          }
        }
        off += pc;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// mse_loss: mean of squared differences over all elements -> scalar
// ---------------------------------------------------------------------------

template <typename T>
TensorPtr<T> mse_loss(Graph<T>* g, const TensorPtr<T>& pred, const TensorPtr<T>& target) {
  if (pred->shape != target->shape) {
    throw DimensionError("mse_loss: shape mismatch " + shape_str(*pred) + " vs " +
                         shape_str(*target));
  }
  const int64_t n = pred->numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred->data[i]) - target->data[i];
    acc += d * d;
  }
  auto out = make_tensor<T>({1});
  out->data[0] = static_cast<T>(acc / static_cast<double>(n));
  if (detail::tracing<T>(g, {&pred, &target})) {
    record_op<T>(g, {pred, target}, out, [n](const OpRecord<T>& r) {
      const T dy = r.output->grad[0];
      const auto& pred = r.inputs[0];
      const auto& target = r.inputs[1];
      const T c = dy * T(2) / static_cast<T>(n);
      for (int64_t i = 0; i < n; ++i) {
        const T d = pred->data[i] - target->data[i];
        if (pred->requires_grad) pred->grad[i] += c * d;
        if (target->requires_grad) target->grad[i] -= c * d;
      }
    });
  }
  return out;
}

}  // namespace wmt
