#pragma once

// Finite-difference verification of reverse-mode gradients.
//
// A check re-runs a user-supplied forward closure that builds a fresh graph
// and returns a scalar loss. Analytic gradients come from one backward pass;
// numeric gradients come from central differences on individual leaf
// coordinates. Relative error uses |a - n| / max(|a|, |n|, floor) so that
// near-zero gradients do not blow up the ratio.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wmt/tensor.hpp"
#include "wmt/util.hpp"

namespace wmt {

struct GradCheckOptions {
  double eps = 1e-5;          // central-difference step
  double tolerance = 1e-6;    // max acceptable relative error
  double floor = 1e-8;        // denominator floor in the relative error
  int64_t max_coords = 0;     // per-tensor coordinate budget; 0 checks all
  uint64_t seed = 17;         // coordinate sampling seed
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  std::string worst;  // "<leaf index>:<coordinate>" of the largest error
  bool ok(double tol) const { return max_rel_err <= tol; }
};

// `forward` must rebuild the computation from the current leaf values and
// return the scalar loss tensor together with the graph that produced it.
template <typename T>
struct ForwardRun {
  TensorPtr<T> loss;
  std::shared_ptr<Graph<T>> graph;
};

template <typename T>
GradCheckResult check_gradients(const std::function<ForwardRun<T>()>& forward,
                                const std::vector<TensorPtr<T>>& leaves,
                                const GradCheckOptions& opt = {}) {
  for (const auto& leaf : leaves) leaf->zero_grad();
  ForwardRun<T> run = forward();
  run.graph->backward(run.loss);

  std::vector<std::vector<T>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    leaf->ensure_grad();
    analytic.push_back(leaf->grad);
  }

  GradCheckResult res;
  Rng rng(opt.seed);
  for (size_t li = 0; li < leaves.size(); ++li) {
    const auto& leaf = leaves[li];
    const int64_t n = leaf->numel();
    std::vector<int64_t> coords;
    if (opt.max_coords > 0 && n > opt.max_coords) {
      // Sample distinct coordinates via a partial shuffle.
      std::vector<int64_t> all(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
      for (int64_t i = 0; i < opt.max_coords; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n - i)));
        std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(j)]);
      }
      coords.assign(all.begin(), all.begin() + opt.max_coords);
    } else {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    }

    for (int64_t c : coords) {
      const T saved = leaf->data[static_cast<size_t>(c)];
      leaf->data[static_cast<size_t>(c)] = saved + static_cast<T>(opt.eps);
      const double lp = static_cast<double>(forward().loss->data[0]);
      leaf->data[static_cast<size_t>(c)] = saved - static_cast<T>(opt.eps);
      const double lm = static_cast<double>(forward().loss->data[0]);
      leaf->data[static_cast<size_t>(c)] = saved;

      const double numeric = (lp - lm) / (2.0 * opt.eps);
      const double a = static_cast<double>(analytic[li][static_cast<size_t>(c)]);
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++res.coords_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = std::to_string(li) + ":" + std::to_string(c);
      }
    }
  }
  return res;
}

// Fills a tensor with values drawn uniformly from [lo, hi], resampling any
// coordinate that lands within `kink_margin` of zero. Keeping inputs away
// from ReLU kinks makes central differences a valid comparison.
template <typename T>
void fill_uniform_away_from_zero(const TensorPtr<T>& t, Rng& rng, T lo, T hi,
                                 T kink_margin = T(0)) {
  for (auto& v : t->data) {
    T x = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    if (kink_margin > T(0)) {
      int guard = 0;
      while (std::abs(x) < kink_margin && guard++ < 64) {
        x = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
      }
    }
    v = x;
  }
}

// Projects a non-scalar op output to a scalar with fixed random weights so
// every output coordinate influences the loss: loss = sum(out * w).
template <typename T>
TensorPtr<T> project_to_scalar(Graph<T>* g, const TensorPtr<T>& out,
                               const TensorPtr<T>& fixed_weights) {
  return sum_all(g, mul(g, out, fixed_weights));
}

}  // namespace wmt
