#pragma once

#include <functional>
#include <span>

#include "normpert/tensor.hpp"

namespace normpert {

// Layer primitives for the staged classifier. Feature maps are N x C x H x W.
// All ops throw std::invalid_argument on shape mismatch.

/// Cross-correlation of x [B,C,H,W] with w [K,C,kh,kw] plus bias b [K].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride = 1, std::size_t pad = 0);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// 2x2 window, stride 2. Spatial extents must be even.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x);

/// [B,C,H,W] -> [B,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// x [B,D], w [K,D], b [K] -> [B,K]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

/// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product of equally shaped tensors.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> square(const Tensor<T>& x);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element.
/// f must be deterministic; any noise it uses has to be frozen by the caller.
Tensor<double> finite_difference_grad(const std::function<double(const Tensor<double>&)>& f,
                                      const Tensor<double>& x, double h = 1e-6);

/// Worst relative error between analytic and numeric gradients. Elements
/// whose analytic magnitude is below small_cutoff are compared absolutely and
/// count as failures (error = +inf) only when they differ by more than abs_tol.
struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error_small = 0.0;
  std::size_t worst_index = 0;
  bool ok(double rel_tol = 1e-4, double abs_tol = 1e-7) const {
    return max_rel_error < rel_tol && max_abs_error_small < abs_tol;
  }
};

GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double small_cutoff = 1e-8);

}  // namespace normpert
