#include "normpert/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace normpert {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* arg) {
  require(s.size() == rank, std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                                ", got shape " + shape_str(s));
}

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t kernels, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

// Unfolds sample b of x into a (C*kh*kw) x (out_h*out_w) row-major block.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t pos = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * pos;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.height) &&
                                iw < static_cast<std::ptrdiff_t>(g.width);
            row[oh * g.out_w + ow] = inside ? plane[ih * static_cast<std::ptrdiff_t>(g.width) + iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t pos = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = dx + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * pos;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) continue;
            plane[ih * static_cast<std::ptrdiff_t>(g.width) + iw] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride,
                 std::size_t pad) {
  require_rank(x.shape(), 4, "conv2d", "input");
  require_rank(w.shape(), 4, "conv2d", "weight");
  require_rank(b.shape(), 1, "conv2d", "bias");
  require(stride >= 1, "conv2d: stride must be >= 1");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, pad, 0, 0};
  require(w.dim(1) == g.channels, "conv2d: weight expects " + std::to_string(w.dim(1)) +
                                      " input channels, input has " + std::to_string(g.channels));
  require(b.dim(0) == g.kernels, "conv2d: bias length " + std::to_string(b.dim(0)) +
                                     " does not match " + std::to_string(g.kernels) + " kernels");
  require(g.kh <= g.height + 2 * pad && g.kw <= g.width + 2 * pad,
          "conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " + shape_str(x.shape()));
  g.out_h = (g.height + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kw) / stride + 1;

  const std::size_t patch = g.patch();
  const std::size_t pos = g.positions();
  // Eigen only ever sees its own (aligned) matrices: with maps over arbitrary
  // heap addresses its vectorized kernels peel differently from run to run,
  // which changes rounding.
  auto wm = std::make_shared<const RowMat<T>>(Eigen::Map<const RowMat<T>>(w.data().data(), g.kernels, patch));
  auto cols = std::make_shared<std::vector<RowMat<T>>>(g.batch);
  std::vector<T> out(g.batch * g.kernels * pos);
  const T* xd = x.data().data();
  const T* bd = b.data().data();
  RowMat<T> ym(g.kernels, pos);
  for (std::size_t n = 0; n < g.batch; ++n) {
    RowMat<T>& col = (*cols)[n];
    col.resize(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(pos));
    im2col(g, xd + n * g.channels * g.height * g.width, col.data());
    ym.noalias() = *wm * col;
    T* dst = out.data() + n * g.kernels * pos;
    for (std::size_t k = 0; k < g.kernels; ++k) {
      for (std::size_t i = 0; i < pos; ++i) dst[k * pos + i] = ym(k, i) + bd[k];
    }
  }

  return make_result<T>({g.batch, g.kernels, g.out_h, g.out_w}, std::move(out), {x, w, b},
                        [g, cols, wm](detail::Node<T>& self) {
                          const std::size_t patch = g.patch();
                          const std::size_t pos = g.positions();
                          T* dx = detail::parent_grad(self, 0);
                          T* dw = detail::parent_grad(self, 1);
                          T* db = detail::parent_grad(self, 2);
                          RowMat<T> dcol(patch, pos), dwn(g.kernels, patch);
                          for (std::size_t n = 0; n < g.batch; ++n) {
                            const T* gp = self.grad.data() + n * g.kernels * pos;
                            const RowMat<T> gy = Eigen::Map<const RowMat<T>>(gp, g.kernels, pos);
                            if (dw) {
                              dwn.noalias() = gy * (*cols)[n].transpose();
                              const T* src = dwn.data();
                              for (std::size_t i = 0; i < g.kernels * patch; ++i) dw[i] += src[i];
                            }
                            if (db) {
                              for (std::size_t k = 0; k < g.kernels; ++k) {
                                T acc = 0;
                                for (std::size_t i = 0; i < pos; ++i) acc += gp[k * pos + i];
                                db[k] += acc;
                              }
                            }
                            if (dx) {
                              dcol.noalias() = wm->transpose() * gy;
                              col2im_add(g, dcol.data(), dx + n * g.channels * g.height * g.width);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] > T(0) ? xd[i] : T(0);
  return make_result<T>(x.shape(), std::move(out), {x}, [x](detail::Node<T>& self) {
    T* dx = detail::parent_grad(self, 0);
    auto xd = x.data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
      if (xd[i] > T(0)) dx[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "maxpool2", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "maxpool2: spatial extents must be even, got " + shape_str(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  std::vector<T> out(B * C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto xd = x.data();
  for (std::size_t plane = 0; plane < B * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow) {
        std::size_t best = base + (2 * oh) * W + 2 * ow;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + (2 * oh + di) * W + 2 * ow + dj;
            if (xd[idx] > xd[best]) best = idx;
          }
        }
        const std::size_t o = plane * Ho * Wo + oh * Wo + ow;
        out[o] = xd[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result<T>({B, C, Ho, Wo}, std::move(out), {x}, [argmax](detail::Node<T>& self) {
    T* dx = detail::parent_grad(self, 0);
    for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += self.grad[o];
  });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool", "input");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<T> out(B * C);
  auto xd = x.data();
  for (std::size_t p = 0; p < B * C; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < HW; ++i) acc += xd[p * HW + i];
    out[p] = acc / static_cast<T>(HW);
  }
  return make_result<T>({B, C}, std::move(out), {x}, [HW](detail::Node<T>& self) {
    T* dx = detail::parent_grad(self, 0);
    for (std::size_t p = 0; p < self.grad.size(); ++p) {
      const T g = self.grad[p] / static_cast<T>(HW);
      for (std::size_t i = 0; i < HW; ++i) dx[p * HW + i] += g;
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(x.shape(), 2, "linear", "input");
  require_rank(w.shape(), 2, "linear", "weight");
  require_rank(b.shape(), 1, "linear", "bias");
  const std::size_t B = x.dim(0), D = x.dim(1), K = w.dim(0);
  require(w.dim(1) == D, "linear: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  require(b.dim(0) == K, "linear: bias length does not match output features");
  auto xm = std::make_shared<const RowMat<T>>(Eigen::Map<const RowMat<T>>(x.data().data(), B, D));
  auto wm = std::make_shared<const RowMat<T>>(Eigen::Map<const RowMat<T>>(w.data().data(), K, D));
  const RowMat<T> ym = *xm * wm->transpose();
  std::vector<T> out(B * K);
  for (std::size_t n = 0; n < B; ++n) {
    for (std::size_t k = 0; k < K; ++k) out[n * K + k] = ym(n, k) + b.data()[k];
  }
  return make_result<T>({B, K}, std::move(out), {x, w, b}, [xm, wm, B, D, K](detail::Node<T>& self) {
    const RowMat<T> gy = Eigen::Map<const RowMat<T>>(self.grad.data(), B, K);
    auto accumulate = [](T* dst, const RowMat<T>& m) {
      const T* src = m.data();
      for (Eigen::Index i = 0; i < m.size(); ++i) dst[i] += src[i];
    };
    if (T* dx = detail::parent_grad(self, 0)) accumulate(dx, gy * *wm);
    if (T* dw = detail::parent_grad(self, 1)) accumulate(dw, gy.transpose() * *xm);
    if (T* db = detail::parent_grad(self, 2)) {
      for (std::size_t k = 0; k < K; ++k) {
        T acc = 0;
        for (std::size_t n = 0; n < B; ++n) acc += gy(n, k);
        db[k] += acc;
      }
    }
  });
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy", "logits");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  require(labels.size() == B, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                  " labels for batch of " + std::to_string(B));
  auto ld = logits.data();
  auto probs = std::make_shared<std::vector<T>>(B * K);
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t n = 0; n < B; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= K) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) + " outside [0," +
                                  std::to_string(K) + ")");
    }
    const T* row = ld.data() + n * K;
    const std::size_t top = static_cast<std::size_t>(std::max_element(row, row + K) - row);
    const double m = row[top];
    // log-sum-exp as m + log1p(sum over non-max terms) keeps tiny losses accurate
    double rest = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (k != top) rest += std::exp(static_cast<double>(row[k]) - m);
    }
    const double lse = m + std::log1p(rest);
    total += lse - static_cast<double>(row[label]);
    for (std::size_t k = 0; k < K; ++k) (*probs)[n * K + k] = static_cast<T>(std::exp(row[k] - lse));
  }
  const T loss = static_cast<T>(total / static_cast<double>(B));
  check_finite<T>(std::span<const T>(&loss, 1), "softmax_cross_entropy");
  return make_result<T>({1}, {loss}, {logits}, [probs, targets, B, K](detail::Node<T>& self) {
    T* dl = detail::parent_grad(self, 0);
    const T g = self.grad[0] / static_cast<T>(B);
    for (std::size_t n = 0; n < B; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        const T onehot = static_cast<int>(k) == (*targets)[n] ? T(1) : T(0);
        dl[n * K + k] += g * ((*probs)[n * K + k] - onehot);
      }
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return make_result<T>({1}, {acc}, {x}, [](detail::Node<T>& self) {
    T* dx = detail::parent_grad(self, 0);
    const auto n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* d = detail::parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [a, b](detail::Node<T>& self) {
    if (T* da = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] * b.data()[i];
    }
    if (T* db = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) db[i] += self.grad[i] * a.data()[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return make_result<T>(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
    T* dx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return mul(x, x);
}

Tensor<double> finite_difference_grad(const std::function<double(const Tensor<double>&)>& f,
                                      const Tensor<double>& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_grad: step must be positive");
  Tensor<double> probe = x.detach();
  std::vector<double> grad(x.numel());
  auto pd = probe.mutable_data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double orig = pd[i];
    pd[i] = orig + h;
    const double up = f(probe);
    pd[i] = orig - h;
    const double down = f(probe);
    pd[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor<double>(x.shape(), std::move(grad));
}

GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double small_cutoff) {
  require(analytic.size() == numeric.size(), "compare_gradients: length mismatch");
  GradCheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    if (std::abs(a) < small_cutoff) {
      r.max_abs_error_small = std::max(r.max_abs_error_small, std::abs(a - n));
      continue;
    }
    const double rel = std::abs(a - n) / std::max(std::abs(a), std::abs(n));
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = i;
    }
  }
  return r;
}

#define NORMPERT_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                            std::size_t);                                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> maxpool2(const Tensor<T>&);                                                 \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                          \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);              \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> square(const Tensor<T>&);

NORMPERT_INSTANTIATE_OPS(float)
NORMPERT_INSTANTIATE_OPS(double)

}  // namespace normpert
