#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advnet/gemm.hpp"
#include "advnet/rng.hpp"
#include "advnet/tensor.hpp"

namespace advnet {

enum class Mode { Train, Eval };

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = false;  // weight decay applies to conv/FC weights only
};

template <typename T>
void init_param(Param<T>& p, Shape shape, bool decay, const std::string& name) {
  p.name = name;
  p.value = Tensor<T>(shape);
  p.grad = Tensor<T>(std::move(shape));
  p.decay = decay;
}

/// Fan-in-scaled Gaussian init, std = sqrt(2/fan_in).
template <typename T>
void gaussian_init(Tensor<T>& t, std::int64_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.gaussian(0.0, std));
}

// ---------------------------------------------------------------------------
// im2col machinery shared by conv2d and deconv2d (deconv is the transpose map)
// ---------------------------------------------------------------------------

struct ConvGeom {
  int n, h, w, c;        // input NHWC
  int kh, kw, stride;
  int oh, ow;            // ceil(in/stride), "same" zero padding
  int pad_h0, pad_w0;    // leading pads (TF convention: extra pad goes last)

  std::int64_t rows() const { return static_cast<std::int64_t>(n) * oh * ow; }
  int cols() const { return kh * kw * c; }
};

inline ConvGeom make_conv_geom(const Shape& in, int d, int stride) {
  if (in.size() != 4) {
    throw DimensionError("conv2d: expected NHWC input, got " + shape_str(in));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  }
  ConvGeom g;
  g.n = in[0];
  g.h = in[1];
  g.w = in[2];
  g.c = in[3];
  g.kh = g.kw = d;
  g.stride = stride;
  g.oh = (g.h + stride - 1) / stride;
  g.ow = (g.w + stride - 1) / stride;
  const int pad_h = std::max((g.oh - 1) * stride + d - g.h, 0);
  const int pad_w = std::max((g.ow - 1) * stride + d - g.w, 0);
  g.pad_h0 = pad_h / 2;
  g.pad_w0 = pad_w / 2;
  return g;
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::int64_t in_row = static_cast<std::int64_t>(g.w) * g.c;
  const std::int64_t in_img = static_cast<std::int64_t>(g.h) * in_row;
  const int kwc = g.kw * g.c;
  std::int64_t r = 0;
  for (int n = 0; n < g.n; ++n) {
    const T* img = x + n * in_img;
    for (int oh = 0; oh < g.oh; ++oh) {
      const int ih0 = oh * g.stride - g.pad_h0;
      for (int ow = 0; ow < g.ow; ++ow, ++r) {
        const int iw0 = ow * g.stride - g.pad_w0;
        T* dst = col + r * g.cols();
        for (int kh = 0; kh < g.kh; ++kh) {
          const int ih = ih0 + kh;
          T* seg = dst + static_cast<std::int64_t>(kh) * kwc;
          if (ih < 0 || ih >= g.h) {
            std::memset(seg, 0, sizeof(T) * static_cast<std::size_t>(kwc));
            continue;
          }
          const T* src_row = img + ih * in_row;
          if (iw0 >= 0 && iw0 + g.kw <= g.w) {
            std::memcpy(seg, src_row + static_cast<std::int64_t>(iw0) * g.c,
                        sizeof(T) * static_cast<std::size_t>(kwc));
          } else {
            for (int kw = 0; kw < g.kw; ++kw) {
              const int iw = iw0 + kw;
              if (iw < 0 || iw >= g.w) {
                std::memset(seg + kw * g.c, 0, sizeof(T) * static_cast<std::size_t>(g.c));
              } else {
                std::memcpy(seg + kw * g.c, src_row + static_cast<std::int64_t>(iw) * g.c,
                            sizeof(T) * static_cast<std::size_t>(g.c));
              }
            }
          }
        }
      }
    }
  }
}

/// Scatter-add transpose of im2col; x must be zero-initialized by the caller.
template <typename T>
void col2im(const T* col, const ConvGeom& g, T* x) {
  const std::int64_t in_row = static_cast<std::int64_t>(g.w) * g.c;
  const std::int64_t in_img = static_cast<std::int64_t>(g.h) * in_row;
  std::int64_t r = 0;
  for (int n = 0; n < g.n; ++n) {
    T* img = x + n * in_img;
    for (int oh = 0; oh < g.oh; ++oh) {
      const int ih0 = oh * g.stride - g.pad_h0;
      for (int ow = 0; ow < g.ow; ++ow, ++r) {
        const int iw0 = ow * g.stride - g.pad_w0;
        const T* src = col + r * g.cols();
        for (int kh = 0; kh < g.kh; ++kh) {
          const int ih = ih0 + kh;
          if (ih < 0 || ih >= g.h) continue;
          T* dst_row = img + ih * in_row;
          for (int kw = 0; kw < g.kw; ++kw) {
            const int iw = iw0 + kw;
            if (iw < 0 || iw >= g.w) continue;
            const T* s = src + (static_cast<std::int64_t>(kh) * g.kw + kw) * g.c;
            T* d = dst_row + static_cast<std::int64_t>(iw) * g.c;
            for (int c = 0; c < g.c; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Layer interface
// ---------------------------------------------------------------------------

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, bool bn_update) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect_params(std::vector<Param<T>*>& out) {}
  /// Non-trainable buffers that must persist in checkpoints (BN running stats).
  virtual void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) {}
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Layer<T>> clone() const = 0;

 protected:
  void mark_forward() { fwd_ready_ = true; }
  void require_forward(const char* who) {
    if (!fwd_ready_) {
      throw StateError(std::string(who) + ": backward called before forward");
    }
    fwd_ready_ = false;
  }
  bool fwd_ready_ = false;
};

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(const std::string& name, int in_c, int d, int stride, int out_c, Rng& rng,
         bool use_bias = true)
      : in_c_(in_c), d_(d), stride_(stride), out_c_(out_c), use_bias_(use_bias) {
    init_param(w_, Shape{d, d, in_c, out_c}, true, name + "/W");
    gaussian_init(w_.value, static_cast<std::int64_t>(d) * d * in_c, rng);
    if (use_bias_) init_param(b_, Shape{out_c}, false, name + "/b");
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    if (x.ndim() != 4 || x.dim(3) != in_c_) {
      throw DimensionError("conv2d: input " + shape_str(x.shape) +
                           " incompatible with filters " + shape_str(w_.value.shape));
    }
    geom_ = make_conv_geom(x.shape, d_, stride_);
    col_ = Tensor<T>(Shape{static_cast<int>(geom_.rows()), geom_.cols()});
    im2col(x.ptr(), geom_, col_.ptr());
    Tensor<T> y(Shape{geom_.n, geom_.oh, geom_.ow, out_c_});
    gemm(false, false, static_cast<int>(geom_.rows()), out_c_, geom_.cols(), T(1),
         col_.ptr(), geom_.cols(), w_.value.ptr(), out_c_, T(0), y.ptr(), out_c_);
    if (use_bias_) {
      T* p = y.ptr();
      for (std::int64_t r = 0; r < geom_.rows(); ++r, p += out_c_)
        for (int k = 0; k < out_c_; ++k) p[k] += b_.value[k];
    }
    this->mark_forward();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("conv2d");
    const std::int64_t m = geom_.rows();
    if (dy.size() != m * out_c_) {
      throw DimensionError("conv2d backward: unexpected gradient shape " +
                           shape_str(dy.shape));
    }
    // dW += col^T dy
    gemm(true, false, geom_.cols(), out_c_, static_cast<int>(m), T(1), col_.ptr(),
         geom_.cols(), dy.ptr(), out_c_, T(1), w_.grad.ptr(), out_c_);
    if (use_bias_) {
      const T* p = dy.ptr();
      for (std::int64_t r = 0; r < m; ++r, p += out_c_)
        for (int k = 0; k < out_c_; ++k) b_.grad[k] += p[k];
    }
    // dx = col2im(dy W^T)
    Tensor<T> dcol(Shape{static_cast<int>(m), geom_.cols()});
    gemm(false, true, static_cast<int>(m), geom_.cols(), out_c_, T(1), dy.ptr(),
         out_c_, w_.value.ptr(), out_c_, T(0), dcol.ptr(), geom_.cols());
    Tensor<T> dx(Shape{geom_.n, geom_.h, geom_.w, geom_.c});
    col2im(dcol.ptr(), geom_, dx.ptr());
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&w_);
    if (use_bias_) out.push_back(&b_);
  }

  std::string kind() const override { return "conv2d"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Conv2d>(*this);
  }

  Param<T>& weights() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  int in_c_, d_, stride_, out_c_;
  bool use_bias_;
  Param<T> w_, b_;
  ConvGeom geom_{};
  Tensor<T> col_;
};

// ---------------------------------------------------------------------------

/// Transposed convolution: forward is the backward-data map of a conv2d whose
/// input is this layer's output. Output spatial extent = input extent * stride.
template <typename T>
class Deconv2d final : public Layer<T> {
 public:
  Deconv2d(const std::string& name, int in_c, int d, int stride, int out_c, Rng& rng,
           bool use_bias = true)
      : in_c_(in_c), d_(d), stride_(stride), out_c_(out_c), use_bias_(use_bias) {
    // Filter layout matches the underlying conv: [d, d, out_c, in_c].
    init_param(w_, Shape{d, d, out_c, in_c}, true, name + "/W");
    gaussian_init(w_.value, static_cast<std::int64_t>(d) * d * in_c, rng);
    if (use_bias_) init_param(b_, Shape{out_c}, false, name + "/b");
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    if (x.ndim() != 4 || x.dim(3) != in_c_) {
      throw DimensionError("deconv2d: input " + shape_str(x.shape) +
                           " incompatible with filters " + shape_str(w_.value.shape));
    }
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    geom_ = make_conv_geom(Shape{n, h * stride_, w * stride_, out_c_}, d_, stride_);
    x_mat_ = x;  // kept for the weight gradient
    const std::int64_t m = geom_.rows();
    Tensor<T> dcol(Shape{static_cast<int>(m), geom_.cols()});
    gemm(false, true, static_cast<int>(m), geom_.cols(), in_c_, T(1), x.ptr(), in_c_,
         w_.value.ptr(), in_c_, T(0), dcol.ptr(), geom_.cols());
    Tensor<T> y(Shape{n, h * stride_, w * stride_, out_c_});
    col2im(dcol.ptr(), geom_, y.ptr());
    if (use_bias_) {
      T* p = y.ptr();
      const std::int64_t pix = y.size() / out_c_;
      for (std::int64_t r = 0; r < pix; ++r, p += out_c_)
        for (int k = 0; k < out_c_; ++k) p[k] += b_.value[k];
    }
    this->mark_forward();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("deconv2d");
    const std::int64_t m = geom_.rows();
    Tensor<T> col(Shape{static_cast<int>(m), geom_.cols()});
    im2col(dy.ptr(), geom_, col.ptr());
    // dW += col(dy)^T x
    gemm(true, false, geom_.cols(), in_c_, static_cast<int>(m), T(1), col.ptr(),
         geom_.cols(), x_mat_.ptr(), in_c_, T(1), w_.grad.ptr(), in_c_);
    if (use_bias_) {
      const T* p = dy.ptr();
      const std::int64_t pix = dy.size() / out_c_;
      for (std::int64_t r = 0; r < pix; ++r, p += out_c_)
        for (int k = 0; k < out_c_; ++k) b_.grad[k] += p[k];
    }
    // dx = col(dy) W
    Tensor<T> dx(x_mat_.shape);
    gemm(false, false, static_cast<int>(m), in_c_, geom_.cols(), T(1), col.ptr(),
         geom_.cols(), w_.value.ptr(), in_c_, T(0), dx.ptr(), in_c_);
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&w_);
    if (use_bias_) out.push_back(&b_);
  }

  std::string kind() const override { return "deconv2d"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Deconv2d>(*this);
  }

 private:
  int in_c_, d_, stride_, out_c_;
  bool use_bias_;
  Param<T> w_, b_;
  ConvGeom geom_{};
  Tensor<T> x_mat_;
};

// ---------------------------------------------------------------------------

template <typename T>
class FullyConnected final : public Layer<T> {
 public:
  FullyConnected(const std::string& name, int in_features, int out_features, Rng& rng)
      : in_(in_features), out_(out_features) {
    init_param(w_, Shape{in_features, out_features}, true, name + "/W");
    gaussian_init(w_.value, in_features, rng);
    init_param(b_, Shape{out_features}, false, name + "/b");
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    const int n = x.dim(0);
    if (x.size() != static_cast<std::int64_t>(n) * in_) {
      throw DimensionError("fc: input " + shape_str(x.shape) + " does not flatten to " +
                           std::to_string(in_) + " features");
    }
    in_shape_ = x.shape;
    x_ = x;
    Tensor<T> y(Shape{n, out_});
    gemm(false, false, n, out_, in_, T(1), x.ptr(), in_, w_.value.ptr(), out_, T(0),
         y.ptr(), out_);
    T* p = y.ptr();
    for (int r = 0; r < n; ++r, p += out_)
      for (int k = 0; k < out_; ++k) p[k] += b_.value[k];
    this->mark_forward();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("fc");
    const int n = in_shape_[0];
    gemm(true, false, in_, out_, n, T(1), x_.ptr(), in_, dy.ptr(), out_, T(1),
         w_.grad.ptr(), out_);
    const T* p = dy.ptr();
    for (int r = 0; r < n; ++r, p += out_)
      for (int k = 0; k < out_; ++k) b_.grad[k] += p[k];
    Tensor<T> dx(in_shape_);
    gemm(false, true, n, in_, out_, T(1), dy.ptr(), out_, w_.value.ptr(), out_, T(0),
         dx.ptr(), in_);
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

  std::string kind() const override { return "fully-connected"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<FullyConnected>(*this);
  }

  Param<T>& weights() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  int in_, out_;
  Param<T> w_, b_;
  Shape in_shape_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------

/// Per-channel batch normalization over N (and H, W for NHWC inputs).
/// Train mode uses mini-batch statistics; inference uses running averages
/// (momentum 0.99). bn_update=false freezes the running averages, so attack
/// generation with batch statistics does not drift the deployed model.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(const std::string& name, int channels) : c_(channels), name_(name) {
    init_param(gamma_, Shape{channels}, false, name + "/gamma");
    for (int i = 0; i < channels; ++i) gamma_.value[i] = T(1);
    init_param(beta_, Shape{channels}, false, name + "/beta");
    running_mean_ = Tensor<T>(Shape{channels});
    running_var_ = Tensor<T>::full(Shape{channels}, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, bool bn_update) override {
    if (x.dim(x.ndim() - 1) != c_) {
      throw DimensionError("batch-norm: " + std::to_string(c_) + " channels, input " +
                           shape_str(x.shape));
    }
    const std::int64_t rows = x.size() / c_;
    mode_ = mode;
    Tensor<T> y(x.shape);

    if (mode == Mode::Train) {
      std::vector<double> mean(static_cast<std::size_t>(c_), 0.0);
      std::vector<double> var(static_cast<std::size_t>(c_), 0.0);
      const T* p = x.ptr();
      for (std::int64_t r = 0; r < rows; ++r, p += c_)
        for (int k = 0; k < c_; ++k) mean[static_cast<std::size_t>(k)] += p[k];
      for (int k = 0; k < c_; ++k) mean[static_cast<std::size_t>(k)] /= static_cast<double>(rows);
      p = x.ptr();
      for (std::int64_t r = 0; r < rows; ++r, p += c_)
        for (int k = 0; k < c_; ++k) {
          const double d = p[k] - mean[static_cast<std::size_t>(k)];
          var[static_cast<std::size_t>(k)] += d * d;
        }
      inv_std_.assign(static_cast<std::size_t>(c_), T(0));
      for (int k = 0; k < c_; ++k) {
        var[static_cast<std::size_t>(k)] /= static_cast<double>(rows);
        inv_std_[static_cast<std::size_t>(k)] =
            static_cast<T>(1.0 / std::sqrt(var[static_cast<std::size_t>(k)] + kEps));
      }
      if (bn_update) {
        for (int k = 0; k < c_; ++k) {
          running_mean_[k] = static_cast<T>(kMomentum * running_mean_[k] +
                                            (1.0 - kMomentum) * mean[static_cast<std::size_t>(k)]);
          running_var_[k] = static_cast<T>(kMomentum * running_var_[k] +
                                           (1.0 - kMomentum) * var[static_cast<std::size_t>(k)]);
        }
      }
      xhat_ = Tensor<T>(x.shape);
      const T* xp = x.ptr();
      T* hp = xhat_.ptr();
      T* yp = y.ptr();
      for (std::int64_t r = 0; r < rows; ++r, xp += c_, hp += c_, yp += c_) {
        for (int k = 0; k < c_; ++k) {
          hp[k] = static_cast<T>((xp[k] - mean[static_cast<std::size_t>(k)]) *
                                 inv_std_[static_cast<std::size_t>(k)]);
          yp[k] = gamma_.value[k] * hp[k] + beta_.value[k];
        }
      }
    } else {
      inv_std_.assign(static_cast<std::size_t>(c_), T(0));
      for (int k = 0; k < c_; ++k)
        inv_std_[static_cast<std::size_t>(k)] =
            static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_[k]) + kEps));
      xhat_ = Tensor<T>(x.shape);
      const T* xp = x.ptr();
      T* hp = xhat_.ptr();
      T* yp = y.ptr();
      for (std::int64_t r = 0; r < rows; ++r, xp += c_, hp += c_, yp += c_) {
        for (int k = 0; k < c_; ++k) {
          hp[k] = (xp[k] - running_mean_[k]) * inv_std_[static_cast<std::size_t>(k)];
          yp[k] = gamma_.value[k] * hp[k] + beta_.value[k];
        }
      }
    }
    this->mark_forward();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("batch-norm");
    const std::int64_t rows = dy.size() / c_;
    Tensor<T> dx(dy.shape);

    // dgamma / dbeta are identical in both modes.
    {
      const T* dp = dy.ptr();
      const T* hp = xhat_.ptr();
      for (std::int64_t r = 0; r < rows; ++r, dp += c_, hp += c_)
        for (int k = 0; k < c_; ++k) {
          gamma_.grad[k] += dp[k] * hp[k];
          beta_.grad[k] += dp[k];
        }
    }

    if (mode_ == Mode::Train) {
      std::vector<double> sum_d(static_cast<std::size_t>(c_), 0.0);
      std::vector<double> sum_dh(static_cast<std::size_t>(c_), 0.0);
      const T* dp = dy.ptr();
      const T* hp = xhat_.ptr();
      for (std::int64_t r = 0; r < rows; ++r, dp += c_, hp += c_)
        for (int k = 0; k < c_; ++k) {
          sum_d[static_cast<std::size_t>(k)] += dp[k];
          sum_dh[static_cast<std::size_t>(k)] += static_cast<double>(dp[k]) * hp[k];
        }
      dp = dy.ptr();
      hp = xhat_.ptr();
      T* xp = dx.ptr();
      const double m = static_cast<double>(rows);
      for (std::int64_t r = 0; r < rows; ++r, dp += c_, hp += c_, xp += c_)
        for (int k = 0; k < c_; ++k) {
          const std::size_t ks = static_cast<std::size_t>(k);
          xp[k] = static_cast<T>(static_cast<double>(gamma_.value[k]) * inv_std_[ks] / m *
                                 (m * dp[k] - sum_d[ks] - hp[k] * sum_dh[ks]));
        }
    } else {
      const T* dp = dy.ptr();
      T* xp = dx.ptr();
      for (std::int64_t r = 0; r < rows; ++r, dp += c_, xp += c_)
        for (int k = 0; k < c_; ++k)
          xp[k] = dp[k] * gamma_.value[k] * inv_std_[static_cast<std::size_t>(k)];
    }
    return dx;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    out.emplace_back(name_ + "/running_mean", &running_mean_);
    out.emplace_back(name_ + "/running_var", &running_var_);
  }

  std::string kind() const override { return "batch-norm"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<BatchNorm>(*this);
  }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.99;

 private:
  int c_;
  std::string name_;
  Param<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::Train;
};

// ---------------------------------------------------------------------------

/// s x s max pooling with stride s. Ties route the gradient to the first
/// (row-major lowest) index.
template <typename T>
class MaxPool final : public Layer<T> {
 public:
  explicit MaxPool(int s) : s_(s) {}

  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = (h + s_ - 1) / s_, ow = (w + s_ - 1) / s_;
    in_shape_ = x.shape;
    Tensor<T> y(Shape{n, oh, ow, c});
    arg_.assign(static_cast<std::size_t>(y.size()), 0);
    std::int64_t o = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
          for (int k = 0; k < c; ++k, ++o) {
            // Seed with the window's first element so NaN inputs still map to
            // a valid index (and propagate) instead of leaving no winner.
            std::int64_t best_idx =
                ((static_cast<std::int64_t>(ni) * h + i * s_) * w + j * s_) * c + k;
            T best = x[best_idx];
            for (int di = i * s_; di < std::min((i + 1) * s_, h); ++di)
              for (int dj = j * s_; dj < std::min((j + 1) * s_, w); ++dj) {
                const std::int64_t idx =
                    ((static_cast<std::int64_t>(ni) * h + di) * w + dj) * c + k;
                if (x[idx] > best) {  // strict >, so the first index wins ties
                  best = x[idx];
                  best_idx = idx;
                }
              }
            y[o] = best;
            arg_[static_cast<std::size_t>(o)] = best_idx;
          }
    this->mark_forward();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("max-pool");
    Tensor<T> dx(in_shape_);
    for (std::int64_t o = 0; o < dy.size(); ++o)
      dx[arg_[static_cast<std::size_t>(o)]] += dy[o];
    return dx;
  }

  std::string kind() const override { return "max-pool"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<MaxPool>(*this);
  }

 private:
  int s_;
  Shape in_shape_;
  std::vector<std::int64_t> arg_;
};

template <typename T>
class AvgPool final : public Layer<T> {
 public:
  explicit AvgPool(int s) : s_(s) {}

  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = (h + s_ - 1) / s_, ow = (w + s_ - 1) / s_;
    in_shape_ = x.shape;
    Tensor<T> y(Shape{n, oh, ow, c});
    std::int64_t o = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const int hi = std::min((i + 1) * s_, h), wi = std::min((j + 1) * s_, w);
          const int cnt = (hi - i * s_) * (wi - j * s_);
          for (int k = 0; k < c; ++k, ++o) {
            double acc = 0.0;
            for (int di = i * s_; di < hi; ++di)
              for (int dj = j * s_; dj < wi; ++dj)
                acc += x[((static_cast<std::int64_t>(ni) * h + di) * w + dj) * c + k];
            y[o] = static_cast<T>(acc / cnt);
          }
        }
    this->mark_forward();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("avg-pool");
    const int n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
    const int oh = (h + s_ - 1) / s_, ow = (w + s_ - 1) / s_;
    Tensor<T> dx(in_shape_);
    std::int64_t o = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          const int hi = std::min((i + 1) * s_, h), wi = std::min((j + 1) * s_, w);
          const T inv = T(1) / static_cast<T>((hi - i * s_) * (wi - j * s_));
          for (int k = 0; k < c; ++k, ++o)
            for (int di = i * s_; di < hi; ++di)
              for (int dj = j * s_; dj < wi; ++dj)
                dx[((static_cast<std::int64_t>(ni) * h + di) * w + dj) * c + k] +=
                    dy[o] * inv;
        }
    return dx;
  }

  std::string kind() const override { return "avg-pool"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<AvgPool>(*this);
  }

 private:
  int s_;
  Shape in_shape_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Relu final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    mask_.assign(static_cast<std::size_t>(x.size()), 0);
    Tensor<T> y(x.shape);
    for (std::int64_t i = 0; i < x.size(); ++i) {
      if (x[i] > T(0)) {
        y[i] = x[i];
        mask_[static_cast<std::size_t>(i)] = 1;
      }
    }
    this->mark_forward();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("relu");
    Tensor<T> dx(dy.shape);
    for (std::int64_t i = 0; i < dy.size(); ++i)
      dx[i] = mask_[static_cast<std::size_t>(i)] ? dy[i] : T(0);
    return dx;
  }

  std::string kind() const override { return "relu"; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  std::vector<unsigned char> mask_;
};

template <typename T>
class TanhLayer final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    y_ = Tensor<T>(x.shape);
    for (std::int64_t i = 0; i < x.size(); ++i) y_[i] = std::tanh(x[i]);
    this->mark_forward();
    return y_;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("tanh");
    Tensor<T> dx(dy.shape);
    for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * (T(1) - y_[i] * y_[i]);
    return dx;
  }

  std::string kind() const override { return "tanh"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<TanhLayer>(*this);
  }

 private:
  Tensor<T> y_;
};

/// Reshapes each sample to a fixed per-sample shape; the batch dim is free.
template <typename T>
class Reshape final : public Layer<T> {
 public:
  explicit Reshape(Shape per_sample) : target_(std::move(per_sample)) {}

  Tensor<T> forward(const Tensor<T>& x, Mode, bool) override {
    const int n = x.dim(0);
    if (x.size() != static_cast<std::int64_t>(n) * shape_numel(target_)) {
      throw DimensionError("reshape: input " + shape_str(x.shape) +
                           " incompatible with per-sample " + shape_str(target_));
    }
    in_shape_ = x.shape;
    Shape out{n};
    out.insert(out.end(), target_.begin(), target_.end());
    this->mark_forward();
    return x.reshaped(out);
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("reshape");
    return dy.reshaped(in_shape_);
  }

  std::string kind() const override { return "reshape"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<Reshape>(*this);
  }

 private:
  Shape target_;
  Shape in_shape_;
};

// ---------------------------------------------------------------------------

/// Pre-activation residual block: BN-ReLU-conv(d,s,k)-BN-ReLU-conv(d,1,k)
/// plus shortcut. The shortcut is the identity when shape is preserved and a
/// 1x1 stride-s projection otherwise, so zeroed conv-path weights make the
/// stride-1 block an exact identity.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(const std::string& name, int in_c, int d, int s, int k, Rng& rng)
      : bn1_(name + "/bn1", in_c),
        conv1_(name + "/conv1", in_c, d, s, k, rng),
        bn2_(name + "/bn2", k),
        conv2_(name + "/conv2", k, d, 1, k, rng) {
    if (s != 1 || in_c != k) {
      proj_.emplace(name + "/proj", in_c, 1, s, k, rng, /*use_bias=*/false);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, bool bn_update) override {
    Tensor<T> t = bn1_.forward(x, mode, bn_update);
    t = relu1_.forward(t, mode, bn_update);
    t = conv1_.forward(t, mode, bn_update);
    t = bn2_.forward(t, mode, bn_update);
    t = relu2_.forward(t, mode, bn_update);
    t = conv2_.forward(t, mode, bn_update);
    Tensor<T> sc = proj_ ? proj_->forward(x, mode, bn_update) : x;
    require_same_shape(t.shape, sc.shape, "residual-block");
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] += sc[i];
    this->mark_forward();
    return t;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_forward("residual-block");
    Tensor<T> d = conv2_.backward(dy);
    d = relu2_.backward(d);
    d = bn2_.backward(d);
    d = conv1_.backward(d);
    d = relu1_.backward(d);
    d = bn1_.backward(d);
    Tensor<T> dsc = proj_ ? proj_->backward(dy) : dy;
    for (std::int64_t i = 0; i < d.size(); ++i) d[i] += dsc[i];
    return d;
  }

  void collect_params(std::vector<Param<T>*>& out) override {
    bn1_.collect_params(out);
    conv1_.collect_params(out);
    bn2_.collect_params(out);
    conv2_.collect_params(out);
    if (proj_) proj_->collect_params(out);
  }

  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) override {
    bn1_.collect_state(out);
    bn2_.collect_state(out);
  }

  std::string kind() const override { return "residual-block"; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<ResidualBlock>(*this);
  }

 private:
  BatchNorm<T> bn1_;
  Relu<T> relu1_;
  Conv2d<T> conv1_;
  BatchNorm<T> bn2_;
  Relu<T> relu2_;
  Conv2d<T> conv2_;
  std::optional<Conv2d<T>> proj_;
};

}  // namespace advnet
