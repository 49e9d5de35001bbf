#include "awe/layers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace awe {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

std::string layer_name(std::size_t index, LayerKind kind) {
  return "layer " + std::to_string(index) + " (" + to_string(kind) + ")";
}

void check_batch(const Shape& expected, const Shape& got, const std::string& name) {
  const bool ok = got.size() == expected.size() + 1 && std::equal(expected.begin(), expected.end(), got.begin() + 1);
  if (!ok) {
    throw ContractViolation(name + ": expected input " + shape_string(expected) + " per example, got " +
                            shape_string(got));
  }
}

Shape with_batch(std::size_t n, const Shape& shape) {
  Shape s{n};
  s.insert(s.end(), shape.begin(), shape.end());
  return s;
}

// ---------------------------------------------------------------------------
// Conv2d: stride 1, "same" zero padding, odd square kernel.

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(const LayerSpec& spec, const Shape& in, std::size_t index)
      : name_(layer_name(index, LayerKind::conv2d)), in_(in), out_channels_(spec.channels), k_(spec.kernel) {
    if (in.size() != 3) throw ContractViolation(name_ + ": expects [channels, height, width] input");
    if (k_ == 0 || k_ % 2 == 0) throw ContractViolation(name_ + ": kernel size must be odd");
    if (out_channels_ == 0) throw ContractViolation(name_ + ": channel count must be positive");
    params_.emplace_back(Shape{out_channels_, in_[0], k_, k_});
    params_.emplace_back(Shape{out_channels_});
  }

  LayerKind kind() const override { return LayerKind::conv2d; }
  Shape output_shape() const override { return {out_channels_, in_[1], in_[2]}; }
  std::span<Tensor<T>> params() override { return params_; }
  std::span<const Tensor<T>> params() const override { return params_; }
  std::size_t fan_in() const override { return in_[0] * k_ * k_; }
  std::size_t fan_out() const override { return out_channels_ * k_ * k_; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&, LayerCache<T>* cache) const override {
    check_batch(in_, input.shape(), name_);
    const std::size_t n = input.dim(0), hw = in_[1] * in_[2];
    Tensor<T> out(with_batch(n, output_shape()));
    AlignedVector<T> col(fan_in() * hw);
    ConstMatrixMap<T> w(params_[0].data(), out_channels_, fan_in());
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(params_[1].data(), out_channels_);
    for (std::size_t i = 0; i < n; ++i) {
      im2col(input.data() + i * in_[0] * hw, col.data());
      ConstMatrixMap<T> c(col.data(), fan_in(), hw);
      MatrixMap<T> o(out.data() + i * out_channels_ * hw, out_channels_, hw);
      o.noalias() = w * c;
      o.colwise() += b;
    }
    if (cache) cache->saved = input;
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override {
    const Tensor<T>& input = cache.saved;
    const std::size_t n = input.dim(0), hw = in_[1] * in_[2];
    ConstMatrixMap<T> w(params_[0].data(), out_channels_, fan_in());
    MatrixMap<T> dw(grads[0].data(), out_channels_, fan_in());
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grads[1].data(), out_channels_);
    Tensor<T> grad_input;
    if (need_input_grad) grad_input = Tensor<T>(input.shape());
    AlignedVector<T> col(fan_in() * hw), dcol(need_input_grad ? fan_in() * hw : 0);
    for (std::size_t i = 0; i < n; ++i) {
      im2col(input.data() + i * in_[0] * hw, col.data());
      ConstMatrixMap<T> c(col.data(), fan_in(), hw);
      ConstMatrixMap<T> g(grad_output.data() + i * out_channels_ * hw, out_channels_, hw);
      dw.noalias() += g * c.transpose();
      db += g.rowwise().sum();
      if (need_input_grad) {
        MatrixMap<T> dc(dcol.data(), fan_in(), hw);
        dc.noalias() = w.transpose() * g;
        col2im(dcol.data(), grad_input.data() + i * in_[0] * hw);
      }
    }
    return grad_input;
  }

 private:
  void im2col(const T* src, T* col) const {
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(in_[1]), wd = static_cast<std::ptrdiff_t>(in_[2]);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2), k = static_cast<std::ptrdiff_t>(k_);
    for (std::size_t c = 0; c < in_[0]; ++c) {
      const T* plane = src + c * h * wd;
      for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
        for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
          T* row = col + ((c * k_ + ky) * k_ + kx) * h * wd;
          for (std::ptrdiff_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = y + ky - pad;
            T* dst = row + y * wd;
            if (sy < 0 || sy >= h) {
              std::fill(dst, dst + wd, T{0});
              continue;
            }
            const T* srow = plane + sy * wd;
            const std::ptrdiff_t dx = kx - pad;
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx), hi = std::min(wd, wd - dx);
            std::fill(dst, dst + lo, T{0});
            std::copy(srow + lo + dx, srow + hi + dx, dst + lo);
            std::fill(dst + hi, dst + wd, T{0});
          }
        }
      }
    }
  }

  void col2im(const T* col, T* dst) const {
    const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(in_[1]), wd = static_cast<std::ptrdiff_t>(in_[2]);
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k_ / 2), k = static_cast<std::ptrdiff_t>(k_);
    for (std::size_t c = 0; c < in_[0]; ++c) {
      T* plane = dst + c * h * wd;
      for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
        for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
          const T* row = col + ((c * k_ + ky) * k_ + kx) * h * wd;
          for (std::ptrdiff_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = y + ky - pad;
            if (sy < 0 || sy >= h) continue;
            const std::ptrdiff_t dx = kx - pad;
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx), hi = std::min(wd, wd - dx);
            const T* src = row + y * wd;
            T* drow = plane + sy * wd;
            for (std::ptrdiff_t x = lo; x < hi; ++x) drow[x + dx] += src[x];
          }
        }
      }
    }
  }

  std::string name_;
  Shape in_;
  std::size_t out_channels_, k_;
  std::vector<Tensor<T>> params_;
};

// ---------------------------------------------------------------------------
// MaxPool2d: square window, stride equal to the window, floor semantics.

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(const LayerSpec& spec, const Shape& in, std::size_t index)
      : name_(layer_name(index, LayerKind::maxpool2d)), in_(in), p_(spec.pool) {
    if (in.size() != 3) throw ContractViolation(name_ + ": expects [channels, height, width] input");
    if (p_ == 0) throw ContractViolation(name_ + ": pool size must be positive");
    if (in[1] < p_ || in[2] < p_) throw ContractViolation(name_ + ": input smaller than pool window");
  }

  LayerKind kind() const override { return LayerKind::maxpool2d; }
  Shape output_shape() const override { return {in_[0], in_[1] / p_, in_[2] / p_}; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&, LayerCache<T>* cache) const override {
    check_batch(in_, input.shape(), name_);
    const std::size_t n = input.dim(0), c = in_[0], h = in_[1], w = in_[2];
    const std::size_t oh = h / p_, ow = w / p_;
    Tensor<T> out(with_batch(n, output_shape()));
    std::vector<std::uint32_t> argmax(out.size());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const T* src = input.data() + plane * h * w;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++o) {
          std::size_t best = (y * p_) * w + x * p_;
          for (std::size_t dy = 0; dy < p_; ++dy) {
            for (std::size_t dx = 0; dx < p_; ++dx) {
              const std::size_t idx = (y * p_ + dy) * w + x * p_ + dx;
              if (src[idx] > src[best]) best = idx;
            }
          }
          out[o] = src[best];
          argmax[o] = static_cast<std::uint32_t>(plane * h * w + best);
        }
      }
    }
    if (cache) {
      cache->indices = std::move(argmax);
      cache->input_shape = input.shape();
    }
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output, std::span<Tensor<T>>,
                     bool need_input_grad) const override {
    if (!need_input_grad) return {};
    Tensor<T> grad_input(cache.input_shape);
    for (std::size_t o = 0; o < grad_output.size(); ++o) grad_input[cache.indices[o]] += grad_output[o];
    return grad_input;
  }

 private:
  std::string name_;
  Shape in_;
  std::size_t p_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(const LayerSpec& spec, const Shape& in, std::size_t index)
      : name_(layer_name(index, LayerKind::dense)), in_(in), units_(spec.units) {
    if (in.size() != 1) throw ContractViolation(name_ + ": expects flat input, got " + shape_string(in));
    if (units_ == 0) throw ContractViolation(name_ + ": unit count must be positive");
    params_.emplace_back(Shape{units_, in_[0]});
    params_.emplace_back(Shape{units_});
  }

  LayerKind kind() const override { return LayerKind::dense; }
  Shape output_shape() const override { return {units_}; }
  std::span<Tensor<T>> params() override { return params_; }
  std::span<const Tensor<T>> params() const override { return params_; }
  std::size_t fan_in() const override { return in_[0]; }
  std::size_t fan_out() const override { return units_; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&, LayerCache<T>* cache) const override {
    check_batch(in_, input.shape(), name_);
    const std::size_t n = input.dim(0);
    Tensor<T> out(Shape{n, units_});
    ConstMatrixMap<T> x(input.data(), n, in_[0]);
    ConstMatrixMap<T> w(params_[0].data(), units_, in_[0]);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(params_[1].data(), units_);
    MatrixMap<T> y(out.data(), n, units_);
    y.noalias() = x * w.transpose();
    y.rowwise() += b;
    if (cache) cache->saved = input;
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output, std::span<Tensor<T>> grads,
                     bool need_input_grad) const override {
    const Tensor<T>& input = cache.saved;
    const std::size_t n = input.dim(0);
    ConstMatrixMap<T> x(input.data(), n, in_[0]);
    ConstMatrixMap<T> g(grad_output.data(), n, units_);
    MatrixMap<T> dw(grads[0].data(), units_, in_[0]);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grads[1].data(), units_);
    dw.noalias() += g.transpose() * x;
    db += g.colwise().sum();
    if (!need_input_grad) return {};
    Tensor<T> grad_input(input.shape());
    ConstMatrixMap<T> w(params_[0].data(), units_, in_[0]);
    MatrixMap<T> dx(grad_input.data(), n, in_[0]);
    dx.noalias() = g * w;
    return grad_input;
  }

 private:
  std::string name_;
  Shape in_;
  std::size_t units_;
  std::vector<Tensor<T>> params_;
};

// ---------------------------------------------------------------------------
// Inverted dropout: kept activations are scaled by 1/(1-rate) at train time.

template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(const LayerSpec& spec, const Shape& in, std::size_t index)
      : name_(layer_name(index, LayerKind::dropout)), in_(in), rate_(spec.rate) {
    if (!(rate_ >= 0.0 && rate_ < 1.0)) throw ContractViolation(name_ + ": dropout rate must be in [0, 1)");
  }

  LayerKind kind() const override { return LayerKind::dropout; }
  Shape output_shape() const override { return in_; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng, LayerCache<T>* cache) const override {
    check_batch(in_, input.shape(), name_);
    if (mode == Mode::eval || rate_ == 0.0) {
      if (cache) cache->saved = Tensor<T>();
      return input;
    }
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    std::bernoulli_distribution keep(1.0 - rate_);
    Tensor<T> mask(input.shape());
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
      mask[i] = keep(rng) ? scale : T{0};
      out[i] = input[i] * mask[i];
    }
    if (cache) cache->saved = std::move(mask);
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output, std::span<Tensor<T>>,
                     bool need_input_grad) const override {
    if (!need_input_grad) return {};
    if (cache.saved.empty()) return grad_output;
    Tensor<T> grad_input(grad_output.shape());
    for (std::size_t i = 0; i < grad_output.size(); ++i) grad_input[i] = grad_output[i] * cache.saved[i];
    return grad_input;
  }

 private:
  std::string name_;
  Shape in_;
  double rate_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  Relu(const Shape& in, std::size_t index) : name_(layer_name(index, LayerKind::relu)), in_(in) {}

  LayerKind kind() const override { return LayerKind::relu; }
  Shape output_shape() const override { return in_; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&, LayerCache<T>* cache) const override {
    check_batch(in_, input.shape(), name_);
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
    if (cache) cache->saved = out;
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output, std::span<Tensor<T>>,
                     bool need_input_grad) const override {
    if (!need_input_grad) return {};
    Tensor<T> grad_input(grad_output.shape());
    for (std::size_t i = 0; i < grad_output.size(); ++i) {
      grad_input[i] = cache.saved[i] > T{0} ? grad_output[i] : T{0};
    }
    return grad_input;
  }

 private:
  std::string name_;
  Shape in_;
};

// y = x / |x| per example.
template <typename T>
class L2Norm final : public Layer<T> {
 public:
  L2Norm(const Shape& in, std::size_t index) : name_(layer_name(index, LayerKind::l2norm)), in_(in) {
    if (in.size() != 1) throw ContractViolation(name_ + ": expects flat input");
  }

  LayerKind kind() const override { return LayerKind::l2norm; }
  Shape output_shape() const override { return in_; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&, LayerCache<T>* cache) const override {
    check_batch(in_, input.shape(), name_);
    const std::size_t n = input.dim(0), d = in_[0];
    Tensor<T> out(input.shape());
    Tensor<T> norms(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
      const T* x = input.data() + i * d;
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += static_cast<double>(x[j]) * x[j];
      const double norm = std::max(std::sqrt(sq), static_cast<double>(std::numeric_limits<T>::min()));
      norms[i] = static_cast<T>(norm);
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = static_cast<T>(x[j] / norm);
    }
    if (cache) {
      cache->saved = out;
      cache->aux = std::move(norms);
    }
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output, std::span<Tensor<T>>,
                     bool need_input_grad) const override {
    if (!need_input_grad) return {};
    const std::size_t d = in_[0];
    const Tensor<T>& y = cache.saved;
    const std::size_t n = y.dim(0);
    Tensor<T> grad_input(y.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const T* yi = y.data() + i * d;
      const T* gi = grad_output.data() + i * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(yi[j]) * gi[j];
      const double norm = cache.aux[i];
      for (std::size_t j = 0; j < d; ++j) {
        grad_input[i * d + j] = static_cast<T>((gi[j] - yi[j] * dot) / norm);
      }
    }
    return grad_input;
  }

 private:
  std::string name_;
  Shape in_;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  Flatten(const Shape& in, std::size_t index) : name_(layer_name(index, LayerKind::flatten)), in_(in) {}

  LayerKind kind() const override { return LayerKind::flatten; }
  Shape output_shape() const override { return {shape_size(in_)}; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&, LayerCache<T>* cache) const override {
    check_batch(in_, input.shape(), name_);
    Tensor<T> out = input;
    out.reshape({input.dim(0), shape_size(in_)});
    if (cache) cache->input_shape = input.shape();
    return out;
  }

  Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output, std::span<Tensor<T>>,
                     bool need_input_grad) const override {
    if (!need_input_grad) return {};
    Tensor<T> grad_input = grad_output;
    grad_input.reshape(cache.input_shape);
    return grad_input;
  }

 private:
  std::string name_;
  Shape in_;
};

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::relu: return "relu";
    case LayerKind::l2norm: return "l2norm";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::conv2d, LayerKind::maxpool2d, LayerKind::dense, LayerKind::dropout, LayerKind::relu,
                 LayerKind::l2norm, LayerKind::flatten}) {
    if (to_string(k) == name) return k;
  }
  throw DataError("unknown layer kind: " + name);
}

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input_shape, std::size_t index) {
  switch (spec.kind) {
    case LayerKind::conv2d: return std::make_unique<Conv2d<T>>(spec, input_shape, index);
    case LayerKind::maxpool2d: return std::make_unique<MaxPool2d<T>>(spec, input_shape, index);
    case LayerKind::dense: return std::make_unique<Dense<T>>(spec, input_shape, index);
    case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec, input_shape, index);
    case LayerKind::relu: return std::make_unique<Relu<T>>(input_shape, index);
    case LayerKind::l2norm: return std::make_unique<L2Norm<T>>(input_shape, index);
    case LayerKind::flatten: return std::make_unique<Flatten<T>>(input_shape, index);
  }
  throw ContractViolation("unknown layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&, const Shape&, std::size_t);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&, const Shape&, std::size_t);

}  // namespace awe
