#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "awe/layers.hpp"
#include "awe/tensor.hpp"

namespace awe {

/// Intermediates recorded by a train-mode forward pass. A tape feeds exactly
/// one backward pass.
template <typename T>
struct Tape {
  std::vector<LayerCache<T>> caches;
  bool consumed = false;
};

template <typename T>
struct Gradients {
  std::vector<Tensor<T>> params;  // same order as Network::parameters()
  Tensor<T> input;                // empty unless requested
};

template <typename T>
struct ParameterRef {
  std::string name;
  Tensor<T>* value;
};

/// Sequential stack of layers over batched tensors [N, ...input_shape].
template <typename T>
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> specs, Shape input_shape);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  std::span<Tensor<T>> layer_parameters(std::size_t i) { return layers_.at(i)->params(); }

  /// Runs the stack. In train mode dropout masks are drawn from `rng`; when
  /// `tape` is non-null it records what backward() needs. Eval mode never
  /// touches `rng`.
  Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng, Tape<T>* tape = nullptr) const;
  Tensor<T> forward_eval(const Tensor<T>& input) const;

  /// Consumes the tape. Throws ContractViolation on reuse.
  Gradients<T> backward(Tape<T>& tape, const Tensor<T>& output_gradient, bool need_input_grad = true) const;

  std::vector<ParameterRef<T>> parameters();
  std::vector<const Tensor<T>*> parameters() const;
  std::size_t parameter_count() const;

  /// He-normal weights for layers followed by ReLU, Xavier-uniform otherwise;
  /// zero biases.
  void init_parameters(Rng& rng);

  /// Indices of weight layers adjacent to a dropout layer (the nearest weight
  /// layer on either side).
  std::set<std::size_t> dropout_adjacent_layers() const;

  template <typename U>
  Network<U> converted() const {
    Network<U> out(specs_, input_shape_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value = src[i]->template cast<U>();
    return out;
  }

 private:
  friend class Network<float>;
  friend class Network<double>;

  std::vector<LayerSpec> specs_;
  Shape input_shape_;
  Shape output_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// ---------------------------------------------------------------------------
// Adam

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(std::span<Tensor<T>* const> params);
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update. Throws DivergenceError on a non-finite
/// gradient, before any parameter is modified.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               double learning_rate);

/// Rescales each output unit's incoming weight vector whose l2 norm exceeds
/// `max_norm` down to exactly `max_norm`. Returns the number of rescaled units.
template <typename T>
std::size_t apply_max_norm(Network<T>& net, double max_norm, const std::set<std::size_t>& layers);

/// Largest incoming-weight norm over the units of the given layers.
template <typename T>
double max_incoming_norm(const Network<T>& net, const std::set<std::size_t>& layers);

}  // namespace awe
