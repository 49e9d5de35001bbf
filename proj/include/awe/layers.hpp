#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "awe/tensor.hpp"

namespace awe {

using Rng = std::mt19937_64;

enum class Mode { train, eval };

enum class LayerKind { conv2d, maxpool2d, dense, dropout, relu, l2norm, flatten };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// Declarative description of one layer. Only the fields relevant to `kind`
/// are read: conv2d uses channels/kernel, maxpool2d uses pool, dense uses
/// units, dropout uses rate.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t pool = 0;
  std::size_t units = 0;
  double rate = 0.0;

  static LayerSpec conv2d(std::size_t channels, std::size_t kernel = 3) {
    return {LayerKind::conv2d, channels, kernel, 0, 0, 0.0};
  }
  static LayerSpec maxpool2d(std::size_t pool = 2) { return {LayerKind::maxpool2d, 0, 0, pool, 0, 0.0}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, 0, 0, 0, units, 0.0}; }
  static LayerSpec dropout(double rate) { return {LayerKind::dropout, 0, 0, 0, 0, rate}; }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 0, 0.0}; }
  static LayerSpec l2norm() { return {LayerKind::l2norm, 0, 0, 0, 0, 0.0}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0, 0, 0.0}; }

  bool operator==(const LayerSpec&) const = default;
};

/// Intermediates a layer keeps for its backward pass.
template <typename T>
struct LayerCache {
  Tensor<T> saved;                     // input or output, depending on the layer
  Tensor<T> aux;                       // per-example norms for l2norm
  std::vector<std::uint32_t> indices;  // max-pool argmax positions
  Shape input_shape;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  /// Per-example output shape (no batch dimension).
  virtual Shape output_shape() const = 0;

  /// `cache` may be null when no backward pass will follow.
  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng, LayerCache<T>* cache) const = 0;

  /// Accumulates into `param_grads` (same order as params()) and returns the
  /// input gradient, or an empty tensor when `need_input_grad` is false.
  virtual Tensor<T> backward(const LayerCache<T>& cache, const Tensor<T>& grad_output,
                             std::span<Tensor<T>> param_grads, bool need_input_grad) const = 0;

  virtual std::span<Tensor<T>> params() { return {}; }
  virtual std::span<const Tensor<T>> params() const { return {}; }

  /// Number of incoming weights per output unit (for fan-in and max-norm);
  /// zero for layers without weights.
  virtual std::size_t fan_in() const { return 0; }
  virtual std::size_t fan_out() const { return 0; }
};

/// Instantiates a layer for the given per-example input shape. Throws
/// ContractViolation naming the layer if the shape does not fit.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input_shape, std::size_t index);

}  // namespace awe
