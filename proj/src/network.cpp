#include "awe/network.hpp"

#include <cmath>

namespace awe {

template <typename T>
Network<T>::Network(std::vector<LayerSpec> specs, Shape input_shape)
    : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
  require(!specs_.empty(), "network needs at least one layer");
  Shape shape = input_shape_;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    layers_.push_back(make_layer<T>(specs_[i], shape, i));
    shape = layers_.back()->output_shape();
  }
  output_shape_ = shape;
}

template <typename T>
Network<T>::Network(const Network& other) : Network(other.specs_, other.input_shape_) {
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value = *src[i];
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, Mode mode, Rng& rng, Tape<T>* tape) const {
  if (tape) {
    tape->caches.assign(layers_.size(), LayerCache<T>{});
    tape->consumed = false;
    if (mode != Mode::train) throw ContractViolation("a tape can only be recorded in train mode");
  }
  Tensor<T> x = layers_.front()->forward(input, mode, rng, tape ? &tape->caches[0] : nullptr);
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x, mode, rng, tape ? &tape->caches[i] : nullptr);
  }
  return x;
}

template <typename T>
Tensor<T> Network<T>::forward_eval(const Tensor<T>& input) const {
  Rng unused(0);
  return forward(input, Mode::eval, unused, nullptr);
}

template <typename T>
Gradients<T> Network<T>::backward(Tape<T>& tape, const Tensor<T>& output_gradient, bool need_input_grad) const {
  if (tape.consumed) throw ContractViolation("tape already consumed by a previous backward pass");
  if (tape.caches.size() != layers_.size()) throw ContractViolation("tape does not belong to this network");
  tape.consumed = true;

  Gradients<T> grads;
  std::vector<std::size_t> offsets;
  for (const auto& layer : layers_) {
    offsets.push_back(grads.params.size());
    for (const auto& p : layer->params()) grads.params.emplace_back(p.shape());
  }

  // Leading parameter-free layers need no input gradient unless requested.
  std::size_t first_weighted = layers_.size();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!layers_[i]->params().empty()) {
      first_weighted = i;
      break;
    }
  }

  Tensor<T> g = output_gradient;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool want_input = need_input_grad || i > first_weighted;
    std::span<Tensor<T>> slot(grads.params.data() + offsets[i], layers_[i]->params().size());
    Tensor<T> next = layers_[i]->backward(tape.caches[i], g, slot, want_input);
    tape.caches[i] = LayerCache<T>{};
    if (!want_input) break;
    g = std::move(next);
  }
  if (need_input_grad) grads.input = std::move(g);
  return grads;
}

template <typename T>
std::vector<ParameterRef<T>> Network<T>::parameters() {
  std::vector<ParameterRef<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto ps = layers_[i]->params();
    const std::string base = std::to_string(i) + "." + to_string(layers_[i]->kind());
    for (std::size_t j = 0; j < ps.size(); ++j) out.push_back({base + (j == 0 ? ".weight" : ".bias"), &ps[j]});
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Network<T>::parameters() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& layer : layers_) {
    for (const auto& p : std::as_const(*layer).params()) out.push_back(&p);
  }
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

template <typename T>
void Network<T>::init_parameters(Rng& rng) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto ps = layers_[i]->params();
    if (ps.empty()) continue;
    const bool feeds_relu = i + 1 < layers_.size() && layers_[i + 1]->kind() == LayerKind::relu;
    const double fan_in = static_cast<double>(layers_[i]->fan_in());
    const double fan_out = static_cast<double>(layers_[i]->fan_out());
    Tensor<T>& w = ps[0];
    if (feeds_relu) {
      std::normal_distribution<double> he(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : w.values()) v = static_cast<T>(he(rng));
    } else {
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> xavier(-limit, limit);
      for (auto& v : w.values()) v = static_cast<T>(xavier(rng));
    }
    for (std::size_t j = 1; j < ps.size(); ++j) ps[j].fill(T{0});
  }
}

template <typename T>
std::set<std::size_t> Network<T>::dropout_adjacent_layers() const {
  std::set<std::size_t> out;
  for (std::size_t d = 0; d < layers_.size(); ++d) {
    if (layers_[d]->kind() != LayerKind::dropout) continue;
    for (std::size_t i = d; i-- > 0;) {
      if (!layers_[i]->params().empty()) {
        out.insert(i);
        break;
      }
    }
    for (std::size_t i = d + 1; i < layers_.size(); ++i) {
      if (!layers_[i]->params().empty()) {
        out.insert(i);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
AdamState<T> AdamState<T>::zeros_like(std::span<Tensor<T>* const> params) {
  AdamState state;
  for (const auto* p : params) {
    state.first_moment.emplace_back(p->shape());
    state.second_moment.emplace_back(p->shape());
  }
  return state;
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads, AdamState<T>& state,
               double learning_rate) {
  require(params.size() == grads.size(), "adam: parameter/gradient count mismatch");
  if (state.first_moment.empty()) state = AdamState<T>::zeros_like(params);
  require(state.first_moment.size() == params.size(), "adam: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->shape() == grads[i].shape() && state.first_moment[i].shape() == grads[i].shape(),
            "adam: shape mismatch for parameter " + std::to_string(i));
    for (T g : grads[i].values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw DivergenceError("adam: non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * gj;
      const double vj = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / c1;
      const double v_hat = vj / c2;
      p[j] = static_cast<T>(p[j] - learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEpsilon));
    }
  }
}

template <typename T>
std::size_t apply_max_norm(Network<T>& net, double max_norm, const std::set<std::size_t>& layers) {
  std::size_t rescaled = 0;
  for (std::size_t li : layers) {
    auto ps = net.layer_parameters(li);
    if (ps.empty()) continue;
    Tensor<T>& w = ps[0];
    const std::size_t units = w.dim(0);
    const std::size_t fan = w.size() / units;
    for (std::size_t u = 0; u < units; ++u) {
      T* row = w.data() + u * fan;
      double sq = 0.0;
      for (std::size_t j = 0; j < fan; ++j) sq += static_cast<double>(row[j]) * row[j];
      const double norm = std::sqrt(sq);
      if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (std::size_t j = 0; j < fan; ++j) row[j] = static_cast<T>(row[j] * scale);
        ++rescaled;
      }
    }
  }
  return rescaled;
}

template <typename T>
double max_incoming_norm(const Network<T>& net, const std::set<std::size_t>& layers) {
  double worst = 0.0;
  for (std::size_t li : layers) {
    auto ps = net.layer(li).params();
    if (ps.empty()) continue;
    const Tensor<T>& w = ps[0];
    const std::size_t units = w.dim(0);
    const std::size_t fan = w.size() / units;
    for (std::size_t u = 0; u < units; ++u) {
      double sq = 0.0;
      for (std::size_t j = 0; j < fan; ++j) sq += static_cast<double>(w[u * fan + j]) * w[u * fan + j];
      worst = std::max(worst, std::sqrt(sq));
    }
  }
  return worst;
}

template class Network<float>;
template class Network<double>;
template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>>,
                               AdamState<float>&, double);
template void adam_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                                AdamState<double>&, double);
template std::size_t apply_max_norm<float>(Network<float>&, double, const std::set<std::size_t>&);
template std::size_t apply_max_norm<double>(Network<double>&, double, const std::set<std::size_t>&);
template double max_incoming_norm<float>(const Network<float>&, const std::set<std::size_t>&);
template double max_incoming_norm<double>(const Network<double>&, const std::set<std::size_t>&);

}  // namespace awe
