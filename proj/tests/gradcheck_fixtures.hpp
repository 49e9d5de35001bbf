#pragma once

// Finite-difference fixtures shared by the unit tests and the acceptance
// suite. Everything here runs in 64-bit.

#include <random>
#include <string>
#include <vector>

#include "awe/grad_check.hpp"
#include "awe/network.hpp"
#include "awe/siamese.hpp"

namespace test {

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kGradientTolerance = 1e-4;
// Central differences at this step resolve a derivative only to about
// eps * |loss| / step, roughly 1e-10 here. Entries whose true derivative is
// zero (the l2norm Jacobian along its input) would otherwise be judged by
// noise / floor; a floor of 1e-5 turns them into an absolute check at 1e-9.
inline constexpr double kGradientFloor = 1e-5;

struct LayerCase {
  std::string label;
  std::vector<awe::LayerSpec> specs;
  awe::Shape input;  // per example
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// One randomized small case per layer kind, plus a short mixed stack.
inline std::vector<LayerCase> layer_cases(std::mt19937_64& rng) {
  using awe::LayerSpec;
  std::vector<LayerCase> cases;
  cases.push_back({"conv2d", {LayerSpec::conv2d(pick(rng, 1, 3), 3)}, {pick(rng, 1, 3), pick(rng, 3, 6), pick(rng, 3, 7)}});
  cases.push_back({"maxpool2d", {LayerSpec::maxpool2d(2)}, {pick(rng, 1, 3), pick(rng, 2, 7), pick(rng, 2, 7)}});
  cases.push_back({"dense", {LayerSpec::dense(pick(rng, 1, 6))}, {pick(rng, 1, 8)}});
  cases.push_back({"dropout", {LayerSpec::dropout(0.3)}, {pick(rng, 4, 12)}});
  cases.push_back({"relu", {LayerSpec::relu()}, {pick(rng, 3, 12)}});
  cases.push_back({"l2norm", {LayerSpec::l2norm()}, {pick(rng, 2, 10)}});
  cases.push_back({"flatten", {LayerSpec::flatten(), LayerSpec::dense(3)}, {2, pick(rng, 2, 4), pick(rng, 2, 4)}});
  cases.push_back({"stack",
                   {LayerSpec::dropout(0.2), LayerSpec::conv2d(2, 3), LayerSpec::relu(), LayerSpec::maxpool2d(2),
                    LayerSpec::flatten(), LayerSpec::dense(5), LayerSpec::relu(), LayerSpec::dropout(0.4),
                    LayerSpec::dense(4), LayerSpec::l2norm()},
                   {1, 6, 8}});
  return cases;
}

inline awe::Tensor<double> random_tensor(const awe::Shape& shape, std::mt19937_64& rng) {
  awe::Tensor<double> t(shape);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

inline awe::Shape batched(std::size_t n, const awe::Shape& s) {
  awe::Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

/// Checks parameter and input gradients of `net` under the scalar probe
/// loss sum(output * R) for a fixed random R. Train mode with a fixed
/// dropout seed so every evaluation sees the same masks.
inline awe::GradCheckResult check_network(awe::Network<double>& net, awe::Tensor<double> input,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  awe::Tensor<double> probe(batched(input.dim(0), net.output_shape()));
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : probe.values()) v = n(rng);
  const std::uint64_t mask_seed = seed ^ 0x9e3779b97f4a7c15ull;

  auto loss = [&] {
    awe::Rng masks(mask_seed);
    const auto out = net.forward(input, awe::Mode::train, masks);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * probe[i];
    return s;
  };

  awe::Rng masks(mask_seed);
  awe::Tape<double> tape;
  net.forward(input, awe::Mode::train, masks, &tape);
  const auto grads = net.backward(tape, probe, true);

  std::vector<double> analytic, numeric;
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = grads.params[i].values();
    analytic.insert(analytic.end(), g.begin(), g.end());
    const auto fd = awe::central_differences(params[i].value->values(), loss, kFiniteDifferenceStep);
    numeric.insert(numeric.end(), fd.begin(), fd.end());
  }
  const auto gi = grads.input.values();
  analytic.insert(analytic.end(), gi.begin(), gi.end());
  const auto fd = awe::central_differences(input.values(), loss, kFiniteDifferenceStep);
  numeric.insert(numeric.end(), fd.begin(), fd.end());
  return awe::compare_gradients(analytic, numeric, kGradientFloor);
}

inline awe::GradCheckResult check_layer_case(const LayerCase& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  awe::Network<double> net(c.specs, c.input);
  awe::Rng init(seed + 1);
  net.init_parameters(init);
  // Nonzero biases so the check covers them meaningfully.
  for (auto& p : net.parameters()) {
    if (p.name.ends_with(".bias")) {
      for (auto& v : p.value->values()) v = std::normal_distribution<double>(0.0, 0.1)(rng);
    }
  }
  return check_network(net, random_tensor(batched(2, c.input), rng), seed);
}

/// Full pairwise loss through two miniature encoders built from the same
/// layer kinds as the real ones. Checks every parameter of both encoders.
inline awe::GradCheckResult check_siamese_loss(std::uint64_t seed, awe::DistanceKind kind, bool edit_margins) {
  using awe::LayerSpec;
  std::mt19937_64 rng(seed);
  const std::vector<LayerSpec> tail{LayerSpec::conv2d(2, 3), LayerSpec::relu(),  LayerSpec::maxpool2d(2),
                                    LayerSpec::flatten(),    LayerSpec::dense(6), LayerSpec::relu(),
                                    LayerSpec::dropout(0.4), LayerSpec::dense(5), LayerSpec::relu(),
                                    LayerSpec::dense(4),     LayerSpec::l2norm()};
  std::vector<LayerSpec> acoustic_specs{LayerSpec::dropout(0.2)};
  acoustic_specs.insert(acoustic_specs.end(), tail.begin(), tail.end());
  awe::Network<double> f(acoustic_specs, {1, 6, 8});
  awe::Network<double> g(tail, {1, 5, 4});
  awe::Rng init(seed + 7);
  f.init_parameters(init);
  g.init_parameters(init);
  // Nonzero biases keep the pre-normalization vectors away from the origin,
  // where finite differences become meaningless.
  for (auto* net : {&f, &g}) {
    for (auto& p : net->parameters()) {
      if (p.name.ends_with(".bias")) {
        for (auto& v : p.value->values()) v = std::normal_distribution<double>(0.0, 0.2)(rng);
      }
    }
  }

  const std::size_t n = 6;
  auto xa = random_tensor(batched(n, f.input_shape()), rng);
  auto xp = random_tensor(batched(n, g.input_shape()), rng);
  std::vector<int> labels{0, 1, 0, 1, 1, 0};
  std::vector<double> margins(n, 1.0);
  if (edit_margins) {
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (auto& m : margins) m = u(rng);
  }
  const std::uint64_t mask_seed = seed * 31 + 5;

  auto loss = [&] {
    awe::Rng masks(mask_seed);
    return awe::siamese_batch_loss(f, g, xa, xp, labels, margins, kind, awe::Mode::train, masks, false).loss;
  };
  awe::Rng masks(mask_seed);
  const auto res = awe::siamese_batch_loss(f, g, xa, xp, labels, margins, kind, awe::Mode::train, masks, true);

  std::vector<double> analytic, numeric;
  auto collect = [&](awe::Network<double>& net, const awe::Gradients<double>& grads) {
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto gv = grads.params[i].values();
      analytic.insert(analytic.end(), gv.begin(), gv.end());
      const auto fd = awe::central_differences(params[i].value->values(), loss, kFiniteDifferenceStep);
      numeric.insert(numeric.end(), fd.begin(), fd.end());
    }
  };
  collect(f, res.acoustic);
  collect(g, res.phonetic);
  return awe::compare_gradients(analytic, numeric, kGradientFloor);
}

}  // namespace test
