#include "awe/siamese.hpp"

#include <json.hpp>

#include <cmath>

#include "awe/error.hpp"

namespace awe {

std::string to_string(DistanceKind kind) { return kind == DistanceKind::cosine ? "cosine" : "euclidean"; }

DistanceKind distance_kind_from_string(const std::string& name) {
  if (name == "cosine") return DistanceKind::cosine;
  if (name == "euclidean") return DistanceKind::euclidean;
  throw ConfigError("unknown distance kind: " + name);
}

std::string to_string(MarginMode mode) { return mode == MarginMode::fixed ? "fixed" : "edit_distance"; }

MarginMode margin_mode_from_string(const std::string& name) {
  if (name == "fixed") return MarginMode::fixed;
  if (name == "edit_distance") return MarginMode::edit_distance;
  throw ConfigError("unknown margin mode: " + name);
}

std::string serialize(const EncoderConfig& c) {
  nlohmann::json j{{"conv_channels", c.conv_channels},
                   {"kernel", c.kernel},
                   {"pool", c.pool},
                   {"dense_units", c.dense_units},
                   {"dense_dropout", c.dense_dropout},
                   {"acoustic_input_dropout", c.acoustic_input_dropout},
                   {"embedding_dim", c.embedding_dim}};
  return j.dump();
}

EncoderConfig parse_encoder_config(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EncoderConfig c;
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.pool = j.at("pool").get<std::size_t>();
    c.dense_units = j.at("dense_units").get<std::vector<std::size_t>>();
    c.dense_dropout = j.at("dense_dropout").get<double>();
    c.acoustic_input_dropout = j.at("acoustic_input_dropout").get<double>();
    c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed encoder config: ") + e.what());
  }
}

std::vector<LayerSpec> encoder_layers(const EncoderConfig& c, Modality modality) {
  require(!c.dense_units.empty(), "encoder needs at least one dense layer");
  std::vector<LayerSpec> layers;
  if (modality == Modality::acoustic && c.acoustic_input_dropout > 0.0) {
    layers.push_back(LayerSpec::dropout(c.acoustic_input_dropout));
  }
  for (std::size_t ch : c.conv_channels) {
    layers.push_back(LayerSpec::conv2d(ch, c.kernel));
    layers.push_back(LayerSpec::relu());
    layers.push_back(LayerSpec::maxpool2d(c.pool));
  }
  layers.push_back(LayerSpec::flatten());
  for (std::size_t i = 0; i < c.dense_units.size(); ++i) {
    if (i > 0 && c.dense_dropout > 0.0) layers.push_back(LayerSpec::dropout(c.dense_dropout));
    layers.push_back(LayerSpec::dense(c.dense_units[i]));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::dense(c.embedding_dim));
  layers.push_back(LayerSpec::l2norm());
  return layers;
}

Shape input_shape(Modality modality) {
  if (modality == Modality::acoustic) return {1, kMelBands, kFrames};
  return {1, kAlphabetSize, kMaxPhones};
}

// ---------------------------------------------------------------------------

SiameseModel::SiameseModel(EncoderConfig config, Network<float> acoustic, Network<float> phonetic)
    : config_(std::move(config)), acoustic_(std::move(acoustic)), phonetic_(std::move(phonetic)) {}

SiameseModel SiameseModel::create(const EncoderConfig& config, std::uint64_t seed) {
  Network<float> f(encoder_layers(config, Modality::acoustic), input_shape(Modality::acoustic));
  Network<float> g(encoder_layers(config, Modality::phonetic), input_shape(Modality::phonetic));
  Rng rng(seed);
  f.init_parameters(rng);
  g.init_parameters(rng);
  return SiameseModel(config, std::move(f), std::move(g));
}

std::vector<ParameterRef<float>> SiameseModel::parameters() {
  auto out = acoustic_.parameters();
  for (auto& p : out) p.name = "acoustic." + p.name;
  for (auto p : phonetic_.parameters()) {
    p.name = "phonetic." + p.name;
    out.push_back(p);
  }
  return out;
}

namespace {

constexpr std::size_t kEmbedChunk = 64;

std::vector<Embedding> split_rows(const Tensor<float>& t) {
  std::vector<Embedding> out;
  const std::size_t d = t.dim(1);
  for (std::size_t i = 0; i < t.dim(0); ++i) out.emplace_back(t.data() + i * d, t.data() + (i + 1) * d);
  return out;
}

}  // namespace

std::vector<Embedding> SiameseModel::embed_acoustic(std::span<const MelFeature* const> features) const {
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < features.size(); i += kEmbedChunk) {
    auto chunk = features.subspan(i, std::min(kEmbedChunk, features.size() - i));
    auto rows = split_rows(acoustic_.forward_eval(acoustic_batch<float>(chunk)));
    out.insert(out.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  return out;
}

std::vector<Embedding> SiameseModel::embed_phonetic(std::span<const PhoneSequence* const> phones) const {
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < phones.size(); i += kEmbedChunk) {
    auto chunk = phones.subspan(i, std::min(kEmbedChunk, phones.size() - i));
    auto rows = split_rows(phonetic_.forward_eval(phonetic_batch<float>(chunk)));
    out.insert(out.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  }
  return out;
}

Embedding SiameseModel::embed_acoustic(const MelFeature& feature) const {
  const MelFeature* p = &feature;
  return embed_acoustic(std::span<const MelFeature* const>(&p, 1)).front();
}

Embedding SiameseModel::embed_phonetic(const PhoneSequence& phones) const {
  const PhoneSequence* p = &phones;
  return embed_phonetic(std::span<const PhoneSequence* const>(&p, 1)).front();
}

std::size_t SiameseModel::constrain(double max_norm) {
  return apply_max_norm(acoustic_, max_norm, acoustic_.dropout_adjacent_layers()) +
         apply_max_norm(phonetic_, max_norm, phonetic_.dropout_adjacent_layers());
}

double SiameseModel::max_constrained_norm() const {
  return std::max(max_incoming_norm(acoustic_, acoustic_.dropout_adjacent_layers()),
                  max_incoming_norm(phonetic_, phonetic_.dropout_adjacent_layers()));
}

template <typename T>
Tensor<T> acoustic_batch(std::span<const MelFeature* const> features) {
  const std::size_t per = kMelBands * kFrames;
  Tensor<T> t(Shape{features.size(), 1, kMelBands, kFrames});
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto v = features[i]->values();
    std::copy(v.begin(), v.end(), t.data() + i * per);
  }
  return t;
}

template <typename T>
Tensor<T> phonetic_batch(std::span<const PhoneSequence* const> phones) {
  const std::size_t per = kAlphabetSize * kMaxPhones;
  Tensor<T> t(Shape{phones.size(), 1, kAlphabetSize, kMaxPhones});
  for (std::size_t i = 0; i < phones.size(); ++i) {
    encode_phones(*phones[i]).copy_to(std::span<T>(t.data() + i * per, per));
  }
  return t;
}

template Tensor<float> acoustic_batch<float>(std::span<const MelFeature* const>);
template Tensor<double> acoustic_batch<double>(std::span<const MelFeature* const>);
template Tensor<float> phonetic_batch<float>(std::span<const PhoneSequence* const>);
template Tensor<double> phonetic_batch<double>(std::span<const PhoneSequence* const>);

// ---------------------------------------------------------------------------

template <typename T>
double distance_unchecked(std::span<const T> a, std::span<const T> b, DistanceKind kind) {
  require(a.size() == b.size(), "distance between embeddings of different size");
  if (kind == DistanceKind::cosine) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
    return 1.0 - dot;
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

template double distance_unchecked<float>(std::span<const float>, std::span<const float>, DistanceKind);
template double distance_unchecked<double>(std::span<const double>, std::span<const double>, DistanceKind);

double distance(std::span<const float> a, std::span<const float> b, DistanceKind kind) {
  auto norm = [](std::span<const float> v) {
    double sq = 0.0;
    for (float x : v) sq += static_cast<double>(x) * x;
    return std::sqrt(sq);
  };
  if (std::abs(norm(a) - 1.0) > kUnitNormTolerance || std::abs(norm(b) - 1.0) > kUnitNormTolerance) {
    throw ContractViolation("distance expects unit-norm embeddings");
  }
  return distance_unchecked(a, b, kind);
}

double euclidean_radius(double threshold, DistanceKind kind) {
  return kind == DistanceKind::cosine ? std::sqrt(2.0 * std::max(threshold, 0.0)) : threshold;
}

double contrastive_loss(std::span<const double> distances, std::span<const int> labels,
                        std::span<const double> margins) {
  require(distances.size() == labels.size() && labels.size() == margins.size(), "loss inputs differ in length");
  if (distances.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double d = distances[i];
    if (labels[i] == 0) {
      total += d * d;
    } else {
      const double gap = std::max(0.0, margins[i] - d);
      total += gap * gap;
    }
  }
  return total / static_cast<double>(distances.size());
}

std::vector<double> contrastive_loss_gradient(std::span<const double> distances, std::span<const int> labels,
                                              std::span<const double> margins) {
  require(distances.size() == labels.size() && labels.size() == margins.size(), "loss inputs differ in length");
  const double n = static_cast<double>(distances.size());
  std::vector<double> g(distances.size(), 0.0);
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (labels[i] == 0) {
      g[i] = 2.0 * distances[i] / n;
    } else if (distances[i] < margins[i]) {
      g[i] = -2.0 * (margins[i] - distances[i]) / n;
    }
  }
  return g;
}

template <typename T>
BatchLoss<T> siamese_batch_loss(const Network<T>& acoustic, const Network<T>& phonetic,
                                const Tensor<T>& acoustic_input, const Tensor<T>& phonetic_input,
                                std::span<const int> labels, std::span<const double> margins, DistanceKind kind,
                                Mode mode, Rng& rng, bool with_gradients) {
  require(!with_gradients || mode == Mode::train, "gradients require a train-mode pass");
  const std::size_t n = labels.size();
  require(acoustic_input.dim(0) == n && phonetic_input.dim(0) == n, "batch size mismatch between inputs");

  Tape<T> tape_a, tape_p;
  const Tensor<T> ea = acoustic.forward(acoustic_input, mode, rng, with_gradients ? &tape_a : nullptr);
  const Tensor<T> ep = phonetic.forward(phonetic_input, mode, rng, with_gradients ? &tape_p : nullptr);
  const std::size_t d = ea.dim(1);
  require(ep.dim(1) == d, "encoders produce embeddings of different sizes");

  BatchLoss<T> out;
  out.distances.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.distances[i] = distance_unchecked(std::span<const T>(ea.data() + i * d, d),
                                          std::span<const T>(ep.data() + i * d, d), kind);
  }
  out.loss = contrastive_loss(out.distances, labels, margins);
  if (!with_gradients) return out;

  const auto dl_dd = contrastive_loss_gradient(out.distances, labels, margins);
  Tensor<T> ga(ea.shape()), gp(ep.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* a = ea.data() + i * d;
    const T* p = ep.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      double da, dp;
      if (kind == DistanceKind::cosine) {
        da = -static_cast<double>(p[j]);
        dp = -static_cast<double>(a[j]);
      } else {
        const double dist = out.distances[i];
        da = dist > 0.0 ? (static_cast<double>(a[j]) - p[j]) / dist : 0.0;
        dp = -da;
      }
      ga[i * d + j] = static_cast<T>(dl_dd[i] * da);
      gp[i * d + j] = static_cast<T>(dl_dd[i] * dp);
    }
  }
  out.acoustic = acoustic.backward(tape_a, ga, false);
  out.phonetic = phonetic.backward(tape_p, gp, false);
  return out;
}

template BatchLoss<float> siamese_batch_loss<float>(const Network<float>&, const Network<float>&,
                                                    const Tensor<float>&, const Tensor<float>&,
                                                    std::span<const int>, std::span<const double>, DistanceKind,
                                                    Mode, Rng&, bool);
template BatchLoss<double> siamese_batch_loss<double>(const Network<double>&, const Network<double>&,
                                                      const Tensor<double>&, const Tensor<double>&,
                                                      std::span<const int>, std::span<const double>,
                                                      DistanceKind, Mode, Rng&, bool);

}  // namespace awe
