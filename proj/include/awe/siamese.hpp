#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "awe/audio_features.hpp"
#include "awe/network.hpp"
#include "awe/phonetics.hpp"

namespace awe {

enum class Modality { acoustic, phonetic };
enum class DistanceKind { cosine, euclidean };
enum class MarginMode { fixed, edit_distance };

std::string to_string(DistanceKind kind);
DistanceKind distance_kind_from_string(const std::string& name);
std::string to_string(MarginMode mode);
MarginMode margin_mode_from_string(const std::string& name);

/// Layer stack shared by both encoders. The defaults are the two-block CNN:
/// [conv 3x3x64 -> max-pool 2x2] x2, dense 512, dropout 0.4, dense 512,
/// linear projection to a 512-D embedding, l2 normalization. Only the
/// acoustic encoder gets the input dropout.
struct EncoderConfig {
  std::vector<std::size_t> conv_channels{64, 64};
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::vector<std::size_t> dense_units{512, 512};
  double dense_dropout = 0.4;
  double acoustic_input_dropout = 0.2;
  std::size_t embedding_dim = 512;

  bool operator==(const EncoderConfig&) const = default;
};

std::string serialize(const EncoderConfig& config);
EncoderConfig parse_encoder_config(const std::string& text);

std::vector<LayerSpec> encoder_layers(const EncoderConfig& config, Modality modality);
Shape input_shape(Modality modality);

using Embedding = std::vector<float>;

/// Acoustic encoder f and phonetic encoder g.
class SiameseModel {
 public:
  SiameseModel() = default;
  SiameseModel(EncoderConfig config, Network<float> acoustic, Network<float> phonetic);

  /// Builds both encoders and initializes them from `seed`.
  static SiameseModel create(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  const Network<float>& acoustic() const { return acoustic_; }
  const Network<float>& phonetic() const { return phonetic_; }
  Network<float>& acoustic() { return acoustic_; }
  Network<float>& phonetic() { return phonetic_; }

  /// Acoustic parameters first, then phonetic.
  std::vector<ParameterRef<float>> parameters();

  /// Eval-mode embeddings.
  Embedding embed_acoustic(const MelFeature& feature) const;
  Embedding embed_phonetic(const PhoneSequence& phones) const;
  std::vector<Embedding> embed_acoustic(std::span<const MelFeature* const> features) const;
  std::vector<Embedding> embed_phonetic(std::span<const PhoneSequence* const> phones) const;

  /// Applies the max-norm constraint to the dropout-adjacent layers of both
  /// encoders. Returns the number of rescaled units.
  std::size_t constrain(double max_norm);
  double max_constrained_norm() const;

 private:
  EncoderConfig config_;
  Network<float> acoustic_;
  Network<float> phonetic_;
};

template <typename T>
Tensor<T> acoustic_batch(std::span<const MelFeature* const> features);
template <typename T>
Tensor<T> phonetic_batch(std::span<const PhoneSequence* const> phones);

// ---------------------------------------------------------------------------
// Distances on unit vectors.

inline constexpr double kUnitNormTolerance = 1e-3;

/// cosine: 1 - a.b in [0, 2]; euclidean: |a - b| in [0, 2]. Throws
/// ContractViolation if either input is not unit length within tolerance.
double distance(std::span<const float> a, std::span<const float> b, DistanceKind kind);

template <typename T>
double distance_unchecked(std::span<const T> a, std::span<const T> b, DistanceKind kind);

/// Maps a distance threshold to the Euclidean radius that selects the same
/// unit vectors (|a-b|^2 = 2 (1 - a.b)).
double euclidean_radius(double threshold, DistanceKind kind);

// ---------------------------------------------------------------------------
// Contrastive loss: mean of (1-y) D^2 + y max(0, m - D)^2. y = 0 marks a
// same-word pair, y = 1 a different-word pair.

double contrastive_loss(std::span<const double> distances, std::span<const int> labels,
                        std::span<const double> margins);

/// dL/dD per example (already divided by N). Zero for negatives at or beyond
/// their margin.
std::vector<double> contrastive_loss_gradient(std::span<const double> distances, std::span<const int> labels,
                                              std::span<const double> margins);

template <typename T>
struct BatchLoss {
  double loss = 0.0;
  std::vector<double> distances;
  Gradients<T> acoustic;
  Gradients<T> phonetic;
};

/// Forward both encoders on a batch of pairs, evaluate the loss and, when
/// `with_gradients` is set (train mode only), backpropagate into both
/// encoders. Acoustic dropout masks are drawn from `rng` before phonetic ones.
template <typename T>
BatchLoss<T> siamese_batch_loss(const Network<T>& acoustic, const Network<T>& phonetic,
                                const Tensor<T>& acoustic_input, const Tensor<T>& phonetic_input,
                                std::span<const int> labels, std::span<const double> margins, DistanceKind kind,
                                Mode mode, Rng& rng, bool with_gradients);

}  // namespace awe
