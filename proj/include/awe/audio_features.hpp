#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace awe {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kWindowSamples = 32000;  // 2 s
inline constexpr std::size_t kFftSize = 400;          // 25 ms
inline constexpr std::size_t kHopSize = 200;
inline constexpr std::size_t kMelBands = 64;
inline constexpr std::size_t kFrames = kWindowSamples / kHopSize + 1;  // 161
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kVarianceFloor = 1e-8;

struct AudioSegment {
  std::vector<float> samples;  // scaled to [-1, 1]
  int sample_rate = kSampleRate;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Band-major 64x161 matrix: at(band, frame).
class MelFeature {
 public:
  static constexpr std::size_t kRows = kMelBands;
  static constexpr std::size_t kCols = kFrames;

  MelFeature() : values_(kRows * kCols, 0.0f) {}

  float at(std::size_t band, std::size_t frame) const { return values_[band * kCols + frame]; }
  float& at(std::size_t band, std::size_t frame) { return values_[band * kCols + frame]; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }
  std::span<const float> band(std::size_t b) const { return {values_.data() + b * kCols, kCols}; }
  std::span<float> band(std::size_t b) { return {values_.data() + b * kCols, kCols}; }

  bool operator==(const MelFeature&) const = default;

 private:
  std::vector<float> values_;
};

struct BandStats {
  std::array<double, kMelBands> mean{};
  std::array<double, kMelBands> std{};
};

/// Centers the segment in a 2 s window: zero-pads short input (extra sample on
/// the right), center-crops long input.
AudioSegment fit_to_window(const AudioSegment& segment);

/// Slaney-style mel filterbank over 0..8000 Hz, one row per band, one column
/// per rfft bin (201).
std::vector<std::vector<double>> mel_filterbank();
/// Center frequency (Hz) of each of the 64 bands.
std::array<double, kMelBands> mel_center_frequencies();

/// Log-power mel spectrogram of a fitted 32000-sample window. Frames are
/// centered with 200 zero samples of padding on each side and Hann-windowed.
class MelSpectrogram {
 public:
  MelSpectrogram();
  ~MelSpectrogram();
  MelSpectrogram(const MelSpectrogram&) = delete;
  MelSpectrogram& operator=(const MelSpectrogram&) = delete;

  MelFeature compute(const AudioSegment& window) const;
  /// Mel energies before the log, same layout as compute().
  std::vector<double> mel_energies(const AudioSegment& window) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

MelFeature mel_spectrogram(const AudioSegment& window);

/// Per-band standardization over the frames of one example.
MelFeature cmvn(const MelFeature& feature);

/// Streaming (count, sum, sum of squares) accumulator for cross-example band
/// statistics. Partial accumulators merge associatively.
class BandStatsAccumulator {
 public:
  void add(const MelFeature& feature);
  void merge(const BandStatsAccumulator& other);
  std::size_t examples() const { return examples_; }
  /// Throws DataError when fewer than two examples were seen.
  BandStats finalize() const;

 private:
  std::size_t examples_ = 0;
  std::size_t frames_ = 0;
  std::array<double, kMelBands> sum_{};
  std::array<double, kMelBands> sumsq_{};
};

BandStats fit_band_stats(std::span<const MelFeature> features);
MelFeature apply_band_stats(const MelFeature& feature, const BandStats& stats);

/// fit_to_window -> mel_spectrogram -> cmvn. Band statistics are applied
/// separately once fitted on the training split.
MelFeature featurize(const MelSpectrogram& extractor, const AudioSegment& segment);

// ---------------------------------------------------------------------------
// Feature cache: header {magic "AWEF", version, bands, frames, count} then per
// record {u32 id length, id bytes, 64*161 little-endian floats}.

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

using FeatureStore = std::map<std::string, MelFeature, std::less<>>;

void save_feature_cache(const std::filesystem::path& path, const FeatureStore& store);
FeatureStore load_feature_cache(const std::filesystem::path& path);

}  // namespace awe
