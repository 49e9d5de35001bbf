#include "awe/audio_features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "awe/error.hpp"

namespace awe {
namespace {

constexpr std::size_t kBins = kFftSize / 2 + 1;
constexpr double kNyquist = kSampleRate / 2.0;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
constexpr double kLinearStep = 200.0 / 3.0;
constexpr double kLogOnsetHz = 1000.0;
constexpr double kLogOnsetMel = kLogOnsetHz / kLinearStep;

double log_step() { return std::log(6.4) / 27.0; }

double hz_to_mel(double hz) {
  if (hz < kLogOnsetHz) return hz / kLinearStep;
  return kLogOnsetMel + std::log(hz / kLogOnsetHz) / log_step();
}

double mel_to_hz(double mel) {
  if (mel < kLogOnsetMel) return mel * kLinearStep;
  return kLogOnsetHz * std::exp(log_step() * (mel - kLogOnsetMel));
}

std::array<double, kMelBands + 2> mel_edges_hz() {
  std::array<double, kMelBands + 2> edges{};
  const double lo = hz_to_mel(0.0);
  const double hi = hz_to_mel(kNyquist);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (kMelBands + 1));
  }
  return edges;
}

}  // namespace

AudioSegment fit_to_window(const AudioSegment& segment) {
  require(!segment.samples.empty(), "cannot fit an empty audio segment");
  require(segment.sample_rate == kSampleRate, "audio segment must be sampled at 16 kHz");

  AudioSegment out;
  out.sample_rate = kSampleRate;
  const std::size_t n = segment.samples.size();
  if (n <= kWindowSamples) {
    out.samples.assign(kWindowSamples, 0.0f);
    const std::size_t left = (kWindowSamples - n) / 2;
    std::copy(segment.samples.begin(), segment.samples.end(), out.samples.begin() + left);
  } else {
    const std::size_t start = (n - kWindowSamples) / 2;
    out.samples.assign(segment.samples.begin() + start,
                       segment.samples.begin() + start + kWindowSamples);
  }
  return out;
}

std::vector<std::vector<double>> mel_filterbank() {
  const auto edges = mel_edges_hz();
  std::vector<std::vector<double>> bank(kMelBands, std::vector<double>(kBins, 0.0));
  for (std::size_t m = 0; m < kMelBands; ++m) {
    const double lower = edges[m], center = edges[m + 1], upper = edges[m + 2];
    const double norm = 2.0 / (upper - lower);
    for (std::size_t k = 0; k < kBins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kFftSize;
      const double rising = (f - lower) / (center - lower);
      const double falling = (upper - f) / (upper - center);
      bank[m][k] = norm * std::max(0.0, std::min(rising, falling));
    }
  }
  return bank;
}

std::array<double, kMelBands> mel_center_frequencies() {
  const auto edges = mel_edges_hz();
  std::array<double, kMelBands> centers{};
  for (std::size_t m = 0; m < kMelBands; ++m) centers[m] = edges[m + 1];
  return centers;
}

// ---------------------------------------------------------------------------

struct MelSpectrogram::Impl {
  std::array<double, kFftSize> window{};
  std::vector<std::vector<double>> bank;
  // Sparse view of the filterbank: first nonzero bin and weights per band.
  std::vector<std::size_t> first_bin;
  std::vector<std::vector<double>> weights;
  double* frame = nullptr;
  fftw_complex* spectrum = nullptr;
  fftw_plan plan = nullptr;

  Impl() {
    for (std::size_t n = 0; n < kFftSize; ++n) {
      window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / kFftSize);
    }
    bank = mel_filterbank();
    for (const auto& row : bank) {
      std::size_t lo = 0;
      while (lo < kBins && row[lo] == 0.0) ++lo;
      std::size_t hi = kBins;
      while (hi > lo && row[hi - 1] == 0.0) --hi;
      first_bin.push_back(lo);
      weights.emplace_back(row.begin() + lo, row.begin() + hi);
    }
    frame = fftw_alloc_real(kFftSize);
    spectrum = fftw_alloc_complex(kBins);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), frame, spectrum, FFTW_ESTIMATE);
  }

  ~Impl() {
    fftw_destroy_plan(plan);
    fftw_free(frame);
    fftw_free(spectrum);
  }
};

MelSpectrogram::MelSpectrogram() : impl_(std::make_unique<Impl>()) {}
MelSpectrogram::~MelSpectrogram() = default;

std::vector<double> MelSpectrogram::mel_energies(const AudioSegment& window) const {
  require(window.samples.size() == kWindowSamples,
          "mel_spectrogram expects exactly 32000 samples, got " +
              std::to_string(window.samples.size()));
  auto& im = *impl_;
  const auto& x = window.samples;
  const std::ptrdiff_t pad = kFftSize / 2;
  std::vector<double> energies(kMelBands * kFrames, 0.0);
  std::array<double, kBins> power{};

  for (std::size_t t = 0; t < kFrames; ++t) {
    const std::ptrdiff_t origin = static_cast<std::ptrdiff_t>(t * kHopSize) - pad;
    for (std::size_t n = 0; n < kFftSize; ++n) {
      const std::ptrdiff_t idx = origin + static_cast<std::ptrdiff_t>(n);
      const double s = (idx >= 0 && idx < static_cast<std::ptrdiff_t>(x.size())) ? x[idx] : 0.0;
      im.frame[n] = s * im.window[n];
    }
    fftw_execute(im.plan);
    for (std::size_t k = 0; k < kBins; ++k) {
      power[k] = im.spectrum[k][0] * im.spectrum[k][0] + im.spectrum[k][1] * im.spectrum[k][1];
    }
    for (std::size_t m = 0; m < kMelBands; ++m) {
      const auto& w = im.weights[m];
      double acc = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * power[im.first_bin[m] + j];
      energies[m * kFrames + t] = acc;
    }
  }
  return energies;
}

MelFeature MelSpectrogram::compute(const AudioSegment& window) const {
  const auto energies = mel_energies(window);
  MelFeature out;
  auto values = out.values();
  for (std::size_t i = 0; i < energies.size(); ++i) {
    values[i] = static_cast<float>(std::log(energies[i] + kLogFloor));
  }
  return out;
}

MelFeature mel_spectrogram(const AudioSegment& window) {
  static const MelSpectrogram extractor;
  return extractor.compute(window);
}

MelFeature cmvn(const MelFeature& feature) {
  MelFeature out;
  for (std::size_t b = 0; b < kMelBands; ++b) {
    const auto row = feature.band(b);
    double sum = 0.0;
    for (float v : row) sum += v;
    const double mean = sum / kFrames;
    double sq = 0.0;
    for (float v : row) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(std::max(sq / kFrames, kVarianceFloor));
    auto dst = out.band(b);
    for (std::size_t t = 0; t < kFrames; ++t) dst[t] = static_cast<float>((row[t] - mean) / sd);
  }
  return out;
}

// ---------------------------------------------------------------------------

void BandStatsAccumulator::add(const MelFeature& feature) {
  for (std::size_t b = 0; b < kMelBands; ++b) {
    for (float v : feature.band(b)) {
      sum_[b] += v;
      sumsq_[b] += static_cast<double>(v) * v;
    }
  }
  frames_ += kFrames;
  ++examples_;
}

void BandStatsAccumulator::merge(const BandStatsAccumulator& other) {
  for (std::size_t b = 0; b < kMelBands; ++b) {
    sum_[b] += other.sum_[b];
    sumsq_[b] += other.sumsq_[b];
  }
  frames_ += other.frames_;
  examples_ += other.examples_;
}

BandStats BandStatsAccumulator::finalize() const {
  if (examples_ < 2) throw DataError("band statistics need at least two examples");
  BandStats stats;
  const double n = static_cast<double>(frames_);
  for (std::size_t b = 0; b < kMelBands; ++b) {
    const double mean = sum_[b] / n;
    const double var = std::max(sumsq_[b] / n - mean * mean, 0.0);
    stats.mean[b] = mean;
    stats.std[b] = std::sqrt(std::max(var, kVarianceFloor));
  }
  return stats;
}

BandStats fit_band_stats(std::span<const MelFeature> features) {
  BandStatsAccumulator acc;
  for (const auto& f : features) acc.add(f);
  return acc.finalize();
}

MelFeature apply_band_stats(const MelFeature& feature, const BandStats& stats) {
  MelFeature out;
  for (std::size_t b = 0; b < kMelBands; ++b) {
    const auto src = feature.band(b);
    auto dst = out.band(b);
    for (std::size_t t = 0; t < kFrames; ++t) {
      dst[t] = static_cast<float>((src[t] - stats.mean[b]) / stats.std[b]);
    }
  }
  return out;
}

MelFeature featurize(const MelSpectrogram& extractor, const AudioSegment& segment) {
  return cmvn(extractor.compute(fit_to_window(segment)));
}

// ---------------------------------------------------------------------------
// Feature cache

namespace {

constexpr char kFeatureMagic[4] = {'A', 'W', 'E', 'F'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("truncated feature cache");
  return value;
}

}  // namespace

void save_feature_cache(const std::filesystem::path& path, const FeatureStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature cache: " + path.string());
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  write_pod(out, kFeatureCacheVersion);
  write_pod(out, static_cast<std::uint32_t>(kMelBands));
  write_pod(out, static_cast<std::uint32_t>(kFrames));
  write_pod(out, static_cast<std::uint64_t>(store.size()));
  for (const auto& [id, feat] : store) {
    write_pod(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    out.write(reinterpret_cast<const char*>(feat.values().data()),
              static_cast<std::streamsize>(feat.values().size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing feature cache: " + path.string());
}

FeatureStore load_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read feature cache: " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
    throw DataError("not a feature cache: " + path.string());
  }
  if (read_pod<std::uint32_t>(in) != kFeatureCacheVersion) {
    throw DataError("unsupported feature cache version");
  }
  if (read_pod<std::uint32_t>(in) != kMelBands || read_pod<std::uint32_t>(in) != kFrames) {
    throw DataError("feature cache has unexpected dimensions");
  }
  const auto count = read_pod<std::uint64_t>(in);
  FeatureStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_pod<std::uint32_t>(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    MelFeature feat;
    in.read(reinterpret_cast<char*>(feat.values().data()),
            static_cast<std::streamsize>(feat.values().size() * sizeof(float)));
    if (!in) throw DataError("truncated feature cache");
    store.emplace(std::move(id), std::move(feat));
  }
  return store;
}

}  // namespace awe
