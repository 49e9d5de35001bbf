#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "awe/audio_features.hpp"
#include "awe/corpus.hpp"
#include "awe/siamese.hpp"

namespace awe {

struct ScoredPair {
  std::string segment_id;
  std::string word;
  int label = 0;
  double distance = 0.0;

  bool operator==(const ScoredPair&) const = default;
};

/// Eval-mode distance for each pair, in input order.
std::vector<ScoredPair> score_pairs(const SiameseModel& model, std::span<const PairExample* const> pairs,
                                    const FeatureStore& features, DistanceKind kind);

inline constexpr double kDefaultThreshold = 0.5;

/// Positive class = similar-sounding (y = 0); predicted similar iff D < threshold.
struct ClassificationReport {
  double threshold = kDefaultThreshold;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

ClassificationReport classify(std::span<const ScoredPair> scores, double threshold = kDefaultThreshold);
/// Same metrics from raw counts; F1 is 0 when precision + recall is 0.
ClassificationReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn,
                                         double threshold);

struct CurvePoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct SweepResult {
  std::uint64_t pairs = 0;
  std::uint64_t positives = 0;
  double min_distance = 0.0;
  double max_distance = 0.0;
  double break_even_threshold = 0.0;
  double break_even_precision = 0.0;
  double break_even_recall = 0.0;
  std::vector<CurvePoint> curve;  // one point per histogram edge with a change
};

inline constexpr std::size_t kSweepBins = 65536;

/// Streams every acoustic x phonetic distance twice (range, then histogram)
/// without storing them. `is_positive(i, j)` gives the ground truth of
/// acoustic item i against phonetic item j.
SweepResult all_pairs_sweep(std::span<const Embedding> acoustic, std::span<const Embedding> phonetic,
                            const std::function<bool(std::size_t, std::size_t)>& is_positive, DistanceKind kind,
                            std::size_t bins = kSweepBins);

std::string format_report(const ClassificationReport& report);
std::string format_report(const SweepResult& sweep);

struct EmbeddingRow {
  std::string id;
  Modality modality = Modality::acoustic;
  Embedding values;

  bool operator==(const EmbeddingRow&) const = default;
};

inline constexpr int kEmbeddingFormatVersion = 1;

/// Text table: a header line "awe-embeddings <version> <dim> <rows>", then
/// one tab-separated row per item with shortest round-trip floats.
void export_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRow> rows, std::size_t dim);
std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path);

}  // namespace awe
