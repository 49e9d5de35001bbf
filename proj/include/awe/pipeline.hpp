#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "awe/corpus.hpp"
#include "awe/evaluation.hpp"
#include "awe/self_labeling.hpp"
#include "awe/siamese.hpp"
#include "awe/synthetic.hpp"
#include "awe/trainer.hpp"

namespace awe {

inline constexpr int kRunConfigVersion = 1;

/// Empty entries fall back to the standard file names inside `corpus_dir`
/// (the layout written by write_synthetic_corpus). Relative paths resolve
/// against the working directory.
struct RunPaths {
  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path alignments;
  std::filesystem::path lexicon;
  std::filesystem::path inventory;
  std::filesystem::path stop_words;
  // A manifest from a previous `mine`; when empty, train mines in-process.
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "runs";

  bool operator==(const RunPaths&) const = default;
};

/// Everything one run needs. `seed` drives the split, initialization,
/// batch order, dropout and self-labeling samples; the corpus has its own
/// seed inside `synthetic`.
struct RunConfig {
  std::uint64_t seed = 0;
  RunPaths paths;
  SyntheticConfig synthetic;
  EncoderConfig encoder;
  TrainConfig train;
  MiningConfig mining;
  bool self_labeling = true;
  SplitFractions split;
  bool segment_disjoint = false;
  double synthesis_max_distance = kSynthesisMaxDistance;
  double min_duration_s = kMinDurationSeconds;
  double threshold = kDefaultThreshold;

  bool operator==(const RunConfig&) const = default;
};

/// Versioned JSON. Sections may be partial; missing keys keep their
/// defaults. Throws ConfigError naming the field, including a missing seed.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize(const RunConfig& config);
void validate(const RunConfig& config);
/// Throws ConfigError when an input file the run reads does not exist.
void check_input_paths(const RunConfig& config, bool need_manifest = false);

/// FNV-1a over the serialized config.
std::uint64_t config_hash(const RunConfig& config);
/// <output_dir>/<command>-<hash>-<YYYYmmdd-HHMMSS>.
std::filesystem::path run_directory(const RunConfig& config, const std::string& command);

struct ResolvedPaths {
  std::filesystem::path alignments, lexicon, inventory, stop_words;
};
ResolvedPaths resolve_paths(const RunPaths& paths);

struct CorpusFiles {
  PhoneInventory inventory;
  Lexicon lexicon;
  std::set<std::string, std::less<>> stop_words;
  std::vector<AlignmentRecord> records;
  std::filesystem::path audio_base;  // wav paths in the records are relative to this
};

/// An inventory file is optional; without one the ARPAbet set is used.
CorpusFiles load_corpus(const RunPaths& paths);

MiningOptions mining_options(const RunConfig& config);

/// mine_dataset with the run's options. Throws DataError when no positive
/// pair survives, since nothing can be trained from that.
PairDataset build_dataset(const RunConfig& config, const CorpusFiles& corpus, MiningReport* report = nullptr);

struct PreparedFeatures {
  FeatureStore features;
  BandStats band_stats;
};

/// Features for every segment in `dataset`, normalized with `band_stats`
/// when given, else with statistics fitted on the train segments.
PreparedFeatures prepare_features(const CorpusFiles& corpus, const PairDataset& dataset,
                                  const std::optional<BandStats>& band_stats = std::nullopt);

struct TrainingCallbacks {
  std::function<void(const EpochMetrics&, const SiameseModel&)> on_epoch;
  std::function<void(const MiningRound&)> on_round;
  std::function<void(const ModelCheckpoint&)> on_divergence;
};

struct TrainingOutcome {
  TrainResult result;
  std::vector<MiningRound> rounds;
  MiningAudit audit;
  std::size_t initial_train_size = 0;
};

/// Builds the model from `config.seed` and trains it, with self-labeling
/// when enabled. Self-labeled pairs are appended to `dataset`.
TrainingOutcome train_model(const RunConfig& config, const PhoneInventory& inventory, PairDataset& dataset,
                            const PreparedFeatures& prepared, const TrainingCallbacks& callbacks = {});

struct SplitEvaluation {
  ClassificationReport report;  // the split's labeled pairs at the threshold
  SweepResult sweep;            // every segment of the split against every word in it
};

SplitEvaluation evaluate_split(const SiameseModel& model, const PairDataset& dataset, Split split,
                               const FeatureStore& features, DistanceKind kind, double threshold = kDefaultThreshold);

std::string format_report(const SplitEvaluation& evaluation);

}  // namespace awe
