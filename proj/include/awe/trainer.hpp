#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "awe/audio_features.hpp"
#include "awe/corpus.hpp"
#include "awe/network.hpp"
#include "awe/siamese.hpp"

namespace awe {

struct TrainConfig {
  DistanceKind distance = DistanceKind::cosine;
  MarginMode margin_mode = MarginMode::fixed;
  double margin = 1.0;
  std::size_t batch_size = 128;
  double initial_lr = 0.001;
  std::size_t plateau_patience = 2;
  // A dev loss counts as an improvement only if it beats the best by more than this.
  double plateau_tolerance = 1e-4;
  double lr_factor = 2.0;
  double lr_max = 0.001;
  double max_norm = 3.0;
  std::size_t epochs = 60;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

/// Throws ConfigError naming the offending field.
void validate(const TrainConfig& config);
std::string serialize(const TrainConfig& config);
TrainConfig parse_train_config(const std::string& json_text);

/// Halves the rate after `patience` epochs without improvement; multiplies
/// it by `factor` (capped at `lr_max`) when mining adds examples.
class LearningRateSchedule {
 public:
  LearningRateSchedule() = default;
  explicit LearningRateSchedule(const TrainConfig& config);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t stale_epochs() const { return stale_; }

  /// Returns true when the rate was halved.
  bool on_epoch_end(double dev_loss);
  /// No effect when nothing was added. Returns true when the rate changed
  /// or the plateau counter was reset.
  bool on_mining(std::size_t added);

 private:
  double lr_ = 0.001;
  double factor_ = 2.0;
  double lr_max_ = 0.001;
  std::size_t patience_ = 2;
  double tolerance_ = 1e-4;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t stale_ = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double lr = 0.0;  // rate used during the epoch
  std::size_t train_size = 0;
  std::size_t mined = 0;
};

std::string metrics_header();
std::string format_metrics(const EpochMetrics& m);

/// Checkpoint: both encoders, optimizer state, schedule position, band
/// statistics and the phone inventory they were trained with.
struct ModelCheckpoint {
  SiameseModel model;
  AdamState<float> optimizer;
  double learning_rate = 0.001;
  std::size_t epoch = 0;
  TrainConfig train;
  BandStats band_stats;
  std::vector<std::string> inventory;
  std::uint64_t inventory_hash = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& checkpoint);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Throws DataError when the checkpoint was trained with another inventory.
void check_inventory(const ModelCheckpoint& checkpoint, const PhoneInventory& inventory);

struct TrainHooks {
  // Self-labeling: called every `mining_period` epochs (0 disables) after the
  // dev evaluation; returns the number of examples appended to the dataset.
  std::size_t mining_period = 0;
  std::function<std::size_t(std::size_t epoch, const SiameseModel& model, PairDataset& dataset)> mine;
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(std::size_t step, double loss, const SiameseModel& model)> on_step;
  // Called with the current state before a DivergenceError propagates.
  std::function<void(const ModelCheckpoint&)> on_divergence;
};

struct TrainResult {
  ModelCheckpoint best;   // lowest dev loss
  ModelCheckpoint last;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
};

/// Per-example margins: the fixed margin, or the phonetic edit distance
/// between the pair's phones and the segment's reference phones.
std::vector<double> pair_margins(std::span<const PairExample* const> batch, const TrainConfig& config);

/// Mean contrastive loss in eval mode over the given pairs.
double evaluate_loss(const SiameseModel& model, std::span<const PairExample* const> pairs,
                     const FeatureStore& features, const TrainConfig& config);

class Trainer {
 public:
  Trainer(SiameseModel model, TrainConfig config, const FeatureStore& features, BandStats band_stats,
          const PhoneInventory& inventory);

  /// Trains on the train split and evaluates on the dev split of `dataset`.
  /// Mining hooks may append to `dataset`.
  TrainResult train(PairDataset& dataset, const TrainHooks& hooks = {});

  /// One optimizer step on the given pairs. Returns the batch loss.
  double step(std::span<const PairExample* const> batch);

  const SiameseModel& model() const { return model_; }
  const AdamState<float>& optimizer() const { return adam_; }
  const LearningRateSchedule& schedule() const { return schedule_; }
  ModelCheckpoint checkpoint(std::size_t epoch) const;

 private:
  SiameseModel model_;
  TrainConfig config_;
  const FeatureStore& features_;
  BandStats band_stats_;
  std::vector<std::string> inventory_;
  std::uint64_t inventory_hash_ = 0;
  AdamState<float> adam_;
  LearningRateSchedule schedule_;
  Rng rng_;
};

}  // namespace awe
