#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "awe/audio_features.hpp"
#include "awe/corpus.hpp"
#include "awe/siamese.hpp"

namespace awe {

/// Exact range search over fixed-dimension points. Immutable after build.
class KdTree {
 public:
  KdTree() = default;
  /// Throws ContractViolation on empty input or mixed dimensions.
  explicit KdTree(std::vector<std::vector<float>> points);

  std::size_t size() const { return points_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const float> point(std::size_t i) const { return points_[i]; }

  /// Indices of all points p with |p - query| <= radius, ascending.
  std::vector<std::size_t> range_query(std::span<const float> query, double radius) const;
  /// Linear-scan oracle with the same distance arithmetic.
  std::vector<std::size_t> brute_force(std::span<const float> query, double radius) const;

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // slice of order_
    std::size_t axis = 0;
    float split = 0.0f;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, std::span<const float> query, double radius_sq, double radius,
              std::vector<std::size_t>& out) const;

  std::vector<std::vector<float>> points_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Squared Euclidean distance accumulated in double.
double squared_distance(std::span<const float> a, std::span<const float> b);

inline constexpr std::size_t kLeafSize = 8;

struct MiningConfig {
  std::size_t period = 5;
  // Segments sampled per round = growth_c * epoch. Zero means
  // growth_fraction * (unique training segments).
  double growth_c = 0.0;
  double growth_fraction = 0.01;
  double positive_threshold = 0.5;
  // Cap per round. Zero means max_added_fraction * (current train size).
  std::size_t max_added = 0;
  double max_added_fraction = 0.1;
  // Queries per round re-run against the linear scan.
  std::size_t spot_checks = 16;

  bool operator==(const MiningConfig&) const = default;
};

void validate(const MiningConfig& config);
std::string serialize(const MiningConfig& config);
MiningConfig parse_mining_config(const std::string& json_text);

struct MiningRound {
  std::size_t epoch = 0;
  std::size_t sample_size = 0;
  std::size_t queries = 0;
  std::size_t candidates = 0;  // within the radius and not the reference word
  std::size_t added = 0;
  std::size_t train_size = 0;  // after the round
  std::size_t spot_checks = 0;
  double cumulative_growth = 0.0;  // relative to the train size before the first round
};

std::string mining_log_header();
std::string format_mining_round(const MiningRound& round);

/// One self-labeling round. Indexes phonetic embeddings of every distinct
/// word in the train split, probes with acoustic embeddings of sampled train
/// segments and appends each confident false positive that is not already a
/// dataset key as a train-split negative. Ground truth is the segment's
/// reference phones.
MiningRound mine_round(const SiameseModel& model, PairDataset& dataset, const FeatureStore& features,
                       std::size_t epoch, const MiningConfig& config, DistanceKind kind, Rng& rng,
                       std::size_t initial_train_size = 0);

struct MiningAudit {
  std::size_t added = 0;
  std::size_t duplicate_keys = 0;
  std::size_t mislabeled = 0;  // self-labeled negatives whose phones equal the reference phones
  std::size_t outside_train = 0;
};

/// Checks every self-labeled example of `dataset`.
MiningAudit audit_self_labeled(const PairDataset& dataset);

}  // namespace awe
