#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "awe/phonetics.hpp"

namespace awe {

/// One human-transcribed word with the ASR words aligned to the same span.
struct AlignmentRecord {
  std::string segment_id;
  std::string wav_path;  // relative paths resolve against the records file
  double start_s = 0.0;
  double end_s = 0.0;
  std::string human_word;
  std::vector<std::string> hypothesis_words;
  bool aligned_ok = true;

  double duration() const { return end_s - start_s; }
  bool operator==(const AlignmentRecord&) const = default;
};

inline constexpr int kAlignmentFormatVersion = 1;

/// JSON lines; the first line is a header {"format": "awe-alignments", "version": 1}.
std::vector<AlignmentRecord> read_alignments(const std::filesystem::path& path);
void write_alignments(const std::filesystem::path& path, const std::vector<AlignmentRecord>& records);

enum class Origin { positive, substitution, synthesized, self_labeled };
enum class Split { none, train, dev, test };

std::string to_string(Origin origin);
Origin origin_from_string(const std::string& name);
std::string to_string(Split split);
Split split_from_string(const std::string& name);

/// An (audio segment, phone sequence) pair. y = 0 for the same word, 1 otherwise.
struct PairExample {
  std::string segment_id;
  std::string word;
  PhoneSequence phones;
  int label = 0;
  Origin origin = Origin::positive;
  Split split = Split::none;
  // What a human said in the segment; the ground truth for audits.
  std::string reference_word;
  PhoneSequence reference_phones;
  // Model distance at the time a self-labeled example was mined.
  std::optional<double> mined_distance;

  bool operator==(const PairExample&) const = default;
};

using PairKey = std::pair<std::string, PhoneSequence>;
inline PairKey key_of(const PairExample& e) { return {e.segment_id, e.phones}; }

struct PairDataset {
  std::vector<PairExample> examples;

  std::set<PairKey> keys() const;
  /// Pointers into `examples`; appending (as self-labeling does) invalidates them.
  std::vector<const PairExample*> split(Split s) const;
  std::size_t count(Split s) const;
  std::size_t count(Split s, int label) const;
};

struct PositiveReport {
  std::size_t emitted = 0;
  std::size_t misaligned = 0;
  std::size_t no_match = 0;
  std::size_t out_of_vocabulary = 0;
  std::size_t duplicate_segments = 0;
};

struct NegativeReport {
  std::size_t emitted = 0;
  std::size_t out_of_vocabulary = 0;
  std::size_t homophones = 0;
  std::size_t duplicates = 0;
};

std::vector<PairExample> extract_positives(const std::vector<AlignmentRecord>& records, const Lexicon& lexicon,
                                           PositiveReport* report = nullptr);

/// Only segments that produced a positive contribute.
std::vector<PairExample> extract_substitution_negatives(const std::vector<AlignmentRecord>& records,
                                                        const Lexicon& lexicon,
                                                        const std::vector<PairExample>& positives,
                                                        NegativeReport* report = nullptr);

inline constexpr double kSynthesisMaxDistance = 0.7;

/// Groups substitution negatives closer than `max_dist` to their reference
/// word and crosses every member segment with the other members'
/// hypotheses. Returns only pairs whose key is not in `existing`.
std::vector<PairExample> synthesize_negatives(const std::vector<PairExample>& negatives,
                                              const std::set<PairKey>& existing,
                                              double max_dist = kSynthesisMaxDistance);

inline constexpr double kMinDurationSeconds = 0.2;

struct FilterReport {
  std::size_t kept = 0;
  std::size_t stop_words = 0;
  std::size_t too_short = 0;
};

/// Drops examples whose word or reference word is a stop word, or whose
/// segment is shorter than `min_duration_s` (strict). Every segment needs an
/// entry in `durations`.
PairDataset filter_dataset(const PairDataset& ds, const std::set<std::string, std::less<>>& stop_words,
                           const std::map<std::string, double, std::less<>>& durations,
                           double min_duration_s = kMinDurationSeconds, FilterReport* report = nullptr);

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;

  bool operator==(const SplitFractions&) const = default;
};

/// Label-stratified split, deterministic in `seed`. With `segment_disjoint`
/// whole segments are assigned instead and per-class counts are approximate.
PairDataset stratified_split(const PairDataset& ds, const SplitFractions& fractions, std::uint64_t seed,
                             bool segment_disjoint = false);

std::set<std::string, std::less<>> load_stop_words(const std::filesystem::path& path);

inline constexpr int kManifestFormatVersion = 1;

/// JSON lines with a header carrying the inventory hash; phones are written
/// as space-separated symbols.
void write_manifest(const std::filesystem::path& path, const PairDataset& ds, const PhoneInventory& inventory);
PairDataset read_manifest(const std::filesystem::path& path, const PhoneInventory& inventory);

struct MiningOptions {
  double synthesis_max_distance = kSynthesisMaxDistance;
  double min_duration_s = kMinDurationSeconds;
  SplitFractions fractions;
  bool segment_disjoint = false;
  std::uint64_t seed = 0;
};

struct MiningReport {
  PositiveReport positives;
  NegativeReport negatives;
  std::size_t synthesized = 0;
  FilterReport filter;
  std::map<std::string, std::size_t> split_counts;  // "train/0", "train/1", ...
};

/// The full pipeline from alignment records to a split dataset.
PairDataset mine_dataset(const std::vector<AlignmentRecord>& records, const Lexicon& lexicon,
                         const std::set<std::string, std::less<>>& stop_words, const MiningOptions& options,
                         MiningReport* report = nullptr);

std::string format_report(const MiningReport& report);

}  // namespace awe
