#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "awe/audio_features.hpp"
#include "awe/corpus.hpp"
#include "awe/phonetics.hpp"

namespace awe {

/// Desk-scale stand-in for a transcribed speech corpus. Every phone has a
/// fixed two-tone signature lasting 100 ms; words are phone concatenations,
/// utterances are words separated by silence. ASR hypotheses are the human
/// word, or with probability `substitution_rate` one of its nearest
/// vocabulary neighbors.
struct SyntheticConfig {
  std::size_t vocab_size = 50;
  std::size_t phone_count = 20;
  std::size_t min_phones = 3;
  std::size_t max_phones = 6;
  // Share of the vocabulary built as one-edit variants of earlier words.
  double mutant_fraction = 0.5;
  std::size_t utterances = 350;
  std::size_t words_per_utterance = 4;
  std::size_t hypotheses_per_segment = 3;
  double substitution_rate = 0.3;
  std::size_t substitution_neighbors = 3;
  double misalignment_rate = 0.02;
  std::size_t stop_word_count = 4;
  double stop_word_rate = 0.1;
  double noise_level = 0.01;
  double frequency_jitter = 0.02;
  std::uint64_t seed = 7;

  bool operator==(const SyntheticConfig&) const = default;
};

/// Throws ConfigError naming the offending field.
void validate(const SyntheticConfig& config);
std::string serialize(const SyntheticConfig& config);
SyntheticConfig parse_synthetic_config(const std::string& json_text);

inline constexpr std::size_t kSamplesPerPhone = kSampleRate / 10;

struct PhoneSignature {
  double low_hz = 0.0;
  double high_hz = 0.0;
};

struct SyntheticCorpus {
  PhoneInventory inventory;
  Lexicon lexicon;  // vocabulary plus stop words
  std::vector<std::string> vocabulary;
  std::set<std::string, std::less<>> stop_words;
  std::map<PhoneIndex, PhoneSignature> signatures;
  std::map<std::string, std::vector<std::string>> neighbors;
  std::vector<AlignmentRecord> records;
  std::vector<AudioSegment> utterances;  // utterances[i] backs wavs/u<i>.wav
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config);

/// Renders one word: 100 ms per phone, seeded gain and frequency jitter.
AudioSegment render_word(const PhoneSequence& phones, const std::map<PhoneIndex, PhoneSignature>& signatures,
                         double frequency_jitter, std::uint64_t seed);

/// Layout: alignments.jsonl, lexicon.txt, inventory.txt, stop_words.txt,
/// synth_config.json and wavs/.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const SyntheticConfig& config,
                            const std::filesystem::path& dir);

}  // namespace awe
