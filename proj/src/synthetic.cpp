#include "awe/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "awe/error.hpp"
#include "awe/wav_io.hpp"

namespace awe {

namespace {

void check(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("synthetic config: " + field + " " + why);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string word_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "W%03zu", i);
  return buf;
}

std::string utterance_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "u%05zu", i);
  return buf;
}

std::vector<PhoneIndex> random_word(std::mt19937_64& rng, const std::vector<PhoneIndex>& phones, std::size_t lo,
                                    std::size_t hi) {
  const std::size_t len = lo + pick(rng, hi - lo + 1);
  std::vector<PhoneIndex> w(len);
  for (auto& p : w) p = phones[pick(rng, phones.size())];
  return w;
}

// One substitution, insertion or deletion, kept within the length bounds.
std::vector<PhoneIndex> mutate(std::mt19937_64& rng, std::vector<PhoneIndex> w, const std::vector<PhoneIndex>& phones,
                               std::size_t lo, std::size_t hi) {
  std::vector<int> ops{0};
  if (w.size() < hi) ops.push_back(1);
  if (w.size() > lo) ops.push_back(2);
  const int op = ops[pick(rng, ops.size())];
  if (op == 0) {
    const std::size_t at = pick(rng, w.size());
    PhoneIndex p;
    do {
      p = phones[pick(rng, phones.size())];
    } while (p == w[at]);
    w[at] = p;
  } else if (op == 1) {
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(pick(rng, w.size() + 1)), phones[pick(rng, phones.size())]);
  } else {
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick(rng, w.size())));
  }
  return w;
}

}  // namespace

void validate(const SyntheticConfig& c) {
  check(c.vocab_size >= 2, "vocab_size", "must be at least 2");
  check(c.phone_count >= 2 && c.phone_count <= kRealPhoneCount, "phone_count", "must be in [2, 69]");
  check(c.min_phones >= 1, "min_phones", "must be at least 1");
  check(c.max_phones <= kMaxPhones && c.max_phones >= c.min_phones, "max_phones", "must be in [min_phones, 20]");
  check(c.mutant_fraction >= 0.0 && c.mutant_fraction <= 1.0, "mutant_fraction", "must be in [0, 1]");
  check(c.utterances >= 1, "utterances", "must be at least 1");
  check(c.words_per_utterance >= 1, "words_per_utterance", "must be at least 1");
  check(c.hypotheses_per_segment >= 1, "hypotheses_per_segment", "must be at least 1");
  check(c.substitution_rate >= 0.0 && c.substitution_rate <= 1.0, "substitution_rate", "must be in [0, 1]");
  check(c.substitution_neighbors >= 1 && c.substitution_neighbors < c.vocab_size, "substitution_neighbors",
        "must be in [1, vocab_size)");
  check(c.misalignment_rate >= 0.0 && c.misalignment_rate <= 1.0, "misalignment_rate", "must be in [0, 1]");
  check(c.stop_word_rate >= 0.0 && c.stop_word_rate < 1.0, "stop_word_rate", "must be in [0, 1)");
  check(c.stop_word_rate == 0.0 || c.stop_word_count > 0, "stop_word_count", "must be positive when stop_word_rate > 0");
  check(c.noise_level >= 0.0 && c.noise_level < 0.5, "noise_level", "must be in [0, 0.5)");
  check(c.frequency_jitter >= 0.0 && c.frequency_jitter < 0.2, "frequency_jitter", "must be in [0, 0.2)");
  // Distinct sequences available for the vocabulary.
  double available = 0.0;
  for (std::size_t len = c.min_phones; len <= c.max_phones; ++len) {
    available += std::pow(static_cast<double>(c.phone_count), static_cast<double>(len));
  }
  check(available >= 2.0 * static_cast<double>(c.vocab_size + c.stop_word_count), "vocab_size",
        "is too large for the phone set and word lengths");
}

std::string serialize(const SyntheticConfig& c) {
  nlohmann::json j{{"vocab_size", c.vocab_size},
                   {"phone_count", c.phone_count},
                   {"min_phones", c.min_phones},
                   {"max_phones", c.max_phones},
                   {"mutant_fraction", c.mutant_fraction},
                   {"utterances", c.utterances},
                   {"words_per_utterance", c.words_per_utterance},
                   {"hypotheses_per_segment", c.hypotheses_per_segment},
                   {"substitution_rate", c.substitution_rate},
                   {"substitution_neighbors", c.substitution_neighbors},
                   {"misalignment_rate", c.misalignment_rate},
                   {"stop_word_count", c.stop_word_count},
                   {"stop_word_rate", c.stop_word_rate},
                   {"noise_level", c.noise_level},
                   {"frequency_jitter", c.frequency_jitter},
                   {"seed", c.seed}};
  return j.dump(2);
}

SyntheticConfig parse_synthetic_config(const std::string& text) {
  SyntheticConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic config: ") + e.what());
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("synthetic config: ") + key + " has the wrong type");
    }
  };
  // Signed values would wrap silently into size_t; reject them up front.
  for (const auto& [key, value] : j.items()) {
    if (value.is_number_integer() && value.get<long long>() < 0) {
      throw ConfigError("synthetic config: " + key + " must not be negative");
    }
  }
  get("vocab_size", c.vocab_size);
  get("phone_count", c.phone_count);
  get("min_phones", c.min_phones);
  get("max_phones", c.max_phones);
  get("mutant_fraction", c.mutant_fraction);
  get("utterances", c.utterances);
  get("words_per_utterance", c.words_per_utterance);
  get("hypotheses_per_segment", c.hypotheses_per_segment);
  get("substitution_rate", c.substitution_rate);
  get("substitution_neighbors", c.substitution_neighbors);
  get("misalignment_rate", c.misalignment_rate);
  get("stop_word_count", c.stop_word_count);
  get("stop_word_rate", c.stop_word_rate);
  get("noise_level", c.noise_level);
  get("frequency_jitter", c.frequency_jitter);
  get("seed", c.seed);
  validate(c);
  return c;
}

AudioSegment render_word(const PhoneSequence& phones, const std::map<PhoneIndex, PhoneSignature>& signatures,
                         double frequency_jitter, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  AudioSegment out;
  out.samples.assign(phones.size() * kSamplesPerPhone, 0.0f);
  const double gain = uniform(rng, 0.25, 0.5);
  constexpr std::size_t kRamp = kSamplesPerPhone / 20;
  for (std::size_t k = 0; k < phones.size(); ++k) {
    const auto it = signatures.find(phones[k]);
    require(it != signatures.end(), "phone without a synthetic signature");
    const double f1 = it->second.low_hz * (1.0 + uniform(rng, -frequency_jitter, frequency_jitter));
    const double f2 = it->second.high_hz * (1.0 + uniform(rng, -frequency_jitter, frequency_jitter));
    const double phase1 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double phase2 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (std::size_t n = 0; n < kSamplesPerPhone; ++n) {
      const double t = static_cast<double>(n) / kSampleRate;
      double env = 1.0;
      if (n < kRamp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n) / kRamp);
      if (n >= kSamplesPerPhone - kRamp) {
        env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(kSamplesPerPhone - n) / kRamp);
      }
      const double v = std::sin(2.0 * std::numbers::pi * f1 * t + phase1) +
                       0.7 * std::sin(2.0 * std::numbers::pi * f2 * t + phase2);
      out.samples[k * kSamplesPerPhone + n] = static_cast<float>(gain * env * v);
    }
  }
  return out;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  SyntheticCorpus corpus;
  corpus.inventory = PhoneInventory::arpabet();

  // Phone subset and signatures: a low and a high mel band per phone, with
  // no two phones sharing the same pair.
  std::vector<PhoneIndex> all(kRealPhoneCount);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<PhoneIndex>(i);
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<PhoneIndex> phones(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(c.phone_count));
  std::sort(phones.begin(), phones.end());
  const auto centers = mel_center_frequencies();
  std::set<std::pair<std::size_t, std::size_t>> used_bands;
  for (PhoneIndex p : phones) {
    std::size_t lo, hi;
    do {
      lo = 6 + pick(rng, 25);
      hi = 33 + pick(rng, 26);
    } while (!used_bands.insert({lo, hi}).second);
    corpus.signatures[p] = {centers[lo], centers[hi]};
  }

  // Vocabulary.
  std::set<std::vector<PhoneIndex>> taken;
  std::vector<std::vector<PhoneIndex>> words;
  while (words.size() < c.vocab_size) {
    std::vector<PhoneIndex> w;
    if (!words.empty() && uniform(rng, 0.0, 1.0) < c.mutant_fraction) {
      w = mutate(rng, words[pick(rng, words.size())], phones, c.min_phones, c.max_phones);
    } else {
      w = random_word(rng, phones, c.min_phones, c.max_phones);
    }
    if (!taken.insert(w).second) continue;
    words.push_back(w);
    corpus.vocabulary.push_back(word_name(words.size() - 1));
    corpus.lexicon.insert(corpus.vocabulary.back(), PhoneSequence(w));
  }
  static const char* const kStopNames[] = {"THE", "A", "OF", "AND", "TO", "IN", "IS", "IT"};
  std::vector<std::string> stop_list;
  for (std::size_t i = 0; i < c.stop_word_count; ++i) {
    std::string name = i < std::size(kStopNames) ? kStopNames[i] : "STOP" + std::to_string(i);
    std::vector<PhoneIndex> w;
    do {
      w = random_word(rng, phones, 1, std::min<std::size_t>(2, c.max_phones));
    } while (!taken.insert(w).second);
    corpus.lexicon.insert(name, PhoneSequence(w));
    corpus.stop_words.insert(name);
    stop_list.push_back(name);
  }

  // Nearest neighbors under phonetic edit distance, ties broken by name.
  for (const auto& w : corpus.vocabulary) {
    const PhoneSequence& pw = *corpus.lexicon.find(w);
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& v : corpus.vocabulary) {
      if (v != w) ranked.emplace_back(phonetic_edit_distance(pw, *corpus.lexicon.find(v)), v);
    }
    std::sort(ranked.begin(), ranked.end());
    auto& out = corpus.neighbors[w];
    for (std::size_t i = 0; i < c.substitution_neighbors; ++i) out.push_back(ranked[i].second);
  }

  // Utterances.
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t u = 0; u < c.utterances; ++u) {
    const std::string uname = utterance_name(u);
    std::vector<float> audio;
    auto silence = [&](double lo, double hi) {
      audio.resize(audio.size() + static_cast<std::size_t>(std::llround(uniform(rng, lo, hi) * kSampleRate)), 0.0f);
    };
    silence(0.1, 0.3);
    for (std::size_t k = 0; k < c.words_per_utterance; ++k) {
      const bool stop = !stop_list.empty() && uniform(rng, 0.0, 1.0) < c.stop_word_rate;
      const std::string word = stop ? stop_list[pick(rng, stop_list.size())]
                                    : corpus.vocabulary[pick(rng, corpus.vocabulary.size())];
      const auto seg = render_word(*corpus.lexicon.find(word), corpus.signatures, c.frequency_jitter, rng());

      AlignmentRecord r;
      r.segment_id = uname + "_w" + std::to_string(k);
      r.wav_path = "wavs/" + uname + ".wav";
      r.start_s = static_cast<double>(audio.size()) / kSampleRate;
      r.end_s = static_cast<double>(audio.size() + seg.samples.size()) / kSampleRate;
      r.human_word = word;
      for (std::size_t h = 0; h < c.hypotheses_per_segment; ++h) {
        if (!stop && uniform(rng, 0.0, 1.0) < c.substitution_rate) {
          const auto& nb = corpus.neighbors.at(word);
          r.hypothesis_words.push_back(nb[pick(rng, nb.size())]);
        } else {
          r.hypothesis_words.push_back(word);
        }
      }
      r.aligned_ok = !(uniform(rng, 0.0, 1.0) < c.misalignment_rate);
      corpus.records.push_back(std::move(r));

      audio.insert(audio.end(), seg.samples.begin(), seg.samples.end());
      silence(0.1, 0.3);
    }
    for (auto& v : audio) v += static_cast<float>(c.noise_level * noise(rng));
    corpus.utterances.push_back(AudioSegment{std::move(audio), kSampleRate});
  }
  return corpus;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const SyntheticConfig& config,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "wavs");
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    write_wav(dir / "wavs" / (utterance_name(u) + ".wav"), corpus.utterances[u]);
  }
  write_alignments(dir / "alignments.jsonl", corpus.records);
  corpus.lexicon.save(dir / "lexicon.txt", corpus.inventory);
  corpus.inventory.save(dir / "inventory.txt");
  std::ofstream stop(dir / "stop_words.txt", std::ios::binary);
  for (const auto& w : corpus.stop_words) stop << w << '\n';
  std::ofstream cfg(dir / "synth_config.json", std::ios::binary);
  cfg << serialize(config) << '\n';
  if (!stop || !cfg) throw IoError("cannot write synthetic corpus to " + dir.string());
}

}  // namespace awe
