#pragma once

#include <random>
#include <string>

#include "awe/audio_features.hpp"
#include "awe/corpus.hpp"
#include "awe/siamese.hpp"

namespace test {

// Small enough that a few hundred optimizer steps take seconds. With 16
// dense units and dropout 0.4 the net tends to sit at the saddle where every
// distance is 0.5; 64 units get past it.
inline awe::EncoderConfig tiny_encoder() {
  awe::EncoderConfig c;
  c.conv_channels = {2, 4};
  c.dense_units = {64, 64};
  c.embedding_dim = 16;
  return c;
}

inline awe::MelFeature random_feature(std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  awe::MelFeature f;
  for (float& v : f.values()) v = n(rng);
  return f;
}

inline awe::PhoneSequence random_phones(std::mt19937_64& rng, std::size_t len = 4) {
  std::uniform_int_distribution<int> p(0, 68);
  std::vector<awe::PhoneIndex> v(len);
  for (auto& x : v) x = static_cast<awe::PhoneIndex>(p(rng));
  return awe::PhoneSequence(std::move(v));
}

// `segments` random features, each with one positive word of its own and
// one negative borrowed from the next segment. Everything lands in `split`.
struct ToyData {
  awe::FeatureStore features;
  awe::PairDataset dataset;
  std::vector<awe::PhoneSequence> words;
};

inline ToyData toy_data(std::size_t segments, std::uint64_t seed, awe::Split split = awe::Split::train) {
  std::mt19937_64 rng(seed);
  ToyData d;
  for (std::size_t s = 0; s < segments; ++s) d.words.push_back(random_phones(rng, 3 + s % 4));
  for (std::size_t s = 0; s < segments; ++s) {
    const std::string id = "seg" + std::to_string(s);
    d.features[id] = random_feature(rng);
    awe::PairExample pos;
    pos.segment_id = id;
    pos.word = "w" + std::to_string(s);
    pos.phones = d.words[s];
    pos.label = 0;
    pos.origin = awe::Origin::positive;
    pos.split = split;
    pos.reference_word = pos.word;
    pos.reference_phones = pos.phones;
    awe::PairExample neg = pos;
    const std::size_t other = (s + 1) % segments;
    neg.word = "w" + std::to_string(other);
    neg.phones = d.words[other];
    neg.label = 1;
    neg.origin = awe::Origin::substitution;
    d.dataset.examples.push_back(pos);
    d.dataset.examples.push_back(neg);
  }
  return d;
}

}  // namespace test
