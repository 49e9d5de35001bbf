#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "awe/corpus.hpp"
#include "awe/phonetics.hpp"

namespace test {

// Six hand-built alignment records. Every expected set below was worked out
// on paper, not by running the pipeline.
//
//   s1 CAT  [CAT COT]            positive; negative COT
//   s2 CAT  [CAT CUT CUT]        positive; negative CUT once
//   s3 CAT  [CAT FISH BIT]       positive; negatives FISH, BIT
//   s4 DOG  [DIG]                human word not hypothesized: nothing
//   s5 DOG  [DOG DIG], misaligned: nothing
//   s6 DOG  [DOG DIG ZEBRA]      positive; negative DIG; ZEBRA is OOV
//
// Edit distances to CAT (K AE1 T): COT, CUT 1/3; BIT 2/3; FISH 1. FISH is
// at or above 0.7 and never joins the CAT group. The CAT group crosses
// s1, s2, s3 with the others' hypotheses; the DOG group has one member.
struct MiningFixture {
  awe::PhoneInventory inventory = awe::PhoneInventory::arpabet();
  awe::Lexicon lexicon;
  std::vector<awe::AlignmentRecord> records;

  using Pairs = std::set<std::pair<std::string, std::string>>;
  Pairs positives{{"s1", "CAT"}, {"s2", "CAT"}, {"s3", "CAT"}, {"s6", "DOG"}};
  Pairs substitutions{{"s1", "COT"}, {"s2", "CUT"}, {"s3", "FISH"}, {"s3", "BIT"}, {"s6", "DIG"}};
  Pairs synthesized{{"s1", "CUT"}, {"s1", "BIT"}, {"s2", "COT"}, {"s2", "BIT"}, {"s3", "COT"}, {"s3", "CUT"}};

  MiningFixture() {
    auto add = [&](const std::string& word, std::vector<std::string> phones) {
      lexicon.insert(word, inventory.parse(phones));
    };
    add("CAT", {"K", "AE1", "T"});
    add("COT", {"K", "AA1", "T"});
    add("CUT", {"K", "AH1", "T"});
    add("BIT", {"B", "IH1", "T"});
    add("FISH", {"F", "IH1", "SH"});
    add("DOG", {"D", "AO1", "G"});
    add("DIG", {"D", "IH1", "G"});

    auto rec = [&](std::string id, std::string human, std::vector<std::string> hyps, bool ok = true) {
      const double start = static_cast<double>(records.size());
      records.push_back({std::move(id), "fixture.wav", start, start + 0.5, std::move(human), std::move(hyps), ok});
    };
    rec("s1", "CAT", {"CAT", "COT"});
    rec("s2", "CAT", {"CAT", "CUT", "CUT"});
    rec("s3", "CAT", {"CAT", "FISH", "BIT"});
    rec("s4", "DOG", {"DIG"});
    rec("s5", "DOG", {"DOG", "DIG"}, false);
    rec("s6", "DOG", {"DOG", "DIG", "ZEBRA"});
  }

  static Pairs pairs_of(const std::vector<awe::PairExample>& examples) {
    Pairs out;
    for (const auto& e : examples) out.emplace(e.segment_id, e.word);
    return out;
  }
};

}  // namespace test
