#include <algorithm>
#include <cmath>
#include <random>

#include "awe/error.hpp"
#include "awe/evaluation.hpp"
#include "doctest.h"
#include "test_util.hpp"
#include "train_fixture.hpp"

using namespace awe;

namespace {

std::vector<ScoredPair> scored(std::initializer_list<std::pair<int, double>> items) {
  std::vector<ScoredPair> out;
  for (const auto& [y, d] : items) out.push_back({"s", "w", y, d});
  return out;
}

Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  Embedding v(dim);
  double sq = 0.0;
  for (float& x : v) {
    x = n(rng);
    sq += static_cast<double>(x) * x;
  }
  for (float& x : v) x = static_cast<float>(x / std::sqrt(sq));
  return v;
}

// Acoustic item i is a noisy copy of phonetic item i % words.
struct ClusteredSets {
  std::vector<Embedding> acoustic, phonetic;
  std::size_t words;

  ClusteredSets(std::size_t n_acoustic, std::size_t n_words, double noise, std::uint64_t seed) : words(n_words) {
    std::mt19937_64 rng(seed);
    for (std::size_t j = 0; j < n_words; ++j) phonetic.push_back(random_unit(rng, 8));
    std::normal_distribution<float> n(0.0f, static_cast<float>(noise));
    for (std::size_t i = 0; i < n_acoustic; ++i) {
      Embedding v = phonetic[i % n_words];
      double sq = 0.0;
      for (float& x : v) {
        x += n(rng);
        sq += static_cast<double>(x) * x;
      }
      for (float& x : v) x = static_cast<float>(x / std::sqrt(sq));
      acoustic.push_back(v);
    }
  }
  bool positive(std::size_t i, std::size_t j) const { return i % words == j; }
};

ClassificationReport brute_force_all_pairs(const ClusteredSets& s, double threshold) {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < s.acoustic.size(); ++i) {
    for (std::size_t j = 0; j < s.phonetic.size(); ++j) {
      const bool similar = distance(s.acoustic[i], s.phonetic[j], DistanceKind::cosine) < threshold;
      const bool pos = s.positive(i, j);
      ++(similar ? (pos ? tp : fp) : (pos ? fn : tn));
    }
  }
  return metrics_from_counts(tp, fp, tn, fn, threshold);
}

}  // namespace

TEST_CASE("classification known values") {
  std::vector<ScoredPair> s;
  for (int i = 0; i < 9; ++i) s.push_back({"s", "w", 0, 0.1});  // TP
  s.push_back({"s", "w", 1, 0.2});                               // FP
  s.push_back({"s", "w", 0, 0.8});                               // FN
  for (int i = 0; i < 9; ++i) s.push_back({"s", "w", 1, 0.9});  // TN
  const auto r = classify(s);
  CHECK(r.tp == 9);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.tn == 9);
  CHECK(r.precision == doctest::Approx(0.9));
  CHECK(r.recall == doctest::Approx(0.9));
  CHECK(r.f1 == doctest::Approx(0.9));

  CHECK(classify(scored({{0, 0.1}, {1, 0.9}})).f1 == 1.0);
  const auto none = classify(scored({{0, 0.7}, {1, 0.9}}));
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  // A distance equal to the threshold is predicted dissimilar.
  const auto tie = classify(scored({{0, 0.5}, {1, 0.9}}), 0.5);
  CHECK(tie.fn == 1);
  CHECK(tie.tp == 0);
  CHECK_THROWS_AS(classify({}), ContractViolation);
}

TEST_CASE("classification counts match a recount and survive monotone transforms") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredPair> s;
    for (int i = 0; i < 200; ++i) s.push_back({"s", "w", static_cast<int>(rng() % 2), d(rng)});
    const double t = d(rng);
    const auto r = classify(s, t);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& p : s) {
      if (p.distance < t) {
        ++(p.label == 0 ? tp : fp);
      } else {
        ++(p.label == 0 ? fn : tn);
      }
    }
    CHECK(r.tp == tp);
    CHECK(r.fp == fp);
    CHECK(r.tn == tn);
    CHECK(r.fn == fn);
    CHECK(r.tp + r.fp + r.tn + r.fn == s.size());

    auto warped = s;
    for (auto& p : warped) p.distance = std::exp(p.distance) - 1.0;
    const auto w = classify(warped, std::exp(t) - 1.0);
    CHECK(w.tp == r.tp);
    CHECK(w.fp == r.fp);
    CHECK(w.f1 == r.f1);
  }
}

TEST_CASE("recall and false positives grow with the threshold") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(0.0, 2.0);
  std::vector<ScoredPair> s;
  for (int i = 0; i < 300; ++i) s.push_back({"s", "w", static_cast<int>(rng() % 2), d(rng)});
  double last_recall = -1.0;
  std::size_t last_fp = 0;
  for (double t = 0.0; t <= 2.0; t += 0.05) {
    const auto r = classify(s, t);
    CHECK(r.recall >= last_recall);
    CHECK(r.fp >= last_fp);
    last_recall = r.recall;
    last_fp = r.fp;
  }
}

TEST_CASE("break-even on the 2x2 fixture") {
  // Same-word distance 0.1, cross distance 0.9.
  const float s = static_cast<float>(std::sqrt(0.18));
  const std::vector<Embedding> a{{1, 0, 0, 0}, {0, 1, 0, 0}};
  const std::vector<Embedding> p{{0.9f, 0.1f, s, 0}, {0.1f, 0.9f, 0, s}};
  const auto r = all_pairs_sweep(a, p, [](std::size_t i, std::size_t j) { return i == j; }, DistanceKind::cosine);
  CHECK(r.pairs == 4);
  CHECK(r.positives == 2);
  CHECK(r.break_even_threshold > 0.1);
  CHECK(r.break_even_threshold < 0.9);
  CHECK(r.break_even_precision == 1.0);
  CHECK(r.break_even_recall == 1.0);
}

TEST_CASE("all-pairs sweep counts every pair and ignores set order") {
  const ClusteredSets sets(100, 50, 0.3, 3);
  auto pos = [&](std::size_t i, std::size_t j) { return sets.positive(i, j); };
  const auto r = all_pairs_sweep(sets.acoustic, sets.phonetic, pos, DistanceKind::cosine);
  CHECK(r.pairs == 5000);
  CHECK(r.positives == 100);

  auto acoustic = sets.acoustic;
  auto phonetic = sets.phonetic;
  std::reverse(acoustic.begin(), acoustic.end());
  std::reverse(phonetic.begin(), phonetic.end());
  const std::size_t na = acoustic.size(), np = phonetic.size();
  const auto rev = all_pairs_sweep(
      acoustic, phonetic, [&](std::size_t i, std::size_t j) { return sets.positive(na - 1 - i, np - 1 - j); },
      DistanceKind::cosine);
  CHECK(rev.pairs == r.pairs);
  CHECK(rev.break_even_threshold == r.break_even_threshold);
  REQUIRE(rev.curve.size() == r.curve.size());
  for (std::size_t k = 0; k < r.curve.size(); ++k) {
    CHECK(rev.curve[k].threshold == r.curve[k].threshold);
    CHECK(rev.curve[k].precision == r.curve[k].precision);
    CHECK(rev.curve[k].recall == r.curve[k].recall);
  }
}

TEST_CASE("the curve is monotone and the break-even obeys the discreteness bound") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ClusteredSets sets(120, 40, 0.5 + 0.1 * static_cast<double>(seed), seed);
    const auto r = all_pairs_sweep(
        sets.acoustic, sets.phonetic, [&](std::size_t i, std::size_t j) { return sets.positive(i, j); },
        DistanceKind::cosine);
    for (std::size_t k = 1; k < r.curve.size(); ++k) {
      CHECK(r.curve[k].threshold > r.curve[k - 1].threshold);
      CHECK(r.curve[k].recall >= r.curve[k - 1].recall);
    }
    CHECK(r.curve.back().recall == 1.0);
    const auto at = brute_force_all_pairs(sets, r.break_even_threshold);
    CHECK(std::abs(at.precision - at.recall) <= 1.0 / static_cast<double>(r.positives) + 1e-12);
  }
}

TEST_CASE("sweep needs positives and nonempty sets") {
  const std::vector<Embedding> a{{1, 0}}, p{{0, 1}};
  CHECK_THROWS_AS(all_pairs_sweep(a, p, [](auto, auto) { return false; }, DistanceKind::cosine), ContractViolation);
  CHECK_THROWS_AS(all_pairs_sweep({}, p, [](auto, auto) { return true; }, DistanceKind::cosine), ContractViolation);
}

TEST_CASE("score_pairs is deterministic and needs features") {
  auto data = test::toy_data(6, 1);
  const auto model = SiameseModel::create(test::tiny_encoder(), 3);
  std::vector<const PairExample*> pairs;
  for (const auto& e : data.dataset.examples) pairs.push_back(&e);
  const auto a = score_pairs(model, pairs, data.features, DistanceKind::cosine);
  const auto b = score_pairs(model, pairs, data.features, DistanceKind::cosine);
  CHECK(a == b);
  REQUIRE(a.size() == pairs.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == pairs[i]->label);
    CHECK(a[i].distance >= 0.0);
    CHECK(a[i].distance <= 2.0 + 1e-6);
    const double direct = distance(model.embed_acoustic(data.features.at(pairs[i]->segment_id)),
                                   model.embed_phonetic(pairs[i]->phones), DistanceKind::cosine);
    CHECK(a[i].distance == doctest::Approx(direct).epsilon(1e-5));
  }
  CHECK(score_pairs(model, {}, data.features, DistanceKind::cosine).empty());
  data.features.erase(data.features.begin());
  CHECK_THROWS_AS(score_pairs(model, pairs, data.features, DistanceKind::cosine), DataError);
}

TEST_CASE("embedding tables round trip bitwise") {
  std::mt19937_64 rng(4);
  std::vector<EmbeddingRow> rows;
  for (int i = 0; i < 10; ++i) {
    rows.push_back({"item" + std::to_string(i), i % 2 ? Modality::phonetic : Modality::acoustic, random_unit(rng, 16)});
  }
  test::TempDir dir;
  const auto path = dir.path() / "e.tsv";
  export_embeddings(path, rows, 16);
  const auto back = read_embeddings(path);
  CHECK(back == rows);
  for (const auto& r : back) {
    double sq = 0.0;
    for (float v : r.values) sq += static_cast<double>(v) * v;
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-6));
  }

  export_embeddings(path, {}, 16);
  CHECK(read_embeddings(path).empty());
  CHECK(test::read_text(path) == "awe-embeddings 1 16 0\n");

  test::write_text(path, "awe-embeddings 1 2 1\nx\tacoustic\t0.5\n");
  CHECK_THROWS_AS(read_embeddings(path), DataError);
  test::write_text(path, "awe-embeddings 1 1 1\nx\tvisual\t0.5\n");
  CHECK_THROWS_AS(read_embeddings(path), DataError);
  CHECK_THROWS_AS(export_embeddings(path, rows, 3), ContractViolation);
}

TEST_CASE("report formats are key-value lines") {
  const auto r = classify(scored({{0, 0.1}, {1, 0.9}}));
  const auto text = format_report(r);
  for (const char* key : {"threshold\t", "tp\t1", "fp\t0", "tn\t1", "fn\t0", "precision\t", "recall\t", "f1\t1.0"}) {
    CHECK(text.find(key) != std::string::npos);
  }
}
