#include <cmath>

#include "awe/error.hpp"
#include "awe/siamese.hpp"
#include "doctest.h"
#include "gradcheck_fixtures.hpp"

using namespace awe;

TEST_CASE("distances between unit vectors") {
  const std::vector<float> a{1, 0, 0}, b{0, 1, 0}, c{-1, 0, 0};
  CHECK(distance(a, a, DistanceKind::cosine) == 0.0);
  CHECK(distance(a, b, DistanceKind::cosine) == 1.0);
  CHECK(distance(a, c, DistanceKind::cosine) == 2.0);
  CHECK(distance(a, b, DistanceKind::euclidean) == doctest::Approx(std::sqrt(2.0)));
  CHECK(distance(a, c, DistanceKind::euclidean) == 2.0);
  const std::vector<float> not_unit{2, 0, 0};
  CHECK_THROWS_AS(distance(a, not_unit, DistanceKind::cosine), ContractViolation);
  CHECK_THROWS_AS(distance(a, std::vector<float>{1, 0}, DistanceKind::cosine), ContractViolation);
}

TEST_CASE("squared euclidean distance is twice the cosine distance on the sphere") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto a = test::random_tensor({16}, rng), b = test::random_tensor({16}, rng);
    double na = 0, nb = 0;
    for (std::size_t j = 0; j < 16; ++j) {
      na += a[j] * a[j];
      nb += b[j] * b[j];
    }
    for (std::size_t j = 0; j < 16; ++j) {
      a[j] /= std::sqrt(na);
      b[j] /= std::sqrt(nb);
    }
    const double cos = distance_unchecked<double>(a.values(), b.values(), DistanceKind::cosine);
    const double euc = distance_unchecked<double>(a.values(), b.values(), DistanceKind::euclidean);
    REQUIRE(euc * euc == doctest::Approx(2.0 * cos).epsilon(1e-12));
    REQUIRE(euclidean_radius(cos, DistanceKind::cosine) == doctest::Approx(euc).epsilon(1e-12));
  }
}

TEST_CASE("contrastive loss known values") {
  const std::vector<double> d{0.0, 1.2, 0.5, 0.5};
  const std::vector<int> y{0, 1, 1, 0};
  const std::vector<double> m(4, 1.0);
  CHECK(contrastive_loss(d, y, m) == 0.125);

  const auto g = contrastive_loss_gradient(d, y, m);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == doctest::Approx(-2.0 * 0.5 / 4));
  CHECK(g[3] == doctest::Approx(2.0 * 0.5 / 4));
  CHECK(contrastive_loss({}, {}, {}) == 0.0);
}

TEST_CASE("loss gradient signs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> d{u(rng)};
    const std::vector<double> m{u(rng)};
    const auto pos = contrastive_loss_gradient(d, std::vector<int>{0}, m);
    const auto neg = contrastive_loss_gradient(d, std::vector<int>{1}, m);
    REQUIRE(pos[0] >= 0.0);
    REQUIRE(neg[0] <= 0.0);
    if (d[0] >= m[0]) REQUIRE(neg[0] == 0.0);
  }
}

TEST_CASE("gradient check: full pairwise loss through both encoders") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (auto kind : {DistanceKind::cosine, DistanceKind::euclidean}) {
      for (bool edit : {false, true}) {
        CAPTURE(seed);
        CAPTURE(to_string(kind));
        CAPTURE(edit);
        CHECK(test::check_siamese_loss(seed, kind, edit).max_relative_error < test::kGradientTolerance);
      }
    }
  }
}

TEST_CASE("encoder layout") {
  const EncoderConfig c;
  const auto a = encoder_layers(c, Modality::acoustic);
  const auto p = encoder_layers(c, Modality::phonetic);
  CHECK(a.size() == p.size() + 1);
  CHECK(a.front().kind == LayerKind::dropout);
  CHECK(a.front().rate == 0.2);
  CHECK(p.front().kind == LayerKind::conv2d);
  CHECK(a.back().kind == LayerKind::l2norm);

  EncoderConfig small;
  small.conv_channels = {4, 4};
  small.dense_units = {16, 16};
  small.embedding_dim = 8;
  auto model = SiameseModel::create(small, 3);
  CHECK(model.acoustic().output_shape() == Shape{8});
  CHECK(model.phonetic().output_shape() == Shape{8});
  CHECK(parse_encoder_config(serialize(small)) == small);
  CHECK_THROWS_AS(parse_encoder_config("{\"kernel\": 3}"), DataError);
}

TEST_CASE("embeddings are unit vectors and batching does not change them") {
  EncoderConfig small;
  small.conv_channels = {4, 4};
  small.dense_units = {16, 16};
  small.embedding_dim = 8;
  const auto model = SiameseModel::create(small, 7);

  std::mt19937_64 rng(1);
  std::normal_distribution<float> n;
  std::vector<MelFeature> feats(70);
  for (auto& f : feats) {
    for (auto& v : f.values()) v = n(rng);
  }
  std::vector<const MelFeature*> ptrs;
  for (const auto& f : feats) ptrs.push_back(&f);
  const auto batch = model.embed_acoustic(ptrs);
  REQUIRE(batch.size() == 70);
  for (std::size_t i : {0u, 63u, 64u, 69u}) {
    const auto single = model.embed_acoustic(feats[i]);
    for (std::size_t j = 0; j < 8; ++j) CHECK(single[j] == doctest::Approx(batch[i][j]).epsilon(1e-5));
  }
  const auto e = model.embed_phonetic(PhoneSequence({1, 2, 3}));
  double sq = 0;
  for (float v : e) sq += v * v;
  CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("max-norm on the model touches only dropout-adjacent layers") {
  EncoderConfig small;
  small.conv_channels = {2};
  small.dense_units = {6, 6};
  small.embedding_dim = 4;
  auto model = SiameseModel::create(small, 1);
  for (auto& p : model.parameters()) {
    for (auto& v : p.value->values()) v *= 50.0f;
  }
  model.constrain(3.0);
  CHECK(model.max_constrained_norm() <= 3.0 + 1e-6);
}
