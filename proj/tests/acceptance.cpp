// Acceptance suite: one PASS/FAIL line per criterion. Criteria 7 and 8
// train real models and take about half an hour on one core.
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "awe/audio_features.hpp"
#include "awe/pipeline.hpp"
#include "awe/self_labeling.hpp"
#include "gradcheck_fixtures.hpp"
#include "mining_fixture.hpp"
#include "test_util.hpp"
#include "train_fixture.hpp"

using namespace awe;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// 1 ------------------------------------------------------------------------

Verdict feature_shapes() {
  const auto t0 = Clock::now();
  const MelSpectrogram extractor;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  std::size_t checked = 0, bad = 0;
  for (int ms = 200; ms <= 2000; ms += 50) {
    AudioSegment seg;
    seg.samples.resize(static_cast<std::size_t>(ms) * kSampleRate / 1000);
    for (auto& s : seg.samples) s = u(rng);
    const auto f = featurize(extractor, seg);
    const bool ok = f.values().size() == kMelBands * kFrames && kMelBands == 64 && kFrames == 161 &&
                    std::all_of(f.values().begin(), f.values().end(), [](float v) { return std::isfinite(v); });
    bad += !ok;
    ++checked;
  }
  const double t = seconds_since(t0);
  return {bad == 0 && checked == 37 && t < 10.0,
          fmt("%zu durations 0.2-2.0 s, %zu not 64x161 or non-finite, %.2f s", checked, bad, t)};
}

// 2 ------------------------------------------------------------------------

Verdict gradient_checks() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_case;
  std::size_t cases = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    for (const auto& c : test::layer_cases(rng)) {
      const auto r = test::check_layer_case(c, seed * 100 + 1);
      ++cases;
      if (r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_case = c.label + " seed " + std::to_string(seed);
      }
    }
    for (auto kind : {DistanceKind::cosine, DistanceKind::euclidean}) {
      for (bool edit : {false, true}) {
        const auto r = test::check_siamese_loss(seed, kind, edit);
        ++cases;
        if (r.max_relative_error > worst) {
          worst = r.max_relative_error;
          worst_case = "siamese loss " + to_string(kind) + " seed " + std::to_string(seed);
        }
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst < test::kGradientTolerance && t < 120.0,
          fmt("%zu checks over 20 seeds, max relative error %.2e (%s), %.1f s", cases, worst, worst_case.c_str(), t)};
}

// 3 ------------------------------------------------------------------------

Verdict loss_known_value() {
  const std::vector<double> d{0.0, 1.2, 0.5, 0.5};
  const std::vector<int> y{0, 1, 1, 0};
  const std::vector<double> m(4, 1.0);
  const double loss = contrastive_loss(d, y, m);
  return {loss == 0.125, fmt("loss %.17g, expected 0.125", loss)};
}

// 4 ------------------------------------------------------------------------

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dim);
  double sq = 0.0;
  for (float& x : v) {
    x = n(rng);
    sq += static_cast<double>(x) * x;
  }
  for (float& x : v) x = static_cast<float>(x / std::sqrt(sq));
  return v;
}

Verdict kd_tree_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  std::vector<std::vector<float>> points;
  for (int i = 0; i < 1000; ++i) points.push_back(random_unit(rng, 512));
  const KdTree tree(points);
  // Distances between random unit vectors in 512-D cluster near sqrt(2);
  // radii around it give result sets of every size.
  std::uniform_real_distribution<double> radius(1.30, 1.45);
  std::size_t mismatches = 0, hits = 0, empty = 0;
  for (int q = 0; q < 200; ++q) {
    const auto query = q % 2 == 0 ? points[static_cast<std::size_t>(q) * 3] : random_unit(rng, 512);
    const double r = radius(rng);
    std::vector<std::size_t> scan;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < 512; ++k) {
        const double t = static_cast<double>(points[i][k]) - query[k];
        sq += t * t;
      }
      if (std::sqrt(sq) <= r) scan.push_back(i);
    }
    const auto found = tree.range_query(query, r);
    mismatches += found != scan;
    hits += scan.size();
    empty += scan.empty();
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 30.0,
          fmt("200 queries, %zu mismatched sets, %zu total hits, %zu empty, %.2f s", mismatches, hits, empty, t)};
}

// 5 ------------------------------------------------------------------------

PhoneSequence random_sequence(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(1, 8);
  std::uniform_int_distribution<int> phone(0, 7);  // small alphabet: many near matches
  std::vector<PhoneIndex> v(len(rng));
  for (auto& p : v) p = static_cast<PhoneIndex>(phone(rng));
  return PhoneSequence(std::move(v));
}

Verdict edit_distance_properties() {
  std::mt19937_64 rng(5);
  std::size_t failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_sequence(rng);
    const auto b = random_sequence(rng);
    const double d = phonetic_edit_distance(a, b);
    failures += phonetic_edit_distance(a, a) != 0.0;
    failures += d != phonetic_edit_distance(b, a);
    failures += !(d >= 0.0 && d <= 1.0);
    failures += (d == 0.0) != (a == b);
  }
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_sequence(rng);
    const auto b = random_sequence(rng);
    const auto c = random_sequence(rng);
    failures += levenshtein(a, c) > levenshtein(a, b) + levenshtein(b, c);
  }
  const auto inv = PhoneInventory::arpabet();
  const double cat_bat = phonetic_edit_distance(inv.parse(std::vector<std::string>{"K", "AE1", "T"}),
                                                inv.parse(std::vector<std::string>{"B", "AE1", "T"}));
  return {failures == 0 && cat_bat == 1.0 / 3.0,
          fmt("%zu property violations over 10000 pairs and 1000 triples, cat/bat %.17g", failures, cat_bat)};
}

// 6 ------------------------------------------------------------------------

Verdict mining_fixture() {
  const test::MiningFixture fx;
  const auto pos = extract_positives(fx.records, fx.lexicon);
  const auto neg = extract_substitution_negatives(fx.records, fx.lexicon, pos);
  PairDataset ds;
  ds.examples = pos;
  ds.examples.insert(ds.examples.end(), neg.begin(), neg.end());
  const auto syn = synthesize_negatives(neg, ds.keys());
  const bool p = test::MiningFixture::pairs_of(pos) == fx.positives;
  const bool n = test::MiningFixture::pairs_of(neg) == fx.substitutions;
  const bool s = test::MiningFixture::pairs_of(syn) == fx.synthesized;
  const double fish = phonetic_edit_distance(*fx.lexicon.find("CAT"), *fx.lexicon.find("FISH"));
  const bool fish_out = fish >= kSynthesisMaxDistance &&
                        std::none_of(syn.begin(), syn.end(), [](const PairExample& e) { return e.word == "FISH"; });
  return {p && n && s && fish_out, fmt("positives %s (%zu), substitutions %s (%zu), synthesized %s (%zu), "
                                       "FISH at %.2f excluded %s",
                                       p ? "match" : "DIFFER", pos.size(), n ? "match" : "DIFFER", neg.size(),
                                       s ? "match" : "DIFFER", syn.size(), fish, fish_out ? "yes" : "NO")};
}

// 7, 8 ---------------------------------------------------------------------

// Desk-scale model: the full encoder width is out of reach on one core in
// the time budget, so the convolutions and dense layers are narrowed.
RunConfig desk_config(std::uint64_t seed, const std::filesystem::path& corpus_dir, bool self_labeling) {
  RunConfig c;
  c.seed = seed;
  c.paths.corpus_dir = corpus_dir;
  c.synthetic.utterances = 600;
  c.encoder.conv_channels = {4, 8};
  c.encoder.dense_units = {256, 256};
  c.encoder.embedding_dim = 64;
  c.train.batch_size = 32;
  c.train.epochs = 30;
  c.self_labeling = self_labeling;
  return c;
}

struct DeskRun {
  std::size_t initial_train = 0;
  std::size_t final_train = 0;
  std::size_t added = 0;
  std::size_t duplicate_keys = 0;
  std::size_t mislabeled = 0;
  double dev_loss_30 = 0.0;
  SplitEvaluation best, last;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

DeskRun desk_run(const RunConfig& c, const CorpusFiles& corpus) {
  const auto t0 = Clock::now();
  DeskRun out;
  auto ds = build_dataset(c, corpus);
  const auto prepared = prepare_features(corpus, ds);
  const auto outcome = train_model(c, corpus.inventory, ds, prepared);
  out.initial_train = outcome.initial_train_size;
  out.final_train = ds.count(Split::train);
  out.dev_loss_30 = outcome.result.history.at(29).dev_loss;
  out.best_epoch = outcome.result.best_epoch;
  out.best = evaluate_split(outcome.result.best.model, ds, Split::test, prepared.features, c.train.distance);
  out.last = evaluate_split(outcome.result.last.model, ds, Split::test, prepared.features, c.train.distance);

  // Audit against the corpus itself: what the human said in each segment.
  std::map<std::string, std::string> said;
  for (const auto& r : corpus.records) said[r.segment_id] = r.human_word;
  std::set<PairKey> keys;
  for (const auto& e : ds.examples) {
    if (!keys.insert(key_of(e)).second) ++out.duplicate_keys;
    if (e.origin != Origin::self_labeled) continue;
    ++out.added;
    const auto* truth = corpus.lexicon.find(said.at(e.segment_id));
    if (e.label != 1 || truth == nullptr || *truth == e.phones) ++out.mislabeled;
  }
  out.seconds = seconds_since(t0);
  return out;
}

struct DeskResults {
  std::vector<DeskRun> mining, plain;
};

DeskResults run_desk_scale(const std::vector<std::uint64_t>& seeds) {
  test::TempDir dir;
  const auto base = desk_config(0, dir.path() / "corpus", true);
  write_synthetic_corpus(generate_synthetic_corpus(base.synthetic), base.synthetic, base.paths.corpus_dir);
  const auto corpus = load_corpus(base.paths);
  DeskResults r;
  for (auto seed : seeds) {
    r.mining.push_back(desk_run(desk_config(seed, base.paths.corpus_dir, true), corpus));
    const auto& m = r.mining.back();
    std::printf("  seed %llu with self-labeling: train %zu -> %zu, test F1 %.4f, break-even %.4f "
                "(P %.3f R %.3f), best epoch %zu, last-epoch F1 %.4f, %.0f s\n",
                static_cast<unsigned long long>(seed), m.initial_train, m.final_train, m.best.report.f1,
                m.best.sweep.break_even_threshold, m.best.sweep.break_even_precision, m.best.sweep.break_even_recall,
                m.best_epoch, m.last.report.f1, m.seconds);
    std::fflush(stdout);
  }
  for (auto seed : seeds) {
    r.plain.push_back(desk_run(desk_config(seed, base.paths.corpus_dir, false), corpus));
    const auto& p = r.plain.back();
    std::printf("  seed %llu without self-labeling: test F1 %.4f, break-even %.4f, dev loss@30 %.5f, %.0f s\n",
                static_cast<unsigned long long>(seed), p.best.report.f1, p.best.sweep.break_even_threshold,
                p.dev_loss_30, p.seconds);
    std::fflush(stdout);
  }
  return r;
}

Verdict desk_learnability(const DeskResults& r) {
  std::size_t passing = 0;
  double seconds = 0.0;
  std::ostringstream detail;
  for (const auto& m : r.mining) {
    const bool ok = m.best.report.f1 >= 0.90 && m.best.sweep.break_even_threshold > 0.2 &&
                    m.best.sweep.break_even_threshold < 0.8;
    passing += ok;
    seconds += m.seconds;
    detail << fmt("F1 %.3f/BE %.3f%s ", m.best.report.f1, m.best.sweep.break_even_threshold, ok ? "" : "(fail)");
  }
  detail << fmt("; %zu/3 seeds pass, %zu train pairs, %.1f min", passing, r.mining.front().initial_train,
                seconds / 60.0);
  return {passing >= 2 && seconds < 30.0 * 60.0, detail.str()};
}

Verdict self_labeling_efficacy(const DeskResults& r) {
  bool audit_ok = true;
  std::size_t lower_dev = 0;
  std::ostringstream detail;
  for (std::size_t i = 0; i < r.mining.size(); ++i) {
    const auto& m = r.mining[i];
    const double growth = static_cast<double>(m.final_train - m.initial_train) / static_cast<double>(m.initial_train);
    audit_ok = audit_ok && growth >= 0.05 && m.duplicate_keys == 0 && m.mislabeled == 0;
    lower_dev += m.dev_loss_30 <= r.plain[i].dev_loss_30;
    detail << fmt("growth %.1f%% dup %zu mislabeled %zu dev@30 %.5f vs %.5f; ", 100.0 * growth, m.duplicate_keys,
                  m.mislabeled, m.dev_loss_30, r.plain[i].dev_loss_30);
  }
  detail << fmt("dev loss not worse for %zu/3 seeds", lower_dev);
  return {audit_ok && lower_dev >= 2, detail.str()};
}

// 9 ------------------------------------------------------------------------

Verdict scheduler_traces() {
  const TrainConfig c;
  std::vector<double> plateau;
  {
    LearningRateSchedule s(c);
    for (double loss : {1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.8, 0.8, 0.8}) {
      s.on_epoch_end(loss);
      plateau.push_back(s.lr());
    }
  }
  const std::vector<double> plateau_expected{0.001, 0.001, 0.001, 0.0005, 0.0005, 0.00025, 0.00025, 0.00025, 0.000125};

  // 'L' = dev loss of 1.0 at an epoch end, a number = examples mined.
  std::vector<double> mixed;
  {
    LearningRateSchedule s(c);
    const std::vector<std::pair<char, std::size_t>> events{{'L', 0}, {'L', 0}, {'M', 0}, {'L', 0}, {'L', 0},
                                                           {'M', 10}, {'L', 0}, {'L', 0}, {'M', 5}, {'M', 5}};
    for (const auto& [kind, added] : events) {
      if (kind == 'L') {
        s.on_epoch_end(1.0);
      } else {
        s.on_mining(added);
      }
      mixed.push_back(s.lr());
    }
  }
  const std::vector<double> mixed_expected{0.001, 0.001, 0.001, 0.0005, 0.0005, 0.001, 0.001, 0.0005, 0.001, 0.001};

  std::vector<double> capped;
  {
    TrainConfig low = c;
    low.initial_lr = 0.00025;
    LearningRateSchedule s(low);
    for (int i = 0; i < 4; ++i) {
      s.on_mining(1);
      capped.push_back(s.lr());
    }
  }
  const std::vector<double> capped_expected{0.0005, 0.001, 0.001, 0.001};

  const bool ok = plateau == plateau_expected && mixed == mixed_expected && capped == capped_expected;
  return {ok, fmt("plateau trace %s, mixed plateau/mining trace %s, bump-with-cap trace %s",
                  plateau == plateau_expected ? "exact" : "DIFFERS", mixed == mixed_expected ? "exact" : "DIFFERS",
                  capped == capped_expected ? "exact" : "DIFFERS")};
}

// 10 -----------------------------------------------------------------------

std::vector<const PairExample*> all_pairs(const PairDataset& ds) {
  std::vector<const PairExample*> out;
  for (const auto& e : ds.examples) out.push_back(&e);
  return out;
}

Verdict max_norm_invariant() {
  auto data = test::toy_data(32, 10);
  const auto pairs = all_pairs(data.dataset);
  TrainConfig cfg;
  cfg.batch_size = 64;
  // A large step size drives the weights against the bound.
  cfg.initial_lr = 0.02;
  cfg.lr_max = 0.02;
  Trainer tr(SiameseModel::create(test::tiny_encoder(), 10), cfg, data.features, {}, PhoneInventory::arpabet());
  const double initial = tr.model().max_constrained_norm();
  double worst = 0.0;
  std::size_t violations = 0;
  for (int i = 0; i < 100; ++i) {
    tr.step(pairs);
    const double n = tr.model().max_constrained_norm();
    worst = std::max(worst, n);
    violations += n > cfg.max_norm + 1e-6;
  }
  return {violations == 0, fmt("100 steps, %zu violations, largest norm %.6f (initially %.3f)", violations, worst,
                               initial)};
}

// 11 -----------------------------------------------------------------------

Verdict checkpoint_round_trip() {
  auto data = test::toy_data(8, 11);
  const auto pairs = all_pairs(data.dataset);
  TrainConfig cfg;
  cfg.batch_size = 16;
  BandStats stats;
  for (std::size_t b = 0; b < kMelBands; ++b) {
    stats.mean[b] = 0.01 * static_cast<double>(b);
    stats.std[b] = 1.0 + 0.02 * static_cast<double>(b);
  }
  Trainer tr(SiameseModel::create(test::tiny_encoder(), 11), cfg, data.features, stats, PhoneInventory::arpabet());
  for (int i = 0; i < 3; ++i) tr.step(pairs);
  const auto ck = tr.checkpoint(3);
  test::TempDir dir;
  save_checkpoint(dir.path() / "model.ckpt", ck);
  const auto back = load_checkpoint(dir.path() / "model.ckpt");
  std::mt19937_64 rng(11);
  std::size_t differing = 0;
  for (int i = 0; i < 100; ++i) {
    const auto f = test::random_feature(rng);
    const auto p = test::random_phones(rng, 1 + static_cast<std::size_t>(i) % 20);
    differing += back.model.embed_acoustic(f) != ck.model.embed_acoustic(f);
    differing += back.model.embed_phonetic(p) != ck.model.embed_phonetic(p);
  }
  return {differing == 0, fmt("100 acoustic and 100 phonetic inputs, %zu embeddings differ", differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-11)");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  int failures = 0;
  auto report = [&](int n, const char* name, const Verdict& v) {
    std::printf("criterion %d %s: %s -- %s\n", n, v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  };
  auto guarded = [&](int n, const char* name, const std::function<Verdict()>& fn) {
    if (!wanted(n)) return;
    try {
      report(n, name, fn());
    } catch (const std::exception& e) {
      report(n, name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, "feature shapes", feature_shapes);
  guarded(2, "gradient checks", gradient_checks);
  guarded(3, "contrastive loss fixture", loss_known_value);
  guarded(4, "k-d tree vs linear scan", kd_tree_equivalence);
  guarded(5, "edit-distance properties", edit_distance_properties);
  guarded(6, "mining pipeline fixture", mining_fixture);
  if (wanted(7) || wanted(8)) {
    std::optional<DeskResults> desk;
    std::string error;
    try {
      desk = run_desk_scale({1, 2, 3});
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto from_desk = [&](auto fn) { return desk ? fn(*desk) : Verdict{false, "exception: " + error}; };
    if (wanted(7)) report(7, "desk-scale learnability", from_desk(desk_learnability));
    if (wanted(8)) report(8, "self-labeling efficacy", from_desk(self_labeling_efficacy));
  }
  guarded(9, "scheduler traces", scheduler_traces);
  guarded(10, "max-norm invariant", max_norm_invariant);
  guarded(11, "checkpoint round trip", checkpoint_round_trip);
  return failures == 0 ? 0 : 1;
}
