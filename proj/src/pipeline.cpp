#include "awe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "awe/dataset_features.hpp"
#include "awe/error.hpp"

namespace awe {

using json = nlohmann::json;

namespace {

json section(const std::string& serialized) { return json::parse(serialized); }

// Overlays the user's keys on the serialized defaults, so sub-config parsers
// that want every key still accept partial sections.
std::string merged(const json& defaults, const json& user, const char* name) {
  if (!user.is_object()) throw ConfigError(std::string("run config: ") + name + " must be an object");
  json out = defaults;
  for (const auto& [key, value] : user.items()) {
    if (!defaults.contains(key)) throw ConfigError(std::string("run config: unknown field ") + name + "." + key);
    out[key] = value;
  }
  return out.dump();
}

template <typename T>
void read_field(const json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const json::exception&) {
    throw ConfigError("run config: " + where + key + " has the wrong type");
  }
}

json paths_json(const RunPaths& p) {
  return {{"corpus_dir", p.corpus_dir.string()}, {"alignments", p.alignments.string()},
          {"lexicon", p.lexicon.string()},       {"inventory", p.inventory.string()},
          {"stop_words", p.stop_words.string()}, {"manifest", p.manifest.string()},
          {"output_dir", p.output_dir.string()}};
}

void require_file(const std::filesystem::path& path, const std::string& field) {
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("run config: paths." + field + " does not exist: " + path.string());
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("run config: top level must be an object");
  if (!j.contains("version")) throw ConfigError("run config: version is missing");
  if (j.at("version") != kRunConfigVersion) {
    throw ConfigError("run config: unsupported version " + j.at("version").dump());
  }
  if (!j.contains("seed")) throw ConfigError("run config: seed is mandatory");
  if (!j.at("seed").is_number_unsigned()) throw ConfigError("run config: seed must be a non-negative integer");

  static const std::set<std::string> known{"version",   "seed",          "paths",         "synthetic",
                                           "encoder",   "train",         "mining",        "self_labeling",
                                           "split",     "synthesis_max_distance", "min_duration_s", "threshold"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("run config: unknown field " + key);
  }

  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("paths")) {
    const auto p = json::parse(merged(paths_json(c.paths), j.at("paths"), "paths"));
    auto get = [&](const char* key, std::filesystem::path& field) {
      std::string s;
      read_field(p, key, s, "paths.");
      field = s;
    };
    get("corpus_dir", c.paths.corpus_dir);
    get("alignments", c.paths.alignments);
    get("lexicon", c.paths.lexicon);
    get("inventory", c.paths.inventory);
    get("stop_words", c.paths.stop_words);
    get("manifest", c.paths.manifest);
    get("output_dir", c.paths.output_dir);
  }
  if (j.contains("synthetic")) {
    c.synthetic = parse_synthetic_config(merged(section(serialize(c.synthetic)), j.at("synthetic"), "synthetic"));
  }
  if (j.contains("encoder")) {
    try {
      c.encoder = parse_encoder_config(merged(section(serialize(c.encoder)), j.at("encoder"), "encoder"));
    } catch (const DataError& e) {
      throw ConfigError(std::string("run config: encoder: ") + e.what());
    }
  }
  if (j.contains("train")) c.train = parse_train_config(merged(section(serialize(c.train)), j.at("train"), "train"));
  if (j.contains("mining")) {
    c.mining = parse_mining_config(merged(section(serialize(c.mining)), j.at("mining"), "mining"));
  }
  read_field(j, "self_labeling", c.self_labeling, "");
  if (j.contains("split")) {
    const json defaults{{"train", c.split.train},
                        {"dev", c.split.dev},
                        {"test", c.split.test},
                        {"segment_disjoint", c.segment_disjoint}};
    const auto s = json::parse(merged(defaults, j.at("split"), "split"));
    read_field(s, "train", c.split.train, "split.");
    read_field(s, "dev", c.split.dev, "split.");
    read_field(s, "test", c.split.test, "split.");
    read_field(s, "segment_disjoint", c.segment_disjoint, "split.");
  }
  read_field(j, "synthesis_max_distance", c.synthesis_max_distance, "");
  read_field(j, "min_duration_s", c.min_duration_s, "");
  read_field(j, "threshold", c.threshold, "");
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string serialize(const RunConfig& c) {
  json j{{"version", kRunConfigVersion},
         {"seed", c.seed},
         {"paths", paths_json(c.paths)},
         {"synthetic", section(serialize(c.synthetic))},
         {"encoder", section(serialize(c.encoder))},
         {"train", section(serialize(c.train))},
         {"mining", section(serialize(c.mining))},
         {"self_labeling", c.self_labeling},
         {"split",
          {{"train", c.split.train}, {"dev", c.split.dev}, {"test", c.split.test},
           {"segment_disjoint", c.segment_disjoint}}},
         {"synthesis_max_distance", c.synthesis_max_distance},
         {"min_duration_s", c.min_duration_s},
         {"threshold", c.threshold}};
  return j.dump(2) + "\n";
}

void validate(const RunConfig& c) {
  validate(c.synthetic);
  validate(c.train);
  validate(c.mining);
  const auto& e = c.encoder;
  if (e.conv_channels.empty()) throw ConfigError("run config: encoder.conv_channels must not be empty");
  if (e.dense_units.empty()) throw ConfigError("run config: encoder.dense_units must not be empty");
  if (e.embedding_dim == 0) throw ConfigError("run config: encoder.embedding_dim must be positive");
  if (e.kernel == 0 || e.pool == 0) throw ConfigError("run config: encoder.kernel and encoder.pool must be positive");
  if (!(e.dense_dropout >= 0.0 && e.dense_dropout < 1.0)) {
    throw ConfigError("run config: encoder.dense_dropout must be in [0, 1)");
  }
  if (!(e.acoustic_input_dropout >= 0.0 && e.acoustic_input_dropout < 1.0)) {
    throw ConfigError("run config: encoder.acoustic_input_dropout must be in [0, 1)");
  }
  const auto& s = c.split;
  if (!(s.train > 0.0 && s.dev > 0.0 && s.test > 0.0) || std::abs(s.train + s.dev + s.test - 1.0) > 1e-9) {
    throw ConfigError("run config: split fractions must be positive and sum to 1");
  }
  if (!(c.synthesis_max_distance > 0.0 && c.synthesis_max_distance <= 1.0)) {
    throw ConfigError("run config: synthesis_max_distance must be in (0, 1]");
  }
  if (!(c.min_duration_s >= 0.0)) throw ConfigError("run config: min_duration_s must not be negative");
  if (!(c.threshold > 0.0 && c.threshold <= 2.0)) throw ConfigError("run config: threshold must be in (0, 2]");
}

ResolvedPaths resolve_paths(const RunPaths& p) {
  auto pick = [&](const std::filesystem::path& given, const char* standard) {
    return given.empty() ? p.corpus_dir / standard : given;
  };
  return {pick(p.alignments, "alignments.jsonl"), pick(p.lexicon, "lexicon.txt"), pick(p.inventory, "inventory.txt"),
          pick(p.stop_words, "stop_words.txt")};
}

void check_input_paths(const RunConfig& c, bool need_manifest) {
  const auto r = resolve_paths(c.paths);
  require_file(r.alignments, "alignments");
  require_file(r.lexicon, "lexicon");
  if (!c.paths.inventory.empty()) require_file(r.inventory, "inventory");
  if (!c.paths.stop_words.empty()) require_file(r.stop_words, "stop_words");
  if (need_manifest || !c.paths.manifest.empty()) require_file(c.paths.manifest, "manifest");
}

std::uint64_t config_hash(const RunConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : serialize(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::filesystem::path run_directory(const RunConfig& c, const std::string& command) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  char hash[20];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  return c.paths.output_dir / (command + "-" + std::string(hash, 12) + "-" + stamp);
}

CorpusFiles load_corpus(const RunPaths& paths) {
  const auto r = resolve_paths(paths);
  CorpusFiles out;
  out.inventory = std::filesystem::exists(r.inventory) ? PhoneInventory::load(r.inventory) : PhoneInventory::arpabet();
  out.lexicon = load_lexicon(r.lexicon, out.inventory).lexicon;
  if (std::filesystem::exists(r.stop_words)) out.stop_words = load_stop_words(r.stop_words);
  out.records = read_alignments(r.alignments);
  out.audio_base = r.alignments.parent_path();
  return out;
}

MiningOptions mining_options(const RunConfig& c) {
  MiningOptions o;
  o.synthesis_max_distance = c.synthesis_max_distance;
  o.min_duration_s = c.min_duration_s;
  o.fractions = c.split;
  o.segment_disjoint = c.segment_disjoint;
  o.seed = c.seed;
  return o;
}

PairDataset build_dataset(const RunConfig& config, const CorpusFiles& corpus, MiningReport* report) {
  auto ds = mine_dataset(corpus.records, corpus.lexicon, corpus.stop_words, mining_options(config), report);
  const bool any_positive =
      std::any_of(ds.examples.begin(), ds.examples.end(), [](const PairExample& e) { return e.label == 0; });
  if (!any_positive) throw DataError("no positive pairs: check the alignment records against the lexicon");
  return ds;
}

PreparedFeatures prepare_features(const CorpusFiles& corpus, const PairDataset& dataset,
                                  const std::optional<BandStats>& band_stats) {
  PreparedFeatures out;
  out.features = featurize_records(corpus.records, corpus.audio_base, segment_ids(dataset));
  out.band_stats = band_stats ? *band_stats : fit_band_stats(out.features, segment_ids(dataset, Split::train));
  apply_band_stats(out.features, out.band_stats);
  return out;
}

TrainingOutcome train_model(const RunConfig& config, const PhoneInventory& inventory, PairDataset& dataset,
                            const PreparedFeatures& prepared, const TrainingCallbacks& callbacks) {
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  Trainer trainer(SiameseModel::create(config.encoder, config.seed), tc, prepared.features, prepared.band_stats,
                  inventory);
  TrainingOutcome out;
  out.initial_train_size = dataset.count(Split::train);

  TrainHooks hooks;
  Rng mining_rng(config.seed ^ 0x5e1f1abe11edULL);
  if (config.self_labeling) {
    hooks.mining_period = config.mining.period;
    hooks.mine = [&](std::size_t epoch, const SiameseModel& model, PairDataset& ds) {
      const auto round = mine_round(model, ds, prepared.features, epoch, config.mining, tc.distance, mining_rng,
                                    out.initial_train_size);
      out.rounds.push_back(round);
      if (callbacks.on_round) callbacks.on_round(round);
      return round.added;
    };
  }
  if (callbacks.on_epoch) {
    hooks.on_epoch = [&](const EpochMetrics& m) { callbacks.on_epoch(m, trainer.model()); };
  }
  hooks.on_divergence = callbacks.on_divergence;
  out.result = trainer.train(dataset, hooks);
  out.audit = audit_self_labeled(dataset);
  return out;
}

SplitEvaluation evaluate_split(const SiameseModel& model, const PairDataset& dataset, Split split,
                               const FeatureStore& features, DistanceKind kind, double threshold) {
  const auto pairs = dataset.split(split);
  if (pairs.empty()) throw DataError("no pairs in the " + to_string(split) + " split");
  SplitEvaluation out;
  out.report = classify(score_pairs(model, pairs, features, kind), threshold);

  // Each segment's reference word against every word of the split.
  std::map<std::string, const PhoneSequence*> segments;
  std::set<PhoneSequence> words;
  for (const auto* e : pairs) {
    segments.emplace(e->segment_id, &e->reference_phones);
    words.insert(e->phones);
    words.insert(e->reference_phones);
  }
  std::vector<const MelFeature*> feats;
  std::vector<const PhoneSequence*> references;
  for (const auto& [id, ref] : segments) {
    feats.push_back(&features.at(id));
    references.push_back(ref);
  }
  std::vector<const PhoneSequence*> word_list;
  for (const auto& w : words) word_list.push_back(&w);
  const auto ea = model.embed_acoustic(feats);
  const auto ep = model.embed_phonetic(word_list);
  out.sweep = all_pairs_sweep(
      ea, ep, [&](std::size_t i, std::size_t j) { return *references[i] == *word_list[j]; }, kind);
  return out;
}

std::string format_report(const SplitEvaluation& e) { return format_report(e.report) + format_report(e.sweep); }

}  // namespace awe
