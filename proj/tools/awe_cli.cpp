// Command-line entry point: synth, mine, train, eval, embed.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "awe/dataset_features.hpp"
#include "awe/error.hpp"
#include "awe/pipeline.hpp"

using namespace awe;
namespace fs = std::filesystem;

namespace {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kData = 3,
  kDivergence = 4,
  kIo = 5,
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::string checkpoint;
  std::string out;
  std::string items;
  std::string split = "test";
};

RunConfig load_config(const Options& o, bool required = true) {
  RunConfig c;
  if (!o.config.empty()) {
    c = load_run_config(o.config);
  } else if (required) {
    throw ConfigError("--config is required");
  }
  if (o.threshold) {
    c.threshold = *o.threshold;
    validate(c);
  }
  return c;
}

fs::path prepare_run_dir(const RunConfig& c, const Options& o, const std::string& command) {
  const fs::path dir = o.out.empty() ? run_directory(c, command) : fs::path(o.out);
  fs::create_directories(dir);
  std::ofstream(dir / "run_config.json", std::ios::binary) << serialize(c);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

PairDataset load_dataset(const RunConfig& c, const CorpusFiles& corpus) {
  if (!c.paths.manifest.empty()) return read_manifest(c.paths.manifest, corpus.inventory);
  return build_dataset(c, corpus);
}

int cmd_synth(const Options& o) {
  RunConfig c = load_config(o, false);
  if (o.seed) c.synthetic.seed = *o.seed;
  validate(c.synthetic);
  const fs::path dir = o.out.empty() ? c.paths.corpus_dir : fs::path(o.out);
  const auto corpus = generate_synthetic_corpus(c.synthetic);
  write_synthetic_corpus(corpus, c.synthetic, dir);
  std::printf("corpus\t%s\nrecords\t%zu\nvocabulary\t%zu\n", dir.c_str(), corpus.records.size(),
              corpus.vocabulary.size());
  return kOk;
}

int cmd_mine(const Options& o) {
  RunConfig c = load_config(o);
  if (o.seed) c.seed = *o.seed;
  check_input_paths(c);
  const auto corpus = load_corpus(c.paths);
  MiningReport report;
  const auto ds = build_dataset(c, corpus, &report);
  const auto dir = prepare_run_dir(c, o, "mine");
  write_manifest(dir / "manifest.jsonl", ds, corpus.inventory);
  write_text(dir / "mining_report.txt", format_report(report));
  std::printf("%srun_dir\t%s\n", format_report(report).c_str(), dir.c_str());
  return kOk;
}

int cmd_train(const Options& o) {
  RunConfig c = load_config(o);
  if (o.seed) c.seed = *o.seed;
  check_input_paths(c);
  const auto corpus = load_corpus(c.paths);
  auto ds = load_dataset(c, corpus);
  const auto prepared = prepare_features(corpus, ds);
  const auto dir = prepare_run_dir(c, o, "train");

  std::ofstream metrics(dir / "metrics.tsv", std::ios::binary);
  std::ofstream mining(dir / "mining.tsv", std::ios::binary);
  metrics << metrics_header() << '\n';
  mining << mining_log_header() << '\n';
  std::printf("%s\n", metrics_header().c_str());
  TrainingCallbacks cb;
  cb.on_epoch = [&](const EpochMetrics& m, const SiameseModel&) {
    metrics << format_metrics(m) << '\n' << std::flush;
    std::printf("%s\n", format_metrics(m).c_str());
    std::fflush(stdout);
  };
  cb.on_round = [&](const MiningRound& r) { mining << format_mining_round(r) << '\n' << std::flush; };
  cb.on_divergence = [&](const ModelCheckpoint& ck) {
    save_checkpoint(dir / "diverged.ckpt", ck);
    std::fprintf(stderr, "diverged at epoch %zu; state saved to %s\n", ck.epoch, (dir / "diverged.ckpt").c_str());
  };
  const auto outcome = train_model(c, corpus.inventory, ds, prepared, cb);

  save_checkpoint(dir / "best.ckpt", outcome.result.best);
  save_checkpoint(dir / "last.ckpt", outcome.result.last);
  write_manifest(dir / "manifest.jsonl", ds, corpus.inventory);
  const auto eval = evaluate_split(outcome.result.best.model, ds, Split::test, prepared.features, c.train.distance,
                                   c.threshold);
  write_text(dir / "test_report.txt", format_report(eval));
  std::printf("best_epoch\t%zu\nself_labeled\t%zu\n%srun_dir\t%s\n", outcome.result.best_epoch, outcome.audit.added,
              format_report(eval).c_str(), dir.c_str());
  return kOk;
}

ModelCheckpoint load_checked(const Options& o, const CorpusFiles& corpus) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw IoError("no checkpoint at " + o.checkpoint);
  auto ck = load_checkpoint(o.checkpoint);
  check_inventory(ck, corpus.inventory);
  return ck;
}

int cmd_eval(const Options& o) {
  RunConfig c = load_config(o);
  if (o.seed) c.seed = *o.seed;
  check_input_paths(c);
  const auto corpus = load_corpus(c.paths);
  const auto ck = load_checked(o, corpus);
  const auto ds = load_dataset(c, corpus);
  const auto prepared = prepare_features(corpus, ds, ck.band_stats);
  const auto eval =
      evaluate_split(ck.model, ds, split_from_string(o.split), prepared.features, ck.train.distance, c.threshold);
  const auto dir = prepare_run_dir(c, o, "eval");
  write_text(dir / "report.txt", format_report(eval));
  std::printf("%srun_dir\t%s\n", format_report(eval).c_str(), dir.c_str());
  return kOk;
}

// Items file: one "acoustic <segment id>" or "phonetic <word>" per line.
int cmd_embed(const Options& o) {
  RunConfig c = load_config(o);
  check_input_paths(c);
  if (o.items.empty()) throw ConfigError("--items is required");
  const auto corpus = load_corpus(c.paths);
  const auto ck = load_checked(o, corpus);

  std::ifstream in(o.items);
  if (!in) throw IoError("cannot read " + o.items);
  std::vector<std::pair<Modality, std::string>> items;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string kind, name;
    if (!(ss >> kind)) continue;
    if (!(ss >> name) || (kind != "acoustic" && kind != "phonetic")) {
      throw DataError("bad item line '" + line + "': expected 'acoustic <segment>' or 'phonetic <word>'");
    }
    items.emplace_back(kind == "acoustic" ? Modality::acoustic : Modality::phonetic, name);
  }

  SegmentSet wanted;
  for (const auto& [m, name] : items) {
    if (m == Modality::acoustic) wanted.insert(name);
  }
  auto features = featurize_records(corpus.records, corpus.audio_base, wanted);
  apply_band_stats(features, ck.band_stats);

  std::vector<EmbeddingRow> rows;
  for (const auto& [m, name] : items) {
    if (m == Modality::acoustic) {
      rows.push_back({name, m, ck.model.embed_acoustic(features.at(name))});
    } else {
      const auto* phones = corpus.lexicon.find(name);
      if (phones == nullptr) throw DataError("word not in the lexicon: " + name);
      rows.push_back({name, m, ck.model.embed_phonetic(*phones)});
    }
  }
  const auto dir = prepare_run_dir(c, o, "embed");
  export_embeddings(dir / "embeddings.tsv", rows, ck.model.config().embedding_dim);
  std::printf("rows\t%zu\nembeddings\t%s\n", rows.size(), (dir / "embeddings.tsv").c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic word embeddings: corpus synthesis, pair mining, Siamese training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", o.config, "Run config (JSON, versioned)");
    if (config_required) opt->required();
    sub->add_option("--out", o.out, "Output directory (default: a run directory named by config hash and time)");
  };
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  common(synth, false);
  synth->add_option("--seed", o.seed, "Corpus seed override");
  auto* mine = app.add_subcommand("mine", "Mine pairs and write a dataset manifest");
  common(mine, true);
  mine->add_option("--seed", o.seed, "Run seed override (split)");
  auto* train = app.add_subcommand("train", "Train the Siamese model");
  common(train, true);
  train->add_option("--seed", o.seed, "Run seed override");
  train->add_option("--threshold", o.threshold, "Decision threshold for the final test report");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  common(eval, true);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval->add_option("--threshold", o.threshold, "Decision threshold (default 0.5)");
  eval->add_option("--seed", o.seed, "Run seed override (split)");
  eval->add_option("--split", o.split, "Split to evaluate")->check(CLI::IsMember({"train", "dev", "test"}));
  auto* embed = app.add_subcommand("embed", "Export embeddings for listed items");
  common(embed, true);
  embed->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  embed->add_option("--items", o.items, "Items file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*mine) return cmd_mine(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*embed) return cmd_embed(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kDivergence;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternal;
  }
  return kInternal;
}
