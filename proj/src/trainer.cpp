#include "awe/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "awe/error.hpp"

namespace awe {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void validate(const TrainConfig& c) {
  auto check = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ConfigError(std::string("train config: ") + field + " " + why);
  };
  check(c.margin > 0.0, "margin", "must be positive");
  check(c.batch_size > 0, "batch_size", "must be positive");
  check(c.initial_lr > 0.0, "initial_lr", "must be positive");
  check(c.lr_max > 0.0, "lr_max", "must be positive");
  check(c.initial_lr <= c.lr_max, "initial_lr", "must not exceed lr_max");
  check(c.plateau_patience > 0, "plateau_patience", "must be positive");
  check(c.plateau_tolerance >= 0.0, "plateau_tolerance", "must not be negative");
  check(c.lr_factor > 1.0, "lr_factor", "must exceed 1");
  check(c.max_norm > 0.0, "max_norm", "must be positive");
  check(c.epochs > 0, "epochs", "must be positive");
}

std::string serialize(const TrainConfig& c) {
  json j{{"distance", to_string(c.distance)},
         {"margin_mode", to_string(c.margin_mode)},
         {"margin", c.margin},
         {"batch_size", c.batch_size},
         {"initial_lr", c.initial_lr},
         {"plateau_patience", c.plateau_patience},
         {"plateau_tolerance", c.plateau_tolerance},
         {"lr_factor", c.lr_factor},
         {"lr_max", c.lr_max},
         {"max_norm", c.max_norm},
         {"epochs", c.epochs},
         {"seed", c.seed}};
  return j.dump();
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (value.is_number_integer() && value.get<long long>() < 0) {
      throw ConfigError("train config: " + key + " must not be negative");
    }
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ConfigError(std::string("train config: ") + key + " has the wrong type");
    }
  };
  std::string distance = to_string(c.distance), margin_mode = to_string(c.margin_mode);
  get("distance", distance);
  get("margin_mode", margin_mode);
  c.distance = distance_kind_from_string(distance);
  c.margin_mode = margin_mode_from_string(margin_mode);
  get("margin", c.margin);
  get("batch_size", c.batch_size);
  get("initial_lr", c.initial_lr);
  get("plateau_patience", c.plateau_patience);
  get("plateau_tolerance", c.plateau_tolerance);
  get("lr_factor", c.lr_factor);
  get("lr_max", c.lr_max);
  get("max_norm", c.max_norm);
  get("epochs", c.epochs);
  get("seed", c.seed);
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Schedule

LearningRateSchedule::LearningRateSchedule(const TrainConfig& c)
    : lr_(c.initial_lr),
      factor_(c.lr_factor),
      lr_max_(c.lr_max),
      patience_(c.plateau_patience),
      tolerance_(c.plateau_tolerance) {}

bool LearningRateSchedule::on_epoch_end(double dev_loss) {
  if (!has_best_ || dev_loss < best_ - tolerance_) {
    best_ = dev_loss;
    has_best_ = true;
    stale_ = 0;
    return false;
  }
  if (++stale_ < patience_) return false;
  lr_ /= factor_;
  stale_ = 0;
  return true;
}

bool LearningRateSchedule::on_mining(std::size_t added) {
  if (added == 0) return false;
  lr_ = std::min(lr_ * factor_, lr_max_);
  stale_ = 0;
  return true;
}

std::string metrics_header() { return "epoch\ttrain_loss\tdev_loss\tlr\ttrain_size\tmined"; }

std::string format_metrics(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t%zu\t%zu", m.epoch, m.train_loss, m.dev_loss, m.lr,
                m.train_size, m.mined);
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'W', 'E', 'C'};
constexpr char kCheckpointTrailer[4] = {'C', 'E', 'W', 'A'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::size_t limit = 1u << 26) {
  const auto n = get<std::uint64_t>(in);
  if (n > limit) throw DataError("corrupt checkpoint string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw DataError("truncated checkpoint");
  return s;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor<float>& t) {
  put_string(out, name);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

std::pair<std::string, Tensor<float>> get_tensor(std::istream& in) {
  std::string name = get_string(in, 1024);
  const auto rank = get<std::uint32_t>(in);
  if (rank > 8) throw DataError("corrupt checkpoint tensor rank");
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
  const std::size_t n = shape_size(shape);
  if (n > (std::size_t{1} << 32)) throw DataError("corrupt checkpoint tensor size");
  Tensor<float> t(shape);
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw DataError("truncated checkpoint");
  return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    const json header{{"encoder", json::parse(serialize(ck.model.config()))},
                      {"train", json::parse(serialize(ck.train))},
                      {"inventory", ck.inventory},
                      {"inventory_hash", ck.inventory_hash},
                      {"epoch", ck.epoch}};
    put_string(out, header.dump());
    put<double>(out, ck.learning_rate);

    auto model = ck.model;  // parameters() needs a mutable model
    const auto params = model.parameters();
    put<std::uint64_t>(out, params.size());
    for (const auto& p : params) put_tensor(out, p.name, *p.value);

    put<std::uint64_t>(out, ck.optimizer.step);
    put<std::uint64_t>(out, ck.optimizer.first_moment.size());
    for (std::size_t i = 0; i < ck.optimizer.first_moment.size(); ++i) {
      put_tensor(out, params.at(i).name + ".m", ck.optimizer.first_moment[i]);
      put_tensor(out, params.at(i).name + ".v", ck.optimizer.second_moment.at(i));
    }
    for (double v : ck.band_stats.mean) put<double>(out, v);
    for (double v : ck.band_stats.std) put<double>(out, v);
    out.write(kCheckpointTrailer, 4);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));

  ModelCheckpoint ck;
  try {
    const json header = json::parse(get_string(in));
    const EncoderConfig encoder = parse_encoder_config(header.at("encoder").dump());
    ck.train = parse_train_config(header.at("train").dump());
    ck.inventory = header.at("inventory").get<std::vector<std::string>>();
    ck.inventory_hash = header.at("inventory_hash").get<std::uint64_t>();
    ck.epoch = header.at("epoch").get<std::size_t>();
    ck.model = SiameseModel(encoder,
                            Network<float>(encoder_layers(encoder, Modality::acoustic), input_shape(Modality::acoustic)),
                            Network<float>(encoder_layers(encoder, Modality::phonetic), input_shape(Modality::phonetic)));
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
  ck.learning_rate = get<double>(in);

  auto params = ck.model.parameters();
  const auto count = get<std::uint64_t>(in);
  if (count != params.size()) throw DataError("checkpoint parameter count does not match its encoder config");
  for (auto& p : params) {
    auto [name, t] = get_tensor(in);
    if (name != p.name || t.shape() != p.value->shape()) {
      throw DataError("checkpoint tensor " + name + " does not match " + p.name + " " +
                      shape_string(p.value->shape()));
    }
    *p.value = std::move(t);
  }

  ck.optimizer.step = get<std::uint64_t>(in);
  const auto moments = get<std::uint64_t>(in);
  if (moments != 0 && moments != params.size()) throw DataError("checkpoint optimizer state is inconsistent");
  for (std::size_t i = 0; i < moments; ++i) {
    auto m = get_tensor(in);
    auto v = get_tensor(in);
    if (m.second.shape() != params[i].value->shape() || v.second.shape() != params[i].value->shape()) {
      throw DataError("checkpoint optimizer moment shape mismatch for " + params[i].name);
    }
    ck.optimizer.first_moment.push_back(std::move(m.second));
    ck.optimizer.second_moment.push_back(std::move(v.second));
  }
  for (double& v : ck.band_stats.mean) v = get<double>(in);
  for (double& v : ck.band_stats.std) v = get<double>(in);
  char trailer[4];
  in.read(trailer, 4);
  if (!in || std::memcmp(trailer, kCheckpointTrailer, 4) != 0) throw DataError("truncated checkpoint");
  return ck;
}

void check_inventory(const ModelCheckpoint& ck, const PhoneInventory& inventory) {
  if (ck.inventory_hash != inventory.hash()) {
    throw DataError("checkpoint was trained with a different phone inventory");
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

constexpr std::size_t kEvalChunk = 256;

struct BatchInputs {
  Tensor<float> acoustic;
  Tensor<float> phonetic;
  std::vector<int> labels;
  std::vector<double> margins;
};

BatchInputs assemble(std::span<const PairExample* const> batch, const FeatureStore& features,
                     const TrainConfig& config) {
  std::vector<const MelFeature*> feats;
  std::vector<const PhoneSequence*> phones;
  BatchInputs in;
  for (const auto* e : batch) {
    const auto it = features.find(e->segment_id);
    if (it == features.end()) throw DataError("no features for segment " + e->segment_id);
    feats.push_back(&it->second);
    phones.push_back(&e->phones);
    in.labels.push_back(e->label);
  }
  in.acoustic = acoustic_batch<float>(feats);
  in.phonetic = phonetic_batch<float>(phones);
  in.margins = pair_margins(batch, config);
  return in;
}

}  // namespace

std::vector<double> pair_margins(std::span<const PairExample* const> batch, const TrainConfig& config) {
  std::vector<double> margins;
  margins.reserve(batch.size());
  for (const auto* e : batch) {
    if (config.margin_mode == MarginMode::fixed || e->label == 0) {
      margins.push_back(config.margin);
    } else {
      margins.push_back(phonetic_edit_distance(e->phones, e->reference_phones));
    }
  }
  return margins;
}

double evaluate_loss(const SiameseModel& model, std::span<const PairExample* const> pairs,
                     const FeatureStore& features, const TrainConfig& config) {
  if (pairs.empty()) return 0.0;
  Rng unused(0);
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); i += kEvalChunk) {
    const auto chunk = pairs.subspan(i, std::min(kEvalChunk, pairs.size() - i));
    const auto in = assemble(chunk, features, config);
    const auto res = siamese_batch_loss<float>(model.acoustic(), model.phonetic(), in.acoustic, in.phonetic,
                                               in.labels, in.margins, config.distance, Mode::eval, unused, false);
    total += res.loss * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(pairs.size());
}

Trainer::Trainer(SiameseModel model, TrainConfig config, const FeatureStore& features, BandStats band_stats,
                 const PhoneInventory& inventory)
    : model_(std::move(model)),
      config_(config),
      features_(features),
      band_stats_(band_stats),
      inventory_(inventory.symbols().begin(), inventory.symbols().end()),
      inventory_hash_(inventory.hash()),
      schedule_(config),
      rng_(config.seed) {
  validate(config_);
}

ModelCheckpoint Trainer::checkpoint(std::size_t epoch) const {
  ModelCheckpoint ck;
  ck.model = model_;
  ck.optimizer = adam_;
  ck.learning_rate = schedule_.lr();
  ck.epoch = epoch;
  ck.train = config_;
  ck.band_stats = band_stats_;
  ck.inventory = inventory_;
  ck.inventory_hash = inventory_hash_;
  return ck;
}

double Trainer::step(std::span<const PairExample* const> batch) {
  const auto in = assemble(batch, features_, config_);
  auto res = siamese_batch_loss<float>(model_.acoustic(), model_.phonetic(), in.acoustic, in.phonetic, in.labels,
                                       in.margins, config_.distance, Mode::train, rng_, true);
  if (!std::isfinite(res.loss)) throw DivergenceError("non-finite training loss");

  std::vector<Tensor<float>*> params;
  for (auto& p : model_.parameters()) params.push_back(p.value);
  std::vector<Tensor<float>> grads = std::move(res.acoustic.params);
  for (auto& g : res.phonetic.params) grads.push_back(std::move(g));
  adam_step<float>(params, grads, adam_, schedule_.lr());
  model_.constrain(config_.max_norm);
  return res.loss;
}

TrainResult Trainer::train(PairDataset& dataset, const TrainHooks& hooks) {
  TrainResult result;
  double best_dev = 0.0;
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= config_.epochs; ++epoch) {
    const auto train = dataset.split(Split::train);
    const auto dev = dataset.split(Split::dev);
    if (train.size() < config_.batch_size) throw DataError("train split is smaller than one batch");
    if (dev.empty()) throw DataError("dev split is empty");

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = schedule_.lr();
    m.train_size = train.size();
    const std::size_t batches = train.size() / config_.batch_size;
    std::vector<const PairExample*> batch(config_.batch_size);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      for (std::size_t k = 0; k < config_.batch_size; ++k) batch[k] = train[order[b * config_.batch_size + k]];
      double loss;
      try {
        loss = step(batch);
      } catch (const DivergenceError&) {
        if (hooks.on_divergence) hooks.on_divergence(checkpoint(epoch));
        throw;
      }
      loss_sum += loss;
      ++global_step;
      if (hooks.on_step) hooks.on_step(global_step, loss, model_);
    }
    m.train_loss = loss_sum / static_cast<double>(batches);
    m.dev_loss = evaluate_loss(model_, dev, features_, config_);
    if (!std::isfinite(m.dev_loss)) {
      if (hooks.on_divergence) hooks.on_divergence(checkpoint(epoch));
      throw DivergenceError("non-finite dev loss at epoch " + std::to_string(epoch));
    }
    schedule_.on_epoch_end(m.dev_loss);
    if (result.history.empty() || m.dev_loss < best_dev) {
      best_dev = m.dev_loss;
      result.best = checkpoint(epoch);
      result.best_epoch = epoch;
    }
    if (hooks.mining_period > 0 && hooks.mine && epoch % hooks.mining_period == 0) {
      m.mined = hooks.mine(epoch, model_, dataset);
      schedule_.on_mining(m.mined);
    }
    result.history.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
  }
  result.last = checkpoint(config_.epochs);
  return result;
}

}  // namespace awe
