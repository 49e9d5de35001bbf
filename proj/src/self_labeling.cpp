#include "awe/self_labeling.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "awe/error.hpp"

namespace awe {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sq += d * d;
  }
  return sq;
}

KdTree::KdTree(std::vector<std::vector<float>> points) : points_(std::move(points)) {
  require(!points_.empty(), "cannot build a k-d tree over no points");
  dim_ = points_.front().size();
  require(dim_ > 0, "k-d tree points need at least one dimension");
  for (const auto& p : points_) require(p.size() == dim_, "k-d tree points differ in dimension");
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  build(0, order_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  // Split on the axis of largest spread at the median.
  std::size_t axis = 0;
  float widest = -1.0f;
  for (std::size_t d = 0; d < dim_; ++d) {
    float lo = points_[order_[begin]][d], hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = std::min(lo, points_[order_[i]][d]);
      hi = std::max(hi, points_[order_[i]][d]);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = d;
    }
  }
  if (widest <= 0.0f) return id;  // all points identical: keep as a leaf

  const std::size_t mid = begin + (end - begin) / 2;
  auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
  std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(int node, std::span<const float> query, double radius_sq, double radius,
                    std::vector<std::size_t>& out) const {
  const Node& n = nodes_[node];
  if (n.left < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      if (squared_distance(points_[order_[i]], query) <= radius_sq) out.push_back(order_[i]);
    }
    return;
  }
  // Left holds coordinates <= split, right >= split. The slack only ever
  // visits more nodes; membership is decided in the leaves.
  const double diff = static_cast<double>(query[n.axis]) - static_cast<double>(n.split);
  const double reach = radius * (1.0 + 1e-9) + 1e-12;
  if (diff <= reach) search(n.left, query, radius_sq, radius, out);
  if (-diff <= reach) search(n.right, query, radius_sq, radius, out);
}

std::vector<std::size_t> KdTree::range_query(std::span<const float> query, double radius) const {
  require(query.size() == dim_, "query dimension does not match the tree");
  std::vector<std::size_t> out;
  if (radius < 0.0) return out;
  search(0, query, radius * radius, radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> KdTree::brute_force(std::span<const float> query, double radius) const {
  require(query.size() == dim_, "query dimension does not match the tree");
  std::vector<std::size_t> out;
  if (radius < 0.0) return out;
  const double radius_sq = radius * radius;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (squared_distance(points_[i], query) <= radius_sq) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------

void validate(const MiningConfig& c) {
  auto check = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ConfigError(std::string("self-labeling config: ") + field + " " + why);
  };
  check(c.period > 0, "period", "must be positive");
  check(c.growth_c >= 0.0, "growth_c", "must not be negative");
  check(c.growth_fraction > 0.0, "growth_fraction", "must be positive");
  check(c.positive_threshold > 0.0, "positive_threshold", "must be positive");
  check(c.max_added_fraction > 0.0, "max_added_fraction", "must be positive");
}

std::string serialize(const MiningConfig& c) {
  nlohmann::json j{{"period", c.period},
                   {"growth_c", c.growth_c},
                   {"growth_fraction", c.growth_fraction},
                   {"positive_threshold", c.positive_threshold},
                   {"max_added", c.max_added},
                   {"max_added_fraction", c.max_added_fraction},
                   {"spot_checks", c.spot_checks}};
  return j.dump();
}

MiningConfig parse_mining_config(const std::string& text) {
  MiningConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("self-labeling config: ") + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (value.is_number_integer() && value.get<long long>() < 0) {
      throw ConfigError("self-labeling config: " + key + " must not be negative");
    }
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("self-labeling config: ") + key + " has the wrong type");
    }
  };
  get("period", c.period);
  get("growth_c", c.growth_c);
  get("growth_fraction", c.growth_fraction);
  get("positive_threshold", c.positive_threshold);
  get("max_added", c.max_added);
  get("max_added_fraction", c.max_added_fraction);
  get("spot_checks", c.spot_checks);
  validate(c);
  return c;
}

std::string mining_log_header() {
  return "epoch\tsample_size\tqueries\tcandidates\tadded\ttrain_size\tspot_checks\tcumulative_growth";
}

std::string format_mining_round(const MiningRound& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu\t%zu\t%zu\t%zu\t%zu\t%zu\t%zu\t%.6f", r.epoch, r.sample_size, r.queries,
                r.candidates, r.added, r.train_size, r.spot_checks, r.cumulative_growth);
  return buf;
}

MiningRound mine_round(const SiameseModel& model, PairDataset& dataset, const FeatureStore& features,
                       std::size_t epoch, const MiningConfig& config, DistanceKind kind, Rng& rng,
                       std::size_t initial_train_size) {
  validate(config);
  MiningRound round;
  round.epoch = epoch;

  // Training lexicon and per-segment references.
  std::map<PhoneSequence, std::string> lexicon;
  std::map<std::string, const PairExample*, std::less<>> reference;
  for (const auto& e : dataset.examples) {
    if (e.split != Split::train) continue;
    lexicon.emplace(e.phones, e.word);
    lexicon.emplace(e.reference_phones, e.reference_word);
    reference.emplace(e.segment_id, &e);
  }
  const std::size_t train_before = dataset.count(Split::train);
  if (initial_train_size == 0) initial_train_size = train_before;
  round.train_size = train_before;
  if (lexicon.empty()) return round;

  std::vector<const PhoneSequence*> word_phones;
  std::vector<std::string> word_names;
  for (const auto& [phones, word] : lexicon) {
    word_phones.push_back(&phones);
    word_names.push_back(word);
  }
  const KdTree tree(model.embed_phonetic(word_phones));

  std::vector<std::string> segments;
  for (const auto& [id, e] : reference) segments.push_back(id);
  const double growth_c =
      config.growth_c > 0.0 ? config.growth_c : config.growth_fraction * static_cast<double>(segments.size());
  const auto wanted = static_cast<std::size_t>(std::llround(growth_c * static_cast<double>(epoch)));
  round.sample_size = std::min(wanted, segments.size());
  std::shuffle(segments.begin(), segments.end(), rng);
  segments.resize(round.sample_size);

  std::vector<const MelFeature*> feats;
  for (const auto& id : segments) {
    const auto it = features.find(id);
    if (it == features.end()) throw DataError("no features for segment " + id);
    feats.push_back(&it->second);
  }
  const auto acoustic = model.embed_acoustic(feats);

  const std::size_t cap =
      config.max_added > 0
          ? config.max_added
          : std::max<std::size_t>(1, static_cast<std::size_t>(config.max_added_fraction * static_cast<double>(train_before)));
  auto keys = dataset.keys();
  // Slightly inflated so rounding in |a-b|^2 = 2(1 - a.b) never loses a
  // point; the exact threshold test follows.
  const double radius = euclidean_radius(config.positive_threshold, kind) * (1.0 + 1e-6) + 1e-6;

  std::vector<PairExample> added;
  for (std::size_t q = 0; q < segments.size(); ++q) {
    const auto hits = tree.range_query(acoustic[q], radius);
    ++round.queries;
    if (round.spot_checks < config.spot_checks) {
      if (hits != tree.brute_force(acoustic[q], radius)) {
        throw std::logic_error("k-d tree range query disagrees with the linear scan");
      }
      ++round.spot_checks;
    }
    const PairExample& ref = *reference.at(segments[q]);
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t h : hits) {
      const double d = distance_unchecked<float>(acoustic[q], tree.point(h), kind);
      if (d < config.positive_threshold && *word_phones[h] != ref.reference_phones) ranked.emplace_back(d, h);
    }
    std::sort(ranked.begin(), ranked.end());
    round.candidates += ranked.size();
    for (const auto& [d, h] : ranked) {
      if (added.size() >= cap) break;
      if (!keys.insert({segments[q], *word_phones[h]}).second) continue;
      PairExample e;
      e.segment_id = segments[q];
      e.word = word_names[h];
      e.phones = *word_phones[h];
      e.label = 1;
      e.origin = Origin::self_labeled;
      e.split = Split::train;
      e.reference_word = ref.reference_word;
      e.reference_phones = ref.reference_phones;
      e.mined_distance = d;
      added.push_back(std::move(e));
    }
  }
  round.added = added.size();
  dataset.examples.insert(dataset.examples.end(), std::make_move_iterator(added.begin()),
                          std::make_move_iterator(added.end()));
  round.train_size = train_before + round.added;
  round.cumulative_growth =
      static_cast<double>(round.train_size) / static_cast<double>(initial_train_size) - 1.0;
  return round;
}

MiningAudit audit_self_labeled(const PairDataset& dataset) {
  MiningAudit audit;
  std::map<PairKey, std::size_t> seen;
  for (const auto& e : dataset.examples) ++seen[key_of(e)];
  for (const auto& e : dataset.examples) {
    if (e.origin != Origin::self_labeled) continue;
    ++audit.added;
    if (seen[key_of(e)] > 1) ++audit.duplicate_keys;
    if (e.label != 1 || e.phones == e.reference_phones) ++audit.mislabeled;
    if (e.split != Split::train) ++audit.outside_train;
  }
  return audit;
}

}  // namespace awe
