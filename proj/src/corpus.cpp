#include "awe/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "awe/error.hpp"

namespace awe {

using nlohmann::json;

namespace {

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

void check_header(const json& header, const std::string& format, int version, const std::filesystem::path& path) {
  if (!header.is_object() || header.value("format", "") != format) {
    throw DataError(path.string() + ": missing '" + format + "' header");
  }
  if (header.value("version", -1) != version) {
    throw DataError(path.string() + ": unsupported version " + header.value("version", json(-1)).dump());
  }
}

std::string join_symbols(const PhoneInventory& inv, const PhoneSequence& seq) {
  std::string out;
  for (const auto& s : inv.render(seq)) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

PhoneSequence split_symbols(const PhoneInventory& inv, const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> symbols;
  for (std::string s; ss >> s;) symbols.push_back(s);
  try {
    return inv.parse(symbols);
  } catch (const ContractViolation& e) {
    throw DataError(std::string("bad phone sequence '") + text + "': " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Alignment records

std::vector<AlignmentRecord> read_alignments(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::vector<AlignmentRecord> out;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line, path, lineno);
    if (!header_seen) {
      check_header(j, "awe-alignments", kAlignmentFormatVersion, path);
      header_seen = true;
      continue;
    }
    try {
      AlignmentRecord r;
      r.segment_id = j.at("segment_id").get<std::string>();
      r.wav_path = j.at("wav_path").get<std::string>();
      r.start_s = j.at("start_s").get<double>();
      r.end_s = j.at("end_s").get<double>();
      r.human_word = j.at("human_word").get<std::string>();
      r.hypothesis_words = j.at("hypothesis_words").get<std::vector<std::string>>();
      r.aligned_ok = j.at("aligned_ok").get<bool>();
      if (!(r.start_s < r.end_s) || r.start_s < 0.0) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": start_s must be below end_s");
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header_seen) throw DataError(path.string() + ": empty alignment file");
  return out;
}

void write_alignments(const std::filesystem::path& path, const std::vector<AlignmentRecord>& records) {
  auto out = open_for_write(path);
  out << json{{"format", "awe-alignments"}, {"version", kAlignmentFormatVersion}}.dump() << '\n';
  for (const auto& r : records) {
    json j;
    j["segment_id"] = r.segment_id;
    j["wav_path"] = r.wav_path;
    j["start_s"] = r.start_s;
    j["end_s"] = r.end_s;
    j["human_word"] = r.human_word;
    j["hypothesis_words"] = r.hypothesis_words;
    j["aligned_ok"] = r.aligned_ok;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------

std::string to_string(Origin o) {
  switch (o) {
    case Origin::positive: return "positive";
    case Origin::substitution: return "substitution";
    case Origin::synthesized: return "synthesized";
    case Origin::self_labeled: return "self_labeled";
  }
  return "?";
}

Origin origin_from_string(const std::string& name) {
  for (auto o : {Origin::positive, Origin::substitution, Origin::synthesized, Origin::self_labeled}) {
    if (to_string(o) == name) return o;
  }
  throw DataError("unknown origin: " + name);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::none: return "none";
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& name) {
  for (auto s : {Split::none, Split::train, Split::dev, Split::test}) {
    if (to_string(s) == name) return s;
  }
  throw DataError("unknown split: " + name);
}

std::set<PairKey> PairDataset::keys() const {
  std::set<PairKey> out;
  for (const auto& e : examples) out.insert(key_of(e));
  return out;
}

std::vector<const PairExample*> PairDataset::split(Split s) const {
  std::vector<const PairExample*> out;
  for (const auto& e : examples) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

std::size_t PairDataset::count(Split s) const {
  return static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(), [&](const auto& e) { return e.split == s; }));
}

std::size_t PairDataset::count(Split s, int label) const {
  return static_cast<std::size_t>(std::count_if(
      examples.begin(), examples.end(), [&](const auto& e) { return e.split == s && e.label == label; }));
}

// ---------------------------------------------------------------------------
// Pair extraction

std::vector<PairExample> extract_positives(const std::vector<AlignmentRecord>& records, const Lexicon& lexicon,
                                           PositiveReport* report) {
  PositiveReport rep;
  std::vector<PairExample> out;
  std::set<std::string, std::less<>> seen;
  for (const auto& r : records) {
    if (!r.aligned_ok) {
      ++rep.misaligned;
      continue;
    }
    if (std::find(r.hypothesis_words.begin(), r.hypothesis_words.end(), r.human_word) == r.hypothesis_words.end()) {
      ++rep.no_match;
      continue;
    }
    const PhoneSequence* phones = lexicon.find(r.human_word);
    if (!phones) {
      ++rep.out_of_vocabulary;
      continue;
    }
    if (!seen.insert(r.segment_id).second) {
      ++rep.duplicate_segments;
      continue;
    }
    PairExample e;
    e.segment_id = r.segment_id;
    e.word = r.human_word;
    e.phones = *phones;
    e.label = 0;
    e.origin = Origin::positive;
    e.reference_word = r.human_word;
    e.reference_phones = *phones;
    out.push_back(std::move(e));
  }
  rep.emitted = out.size();
  if (report) *report = rep;
  return out;
}

std::vector<PairExample> extract_substitution_negatives(const std::vector<AlignmentRecord>& records,
                                                        const Lexicon& lexicon,
                                                        const std::vector<PairExample>& positives,
                                                        NegativeReport* report) {
  NegativeReport rep;
  std::map<std::string, const PairExample*, std::less<>> by_segment;
  for (const auto& p : positives) by_segment.emplace(p.segment_id, &p);

  std::vector<PairExample> out;
  std::set<PairKey> seen;
  for (const auto& r : records) {
    const auto it = by_segment.find(r.segment_id);
    if (it == by_segment.end() || it->second->word != r.human_word) continue;
    const PairExample& pos = *it->second;
    for (const auto& hyp : r.hypothesis_words) {
      if (hyp == r.human_word) continue;
      const PhoneSequence* phones = lexicon.find(hyp);
      if (!phones) {
        ++rep.out_of_vocabulary;
        continue;
      }
      // Same pronunciation as the reference: not a negative.
      if (*phones == pos.phones) {
        ++rep.homophones;
        continue;
      }
      if (!seen.insert({r.segment_id, *phones}).second) {
        ++rep.duplicates;
        continue;
      }
      PairExample e;
      e.segment_id = r.segment_id;
      e.word = hyp;
      e.phones = *phones;
      e.label = 1;
      e.origin = Origin::substitution;
      e.reference_word = pos.reference_word;
      e.reference_phones = pos.reference_phones;
      out.push_back(std::move(e));
    }
  }
  rep.emitted = out.size();
  if (report) *report = rep;
  return out;
}

std::vector<PairExample> synthesize_negatives(const std::vector<PairExample>& negatives,
                                              const std::set<PairKey>& existing, double max_dist) {
  // Grouped by reference word; map keeps the output order deterministic.
  std::map<std::string, std::vector<const PairExample*>> groups;
  for (const auto& n : negatives) {
    if (phonetic_edit_distance(n.reference_phones, n.phones) < max_dist) groups[n.reference_word].push_back(&n);
  }

  std::vector<PairExample> out;
  std::set<PairKey> added;
  for (const auto& [word, members] : groups) {
    std::vector<std::string> segments;
    std::map<std::string, const PairExample*, std::less<>> first_of_segment;
    for (const auto* m : members) {
      if (first_of_segment.emplace(m->segment_id, m).second) segments.push_back(m->segment_id);
    }
    for (const auto& seg : segments) {
      const PairExample& anchor = *first_of_segment.at(seg);
      for (const auto* other : members) {
        if (other->segment_id == seg) continue;
        PairKey key{seg, other->phones};
        if (existing.contains(key) || !added.insert(key).second) continue;
        PairExample e;
        e.segment_id = seg;
        e.word = other->word;
        e.phones = other->phones;
        e.label = 1;
        e.origin = Origin::synthesized;
        e.reference_word = anchor.reference_word;
        e.reference_phones = anchor.reference_phones;
        out.push_back(std::move(e));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering and splitting

PairDataset filter_dataset(const PairDataset& ds, const std::set<std::string, std::less<>>& stop_words,
                           const std::map<std::string, double, std::less<>>& durations, double min_duration_s,
                           FilterReport* report) {
  FilterReport rep;
  PairDataset out;
  for (const auto& e : ds.examples) {
    if (stop_words.contains(e.word) || stop_words.contains(e.reference_word)) {
      ++rep.stop_words;
      continue;
    }
    const auto it = durations.find(e.segment_id);
    if (it == durations.end()) throw DataError("no duration known for segment " + e.segment_id);
    if (it->second < min_duration_s) {
      ++rep.too_short;
      continue;
    }
    out.examples.push_back(e);
  }
  rep.kept = out.examples.size();
  if (report) *report = rep;
  return out;
}

namespace {

void validate_fractions(const SplitFractions& f) {
  if (f.train < 0.0 || f.dev < 0.0 || f.test < 0.0 || std::abs(f.train + f.dev + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
}

}  // namespace

PairDataset stratified_split(const PairDataset& ds, const SplitFractions& fractions, std::uint64_t seed,
                             bool segment_disjoint) {
  validate_fractions(fractions);
  PairDataset out = ds;
  std::mt19937_64 rng(seed);
  const std::size_t nonzero = (fractions.train > 0) + (fractions.dev > 0) + (fractions.test > 0);

  if (!segment_disjoint) {
    for (int label : {0, 1}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < out.examples.size(); ++i) {
        if (out.examples[i].label == label) idx.push_back(i);
      }
      if (idx.size() < nonzero) {
        throw DataError("too few examples with label " + std::to_string(label) + " to stratify");
      }
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n = static_cast<double>(idx.size());
      const auto n_train = static_cast<std::size_t>(std::llround(n * fractions.train));
      const auto n_dev = std::min(idx.size() - n_train, static_cast<std::size_t>(std::llround(n * fractions.dev)));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        out.examples[idx[k]].split = k < n_train ? Split::train : (k < n_train + n_dev ? Split::dev : Split::test);
      }
    }
    return out;
  }

  // Whole segments go to one split; fill train, then dev, then test by
  // cumulative example count.
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_segment;
  for (std::size_t i = 0; i < out.examples.size(); ++i) by_segment[out.examples[i].segment_id].push_back(i);
  if (by_segment.size() < nonzero) throw DataError("too few segments for a segment-disjoint split");
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [seg, members] : by_segment) groups.push_back(&members);
  std::shuffle(groups.begin(), groups.end(), rng);
  const double total = static_cast<double>(out.examples.size());
  std::size_t assigned = 0;
  for (const auto* members : groups) {
    const double pos = (static_cast<double>(assigned) + 0.5 * static_cast<double>(members->size())) / total;
    const Split s = pos < fractions.train ? Split::train
                    : pos < fractions.train + fractions.dev ? Split::dev
                                                            : Split::test;
    for (std::size_t i : *members) out.examples[i].split = s;
    assigned += members->size();
  }
  return out;
}

std::set<std::string, std::less<>> load_stop_words(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::set<std::string, std::less<>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string w;
    if (ss >> w) out.insert(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

void write_manifest(const std::filesystem::path& path, const PairDataset& ds, const PhoneInventory& inventory) {
  auto out = open_for_write(path);
  out << json{{"format", "awe-manifest"},
              {"version", kManifestFormatVersion},
              {"inventory_hash", inventory.hash()},
              {"count", ds.examples.size()}}
             .dump()
      << '\n';
  for (const auto& e : ds.examples) {
    json j;
    j["segment_id"] = e.segment_id;
    j["word"] = e.word;
    j["phones"] = join_symbols(inventory, e.phones);
    j["label"] = e.label;
    j["origin"] = to_string(e.origin);
    j["split"] = to_string(e.split);
    j["reference_word"] = e.reference_word;
    j["reference_phones"] = join_symbols(inventory, e.reference_phones);
    if (e.mined_distance) j["mined_distance"] = *e.mined_distance;
    out << j.dump() << '\n';
  }
}

PairDataset read_manifest(const std::filesystem::path& path, const PhoneInventory& inventory) {
  auto in = open_for_read(path);
  PairDataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json j = parse_line(line, path, lineno);
    if (!header_seen) {
      check_header(j, "awe-manifest", kManifestFormatVersion, path);
      if (j.value("inventory_hash", std::uint64_t{0}) != inventory.hash()) {
        throw DataError(path.string() + ": manifest was written with a different phone inventory");
      }
      expected = j.value("count", std::size_t{0});
      header_seen = true;
      continue;
    }
    try {
      PairExample e;
      e.segment_id = j.at("segment_id").get<std::string>();
      e.word = j.at("word").get<std::string>();
      e.phones = split_symbols(inventory, j.at("phones").get<std::string>());
      e.label = j.at("label").get<int>();
      e.origin = origin_from_string(j.at("origin").get<std::string>());
      e.split = split_from_string(j.at("split").get<std::string>());
      e.reference_word = j.at("reference_word").get<std::string>();
      e.reference_phones = split_symbols(inventory, j.at("reference_phones").get<std::string>());
      if (j.contains("mined_distance")) e.mined_distance = j.at("mined_distance").get<double>();
      if (e.label != (e.origin == Origin::positive ? 0 : 1)) {
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": label does not match origin");
      }
      ds.examples.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header_seen) throw DataError(path.string() + ": empty manifest");
  if (ds.examples.size() != expected) throw DataError(path.string() + ": truncated manifest");
  return ds;
}

// ---------------------------------------------------------------------------

PairDataset mine_dataset(const std::vector<AlignmentRecord>& records, const Lexicon& lexicon,
                         const std::set<std::string, std::less<>>& stop_words, const MiningOptions& options,
                         MiningReport* report) {
  MiningReport rep;
  PairDataset ds;
  ds.examples = extract_positives(records, lexicon, &rep.positives);
  auto negatives = extract_substitution_negatives(records, lexicon, ds.examples, &rep.negatives);
  ds.examples.insert(ds.examples.end(), negatives.begin(), negatives.end());
  auto synthesized = synthesize_negatives(negatives, ds.keys(), options.synthesis_max_distance);
  rep.synthesized = synthesized.size();
  ds.examples.insert(ds.examples.end(), synthesized.begin(), synthesized.end());

  std::map<std::string, double, std::less<>> durations;
  for (const auto& r : records) durations.emplace(r.segment_id, r.duration());
  ds = filter_dataset(ds, stop_words, durations, options.min_duration_s, &rep.filter);
  ds = stratified_split(ds, options.fractions, options.seed, options.segment_disjoint);

  for (auto s : {Split::train, Split::dev, Split::test}) {
    for (int y : {0, 1}) rep.split_counts[to_string(s) + "/" + std::to_string(y)] = ds.count(s, y);
  }
  if (report) *report = rep;
  return ds;
}

std::string format_report(const MiningReport& r) {
  std::ostringstream out;
  out << "positives\t" << r.positives.emitted << '\n'
      << "positives_skipped_misaligned\t" << r.positives.misaligned << '\n'
      << "positives_skipped_no_match\t" << r.positives.no_match << '\n'
      << "positives_skipped_oov\t" << r.positives.out_of_vocabulary << '\n'
      << "positives_skipped_duplicate_segment\t" << r.positives.duplicate_segments << '\n'
      << "substitution_negatives\t" << r.negatives.emitted << '\n'
      << "substitution_skipped_oov\t" << r.negatives.out_of_vocabulary << '\n'
      << "substitution_skipped_homophone\t" << r.negatives.homophones << '\n'
      << "substitution_skipped_duplicate\t" << r.negatives.duplicates << '\n'
      << "synthesized_negatives\t" << r.synthesized << '\n'
      << "filtered_stop_words\t" << r.filter.stop_words << '\n'
      << "filtered_too_short\t" << r.filter.too_short << '\n'
      << "dataset_size\t" << r.filter.kept << '\n';
  for (const auto& [k, v] : r.split_counts) out << "split_" << k << '\t' << v << '\n';
  return out.str();
}

}  // namespace awe
