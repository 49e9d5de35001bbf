#include "awe/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "awe/error.hpp"

namespace awe {

std::vector<ScoredPair> score_pairs(const SiameseModel& model, std::span<const PairExample* const> pairs,
                                    const FeatureStore& features, DistanceKind kind) {
  std::vector<const MelFeature*> feats;
  std::vector<const PhoneSequence*> phones;
  for (const auto* e : pairs) {
    const auto it = features.find(e->segment_id);
    if (it == features.end()) throw DataError("no features for segment " + e->segment_id);
    feats.push_back(&it->second);
    phones.push_back(&e->phones);
  }
  const auto ea = model.embed_acoustic(feats);
  const auto ep = model.embed_phonetic(phones);
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.push_back({pairs[i]->segment_id, pairs[i]->word, pairs[i]->label, distance_unchecked<float>(ea[i], ep[i], kind)});
  }
  return out;
}

ClassificationReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn,
                                         double threshold) {
  ClassificationReport r;
  r.threshold = threshold;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

ClassificationReport classify(std::span<const ScoredPair> scores, double threshold) {
  require(!scores.empty(), "classify needs at least one scored pair");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& s : scores) {
    const bool predicted_similar = s.distance < threshold;
    const bool similar = s.label == 0;
    if (predicted_similar) {
      ++(similar ? tp : fp);
    } else {
      ++(similar ? fn : tn);
    }
  }
  return metrics_from_counts(tp, fp, tn, fn, threshold);
}

SweepResult all_pairs_sweep(std::span<const Embedding> acoustic, std::span<const Embedding> phonetic,
                            const std::function<bool(std::size_t, std::size_t)>& is_positive, DistanceKind kind,
                            std::size_t bins) {
  require(!acoustic.empty() && !phonetic.empty(), "all-pairs sweep needs both sets nonempty");
  require(bins >= 2, "all-pairs sweep needs at least two bins");
  SweepResult r;

  // Pass 1: range and class totals.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < acoustic.size(); ++i) {
    for (std::size_t j = 0; j < phonetic.size(); ++j) {
      const double d = distance_unchecked<float>(acoustic[i], phonetic[j], kind);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      ++r.pairs;
      if (is_positive(i, j)) ++r.positives;
    }
  }
  r.min_distance = lo;
  r.max_distance = hi;
  require(r.positives > 0, "all-pairs sweep needs at least one positive pair");

  // Pass 2: per-bin class counts.
  const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
  std::vector<std::uint64_t> pos(bins, 0), neg(bins, 0);
  for (std::size_t i = 0; i < acoustic.size(); ++i) {
    for (std::size_t j = 0; j < phonetic.size(); ++j) {
      const double d = distance_unchecked<float>(acoustic[i], phonetic[j], kind);
      const auto b = std::min(bins - 1, static_cast<std::size_t>((d - lo) / width));
      ++(is_positive(i, j) ? pos[b] : neg[b]);
    }
  }

  // Edge k predicts "similar" for bins [0, k). The last edge sits just above
  // the maximum so every pair is included.
  auto edge = [&](std::size_t k) {
    if (k == bins) return std::nextafter(hi + width * 1e-9, std::numeric_limits<double>::infinity());
    return lo + width * static_cast<double>(k);
  };
  struct Run {
    double first = 0.0, last = 0.0;
    double precision = 0.0, recall = 0.0;
    double diff() const { return precision - recall; }
    double mid() const { return 0.5 * (first + last); }
  };
  std::vector<Run> runs;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t k = 0; k <= bins; ++k) {
    if (k > 0) {
      tp += pos[k - 1];
      fp += neg[k - 1];
    }
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    const double recall = static_cast<double>(tp) / static_cast<double>(r.positives);
    if (!runs.empty() && k > 0 && pos[k - 1] == 0 && neg[k - 1] == 0) {
      runs.back().last = edge(k);
      continue;
    }
    runs.push_back({edge(k), edge(k), precision, recall});
    r.curve.push_back({edge(k), precision, recall});
  }

  // Before the first true positive precision and recall are both 0, which
  // is not a break-even point.
  std::erase_if(runs, [](const Run& run) { return run.recall == 0.0; });

  // Exact ties first (middle of the tied run), else interpolate across the
  // first sign change of precision - recall.
  for (const auto& run : runs) {
    if (run.diff() == 0.0) {
      r.break_even_threshold = run.mid();
      r.break_even_precision = run.precision;
      r.break_even_recall = run.recall;
      return r;
    }
  }
  for (std::size_t k = 0; k + 1 < runs.size(); ++k) {
    const Run& a = runs[k];
    const Run& b = runs[k + 1];
    if (a.diff() > 0.0 && b.diff() < 0.0) {
      const double f = a.diff() / (a.diff() - b.diff());
      r.break_even_threshold = a.mid() + f * (b.mid() - a.mid());
      r.break_even_precision = a.precision + f * (b.precision - a.precision);
      r.break_even_recall = a.recall + f * (b.recall - a.recall);
      return r;
    }
  }
  // No crossing (e.g. every pair positive): take the smallest gap.
  const auto best = std::min_element(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
    return std::abs(a.diff()) < std::abs(b.diff());
  });
  r.break_even_threshold = best->mid();
  r.break_even_precision = best->precision;
  r.break_even_recall = best->recall;
  return r;
}

std::string format_report(const ClassificationReport& r) {
  char buf[400];
  std::snprintf(buf, sizeof buf,
                "threshold\t%.6g\ntp\t%zu\nfp\t%zu\ntn\t%zu\nfn\t%zu\nprecision\t%.6f\nrecall\t%.6f\nf1\t%.6f\n",
                r.threshold, r.tp, r.fp, r.tn, r.fn, r.precision, r.recall, r.f1);
  return buf;
}

std::string format_report(const SweepResult& s) {
  char buf[400];
  std::snprintf(buf, sizeof buf,
                "all_pairs\t%llu\nall_pairs_positives\t%llu\nbreak_even_threshold\t%.6f\n"
                "break_even_precision\t%.6f\nbreak_even_recall\t%.6f\n",
                static_cast<unsigned long long>(s.pairs), static_cast<unsigned long long>(s.positives),
                s.break_even_threshold, s.break_even_precision, s.break_even_recall);
  return buf;
}

// ---------------------------------------------------------------------------
// Embedding tables

namespace {

const char* modality_name(Modality m) { return m == Modality::acoustic ? "acoustic" : "phonetic"; }

}  // namespace

void export_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRow> rows, std::size_t dim) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "awe-embeddings " << kEmbeddingFormatVersion << ' ' << dim << ' ' << rows.size() << '\n';
  char buf[64];
  for (const auto& row : rows) {
    require(row.values.size() == dim, "embedding row has the wrong dimension");
    require(row.id.find_first_of("\t\n") == std::string::npos, "embedding id contains a tab or newline");
    out << row.id << '\t' << modality_name(row.modality);
    for (float v : row.values) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << '\t' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  int version = 0;
  std::size_t dim = 0, count = 0;
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  if (!(hs >> magic >> version >> dim >> count) || magic != "awe-embeddings") {
    throw DataError(path.string() + ": not an embedding table");
  }
  if (version != kEmbeddingFormatVersion) throw DataError(path.string() + ": unsupported version");

  std::vector<EmbeddingRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t tab; (tab = rest.find('\t')) != std::string_view::npos; rest.remove_prefix(tab + 1)) {
      fields.push_back(rest.substr(0, tab));
    }
    fields.push_back(rest);
    if (fields.size() != dim + 2) throw DataError(path.string() + ": row has the wrong number of fields");
    EmbeddingRow row;
    row.id = std::string(fields[0]);
    if (fields[1] == "acoustic") {
      row.modality = Modality::acoustic;
    } else if (fields[1] == "phonetic") {
      row.modality = Modality::phonetic;
    } else {
      throw DataError(path.string() + ": unknown modality " + std::string(fields[1]));
    }
    row.values.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto f = fields[k + 2];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), row.values[k]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw DataError(path.string() + ": bad number '" + std::string(f) + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() != count) throw DataError(path.string() + ": row count does not match header");
  return rows;
}

}  // namespace awe
