#include "awe/dataset_features.hpp"

#include <cmath>
#include <map>

#include "awe/error.hpp"
#include "awe/wav_io.hpp"

namespace awe {

SegmentSet segment_ids(const PairDataset& ds) {
  SegmentSet out;
  for (const auto& e : ds.examples) out.insert(e.segment_id);
  return out;
}

SegmentSet segment_ids(const PairDataset& ds, Split split) {
  SegmentSet out;
  for (const auto& e : ds.examples) {
    if (e.split == split) out.insert(e.segment_id);
  }
  return out;
}

FeatureStore featurize_records(const std::vector<AlignmentRecord>& records, const std::filesystem::path& base_dir,
                               const SegmentSet& wanted) {
  // Group by file so each wav is decoded once.
  std::map<std::string, std::vector<const AlignmentRecord*>> by_file;
  SegmentSet found;
  for (const auto& r : records) {
    if (wanted.contains(r.segment_id) && found.insert(r.segment_id).second) by_file[r.wav_path].push_back(&r);
  }
  for (const auto& id : wanted) {
    if (!found.contains(id)) throw DataError("no alignment record for segment " + id);
  }

  const MelSpectrogram extractor;
  FeatureStore store;
  for (const auto& [file, recs] : by_file) {
    const std::filesystem::path path = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : base_dir / file;
    const AudioSegment audio = read_wav(path);
    for (const auto* r : recs) {
      const auto begin = static_cast<std::size_t>(std::llround(r->start_s * audio.sample_rate));
      const auto end = static_cast<std::size_t>(std::llround(r->end_s * audio.sample_rate));
      if (end > audio.samples.size() || begin >= end) {
        throw DataError("segment " + r->segment_id + " lies outside " + path.string());
      }
      AudioSegment seg;
      seg.sample_rate = audio.sample_rate;
      seg.samples.assign(audio.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                         audio.samples.begin() + static_cast<std::ptrdiff_t>(end));
      store.emplace(r->segment_id, featurize(extractor, seg));
    }
  }
  return store;
}

BandStats fit_band_stats(const FeatureStore& store, const SegmentSet& segments) {
  BandStatsAccumulator acc;
  for (const auto& id : segments) {
    const auto it = store.find(id);
    if (it == store.end()) throw DataError("no features for segment " + id);
    acc.add(it->second);
  }
  return acc.finalize();
}

void apply_band_stats(FeatureStore& store, const BandStats& stats) {
  for (auto& [id, feat] : store) feat = apply_band_stats(feat, stats);
}

}  // namespace awe
