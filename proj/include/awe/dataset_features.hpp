#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "awe/audio_features.hpp"
#include "awe/corpus.hpp"

namespace awe {

using SegmentSet = std::set<std::string, std::less<>>;

SegmentSet segment_ids(const PairDataset& ds);
SegmentSet segment_ids(const PairDataset& ds, Split split);

/// Per-example features (window fit, log-mel, CMVN) for the wanted segments.
/// Audio paths resolve against `base_dir`; each wav file is read once.
/// Throws DataError if a wanted segment has no record.
FeatureStore featurize_records(const std::vector<AlignmentRecord>& records, const std::filesystem::path& base_dir,
                               const SegmentSet& wanted);

/// Global band statistics over the given segments only.
BandStats fit_band_stats(const FeatureStore& store, const SegmentSet& segments);
void apply_band_stats(FeatureStore& store, const BandStats& stats);

}  // namespace awe
