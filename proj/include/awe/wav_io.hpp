#pragma once

#include <filesystem>

#include "awe/audio_features.hpp"

namespace awe {

/// Reads 16-bit little-endian PCM mono WAV at 16 kHz. Other formats, rates or
/// channel counts are rejected with DataError.
AudioSegment read_wav(const std::filesystem::path& path);

/// Reads only [start_s, end_s) of the file, rounded to the nearest sample.
AudioSegment read_wav_slice(const std::filesystem::path& path, double start_s, double end_s);

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioSegment& audio);

}  // namespace awe
