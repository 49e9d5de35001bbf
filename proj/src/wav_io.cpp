#include "awe/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "awe/error.hpp"

namespace awe {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

struct PcmView {
  const unsigned char* data = nullptr;
  std::size_t frames = 0;
};

PcmView locate_pcm(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE") {
    throw fail("not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(bytes.begin() + pos, bytes.begin() + pos + 4);
    const std::size_t size = le32(&bytes[pos + 4]);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw fail("truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (size < 16) throw fail("short fmt chunk");
      const auto format = le16(&bytes[body]);
      const auto channels = le16(&bytes[body + 2]);
      const auto rate = le32(&bytes[body + 4]);
      const auto bits = le16(&bytes[body + 14]);
      if (format != 1) throw fail("only PCM encoding is supported");
      if (channels != 1) throw fail("expected mono audio, got " + std::to_string(channels) + " channels");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw fail("expected 16000 Hz, got " + std::to_string(rate));
      }
      if (bits != 16) throw fail("expected 16-bit samples");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      return {&bytes[body], size / 2};
    }
    pos = body + size + (size & 1);
  }
  throw fail("no data chunk");
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read wav file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

float decode_sample(const unsigned char* p) {
  return static_cast<float>(static_cast<std::int16_t>(le16(p))) / 32768.0f;
}

}  // namespace

AudioSegment read_wav(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const auto pcm = locate_pcm(bytes, path);
  AudioSegment seg;
  seg.samples.resize(pcm.frames);
  for (std::size_t i = 0; i < pcm.frames; ++i) seg.samples[i] = decode_sample(pcm.data + 2 * i);
  return seg;
}

AudioSegment read_wav_slice(const std::filesystem::path& path, double start_s, double end_s) {
  require(start_s >= 0.0 && start_s < end_s, "invalid audio slice bounds");
  const auto bytes = slurp(path);
  const auto pcm = locate_pcm(bytes, path);
  const auto first = static_cast<std::size_t>(std::llround(start_s * kSampleRate));
  const auto last = static_cast<std::size_t>(std::llround(end_s * kSampleRate));
  if (last > pcm.frames) {
    throw DataError(path.string() + ": slice end " + std::to_string(end_s) + " s beyond audio length");
  }
  AudioSegment seg;
  seg.samples.resize(last - first);
  for (std::size_t i = first; i < last; ++i) seg.samples[i - first] = decode_sample(pcm.data + 2 * i);
  return seg;
}

void write_wav(const std::filesystem::path& path, const AudioSegment& audio) {
  require(audio.sample_rate == kSampleRate, "only 16 kHz audio can be written");
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);  // PCM
  put16(out, 1);  // mono
  put32(out, kSampleRate);
  put32(out, kSampleRate * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (float s : audio.samples) {
    const float clipped = std::clamp(s, -1.0f, 1.0f);
    const auto q = static_cast<std::int16_t>(std::lrint(std::min(clipped * 32768.0f, 32767.0f)));
    put16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write wav file: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing wav file: " + path.string());
}

}  // namespace awe
