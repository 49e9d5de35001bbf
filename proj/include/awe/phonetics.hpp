#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace awe {

inline constexpr std::size_t kRealPhoneCount = 69;
inline constexpr std::size_t kSentinelIndex = 69;
inline constexpr std::size_t kAlphabetSize = 70;
inline constexpr std::size_t kMaxPhones = 20;

using PhoneIndex = std::uint8_t;

/// Ordered phone indices of one word. Always 1..20 entries, each below the
/// sentinel index.
class PhoneSequence {
 public:
  PhoneSequence() = default;
  explicit PhoneSequence(std::vector<PhoneIndex> indices);

  std::span<const PhoneIndex> indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  PhoneIndex operator[](std::size_t i) const { return indices_[i]; }

  auto operator<=>(const PhoneSequence&) const = default;
  bool operator==(const PhoneSequence&) const = default;

 private:
  std::vector<PhoneIndex> indices_;
};

class PhoneInventory {
 public:
  /// Builds an inventory from exactly 69 distinct symbols. Symbols are sorted
  /// so that index assignment does not depend on file order.
  static PhoneInventory from_symbols(std::vector<std::string> symbols);
  static PhoneInventory load(const std::filesystem::path& path);
  /// The 39-phone ARPAbet set with vowel stress markers 0/1/2 (69 symbols),
  /// the flavor used by the LibriSpeech lexicon.
  static PhoneInventory arpabet();

  void save(const std::filesystem::path& path) const;

  std::optional<PhoneIndex> index_of(std::string_view symbol) const;
  const std::string& symbol(PhoneIndex index) const;
  std::span<const std::string> symbols() const { return symbols_; }

  /// FNV-1a over the ordered symbols; used to tie checkpoints to inventories.
  std::uint64_t hash() const;

  /// Throws ContractViolation on unknown symbols or bad length.
  PhoneSequence parse(std::span<const std::string> symbols) const;
  std::vector<std::string> render(const PhoneSequence& seq) const;

  bool operator==(const PhoneInventory&) const = default;

 private:
  std::vector<std::string> symbols_;
};

class Lexicon {
 public:
  /// Returns false (and keeps the existing entry) if the word is already present.
  bool insert(std::string word, PhoneSequence phones);
  const PhoneSequence* find(std::string_view word) const;
  bool contains(std::string_view word) const { return find(word) != nullptr; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, PhoneSequence, std::less<>>& entries() const { return entries_; }

  void save(const std::filesystem::path& path, const PhoneInventory& inventory) const;

 private:
  std::map<std::string, PhoneSequence, std::less<>> entries_;
};

struct LexiconReport {
  std::size_t accepted = 0;
  std::size_t too_long = 0;
  std::size_t unknown_phone = 0;
  std::size_t duplicates = 0;
  std::size_t malformed = 0;
  std::vector<std::string> rejected_words;
};

struct LexiconLoad {
  Lexicon lexicon;
  LexiconReport report;
};

LexiconLoad load_lexicon(const std::filesystem::path& path, const PhoneInventory& inventory);

/// 70x20 one-hot matrix, phone axis major: value(row=phone, col=position).
class PhoneticMatrix {
 public:
  static constexpr std::size_t kRows = kAlphabetSize;
  static constexpr std::size_t kCols = kMaxPhones;

  std::uint8_t at(std::size_t row, std::size_t col) const { return values_[row * kCols + col]; }
  std::uint8_t& at(std::size_t row, std::size_t col) { return values_[row * kCols + col]; }
  std::span<const std::uint8_t> values() const { return values_; }

  /// Row-major float copy suitable as network input.
  void copy_to(std::span<float> out) const;
  void copy_to(std::span<double> out) const;

 private:
  std::array<std::uint8_t, kRows * kCols> values_{};
};

PhoneticMatrix encode_phones(const PhoneSequence& seq);
/// Argmax per column, stopping at the first sentinel column.
PhoneSequence decode_phones(const PhoneticMatrix& matrix);

/// Unit-cost Levenshtein distance over phone indices.
std::size_t levenshtein(std::span<const PhoneIndex> a, std::span<const PhoneIndex> b);
std::size_t levenshtein(const PhoneSequence& a, const PhoneSequence& b);

/// Levenshtein distance divided by max(len(a), len(b)); in [0, 1].
double phonetic_edit_distance(const PhoneSequence& a, const PhoneSequence& b);

}  // namespace awe
