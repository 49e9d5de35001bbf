#include "awe/phonetics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "awe/error.hpp"

namespace awe {

PhoneSequence::PhoneSequence(std::vector<PhoneIndex> indices) : indices_(std::move(indices)) {
  require(!indices_.empty(), "phone sequence must not be empty");
  require(indices_.size() <= kMaxPhones,
          "phone sequence longer than " + std::to_string(kMaxPhones) + " phones");
  for (PhoneIndex i : indices_) {
    require(i < kRealPhoneCount, "phone index out of range: " + std::to_string(i));
  }
}

// ---------------------------------------------------------------------------
// PhoneInventory

PhoneInventory PhoneInventory::from_symbols(std::vector<std::string> symbols) {
  std::sort(symbols.begin(), symbols.end());
  if (std::adjacent_find(symbols.begin(), symbols.end()) != symbols.end()) {
    throw DataError("phone inventory contains duplicate symbols");
  }
  if (symbols.size() != kRealPhoneCount) {
    throw DataError("phone inventory must hold exactly " + std::to_string(kRealPhoneCount) +
                    " symbols, got " + std::to_string(symbols.size()));
  }
  PhoneInventory inv;
  inv.symbols_ = std::move(symbols);
  return inv;
}

PhoneInventory PhoneInventory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read phone inventory: " + path.string());
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string sym;
    if (ss >> sym) symbols.push_back(sym);
  }
  return from_symbols(std::move(symbols));
}

PhoneInventory PhoneInventory::arpabet() {
  static const char* const kVowels[] = {"AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
                                        "EY", "IH", "IY", "OW", "OY", "UH", "UW"};
  static const char* const kConsonants[] = {"B",  "CH", "D", "DH", "F", "G",  "HH", "JH",
                                            "K",  "L",  "M", "N",  "NG", "P", "R",  "S",
                                            "SH", "T",  "TH", "V", "W",  "Y", "Z",  "ZH"};
  std::vector<std::string> symbols;
  for (const char* v : kVowels) {
    for (char stress : {'0', '1', '2'}) symbols.push_back(std::string(v) + stress);
  }
  for (const char* c : kConsonants) symbols.emplace_back(c);
  return from_symbols(std::move(symbols));
}

void PhoneInventory::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write phone inventory: " + path.string());
  for (const auto& s : symbols_) out << s << '\n';
}

std::optional<PhoneIndex> PhoneInventory::index_of(std::string_view symbol) const {
  auto it = std::lower_bound(symbols_.begin(), symbols_.end(), symbol);
  if (it == symbols_.end() || *it != symbol) return std::nullopt;
  return static_cast<PhoneIndex>(it - symbols_.begin());
}

const std::string& PhoneInventory::symbol(PhoneIndex index) const {
  require(index < symbols_.size(), "phone index out of range");
  return symbols_[index];
}

std::uint64_t PhoneInventory::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const auto& s : symbols_) {
    for (char c : s) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

PhoneSequence PhoneInventory::parse(std::span<const std::string> symbols) const {
  std::vector<PhoneIndex> idx;
  idx.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto i = index_of(s);
    require(i.has_value(), "unknown phone symbol: " + s);
    idx.push_back(*i);
  }
  return PhoneSequence(std::move(idx));
}

std::vector<std::string> PhoneInventory::render(const PhoneSequence& seq) const {
  std::vector<std::string> out;
  out.reserve(seq.size());
  for (PhoneIndex i : seq.indices()) out.push_back(symbol(i));
  return out;
}

// ---------------------------------------------------------------------------
// Lexicon

bool Lexicon::insert(std::string word, PhoneSequence phones) {
  require(!phones.empty(), "lexicon entry without phones: " + word);
  return entries_.emplace(std::move(word), std::move(phones)).second;
}

const PhoneSequence* Lexicon::find(std::string_view word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

void Lexicon::save(const std::filesystem::path& path, const PhoneInventory& inventory) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write lexicon: " + path.string());
  for (const auto& [word, phones] : entries_) {
    out << word;
    for (const auto& s : inventory.render(phones)) out << ' ' << s;
    out << '\n';
  }
}

LexiconLoad load_lexicon(const std::filesystem::path& path, const PhoneInventory& inventory) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read lexicon: " + path.string());

  LexiconLoad result;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;  // blank line

    std::vector<PhoneIndex> phones;
    bool unknown = false;
    std::string sym;
    while (ss >> sym) {
      auto idx = inventory.index_of(sym);
      if (!idx) {
        unknown = true;
        break;
      }
      phones.push_back(*idx);
    }

    auto& rep = result.report;
    if (unknown) {
      ++rep.unknown_phone;
      rep.rejected_words.push_back(word);
    } else if (phones.empty()) {
      ++rep.malformed;
      rep.rejected_words.push_back(word);
    } else if (phones.size() > kMaxPhones) {
      ++rep.too_long;
      rep.rejected_words.push_back(word);
    } else if (result.lexicon.insert(word, PhoneSequence(std::move(phones)))) {
      ++rep.accepted;
    } else {
      ++rep.duplicates;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// One-hot matrices

void PhoneticMatrix::copy_to(std::span<float> out) const {
  require(out.size() == values_.size(), "phonetic matrix output size mismatch");
  std::copy(values_.begin(), values_.end(), out.begin());
}

void PhoneticMatrix::copy_to(std::span<double> out) const {
  require(out.size() == values_.size(), "phonetic matrix output size mismatch");
  std::copy(values_.begin(), values_.end(), out.begin());
}

PhoneticMatrix encode_phones(const PhoneSequence& seq) {
  require(!seq.empty() && seq.size() <= kMaxPhones, "phone sequence length must be in 1..20");
  PhoneticMatrix m;
  for (std::size_t col = 0; col < kMaxPhones; ++col) {
    std::size_t row = col < seq.size() ? seq[col] : kSentinelIndex;
    m.at(row, col) = 1;
  }
  return m;
}

PhoneSequence decode_phones(const PhoneticMatrix& matrix) {
  std::vector<PhoneIndex> out;
  for (std::size_t col = 0; col < PhoneticMatrix::kCols; ++col) {
    std::size_t best = 0;
    for (std::size_t row = 1; row < PhoneticMatrix::kRows; ++row) {
      if (matrix.at(row, col) > matrix.at(best, col)) best = row;
    }
    if (best == kSentinelIndex) break;
    out.push_back(static_cast<PhoneIndex>(best));
  }
  return PhoneSequence(std::move(out));
}

// ---------------------------------------------------------------------------
// Edit distance

std::size_t levenshtein(std::span<const PhoneIndex> a, std::span<const PhoneIndex> b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

std::size_t levenshtein(const PhoneSequence& a, const PhoneSequence& b) {
  return levenshtein(a.indices(), b.indices());
}

double phonetic_edit_distance(const PhoneSequence& a, const PhoneSequence& b) {
  require(!a.empty() && !b.empty(), "edit distance needs non-empty sequences");
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(std::max(a.size(), b.size()));
}

}  // namespace awe
