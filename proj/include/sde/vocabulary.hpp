#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sde {

/// Bidirectional token <-> id map with frequencies.
///
/// Ids are contiguous from 0 and the four specials always occupy ids 0..3.
/// Regular entries are ordered by descending frequency with a byte-wise
/// lexicographic tie-break, which is also the eviction order under
/// truncation.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;
  static constexpr std::string_view kSpecialTokens[kNumSpecials] = {"<unk>", "<pad>", "<s>", "</s>"};

  Vocabulary();

  /// Keeps the `max_size - kNumSpecials` most frequent tokens.
  /// `max_size` counts the specials; it must be at least 5.
  static Vocabulary from_counts(const std::map<std::string, std::int64_t>& counts, std::size_t max_size);

  int id(std::string_view token) const;  ///< UNK id when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::int64_t frequency(int id) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids, bool strip_specials = true) const;

  /// `token<TAB>id<TAB>frequency` per line, specials first.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.freqs_ == b.freqs_;
  }

 private:
  void push(std::string token, std::int64_t freq);

  std::vector<std::string> tokens_;
  std::vector<std::int64_t> freqs_;
  std::unordered_map<std::string, int> index_;
};

/// Sorts (token, count) pairs by descending count, ascending bytes.
std::vector<std::pair<std::string, std::int64_t>> rank_counts(const std::map<std::string, std::int64_t>& counts);

}  // namespace sde
