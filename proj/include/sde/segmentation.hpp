#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sde/corpus.hpp"
#include "sde/vocabulary.hpp"

namespace sde {

inline constexpr std::string_view kDefaultEndMarker = "</w>";
inline constexpr std::string_view kCharBoundary = "\xE2\x96\x81";  // U+2581

/// Ordered BPE merge rules; earlier rules have priority.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  std::size_t num_merges = 0;  ///< requested budget; merges.size() <= num_merges
  std::string end_marker{kDefaultEndMarker};

  /// Header `#merges=N end_marker=S`, then `left right` per merge.
  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

  /// Rebuilds the pair -> priority index; call after editing `merges`.
  void reindex();
  /// Priority of a merge rule, or merges.size() when absent.
  std::size_t rank(const std::string& left, const std::string& right) const;
  bool indexed() const { return ranks_.size() == merges.size(); }

  friend bool operator==(const BpeModel& a, const BpeModel& b) {
    return a.merges == b.merges && a.num_merges == b.num_merges && a.end_marker == b.end_marker;
  }

 private:
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
};

enum class BpeMode { joint, separate };

/// Frequency-weighted word types of the chosen corpus side(s).
std::map<std::string, std::int64_t> word_type_counts(std::span<const ParallelCorpus> corpora, CorpusSide side);

/// Greedy most-frequent-pair BPE over word types. Count ties go to the
/// lexicographically smallest pair; training stops early once no pair occurs
/// at least twice.
BpeModel train_bpe(const std::map<std::string, std::int64_t>& word_counts, std::size_t num_merges,
                   std::string end_marker = std::string(kDefaultEndMarker));

/// Joint mode returns one model under the key "joint" trained on both sides of
/// the concatenated data; separate mode returns one model per language,
/// including the target language.
std::map<std::string, BpeModel> train_bpe(std::span<const ParallelCorpus> corpora, std::size_t num_merges,
                                          BpeMode mode);

/// Pieces of `word`; the last piece carries the end marker, so removing it
/// and concatenating reproduces the word.
std::vector<std::string> apply_bpe(const BpeModel& model, std::string_view word);

/// Inverse of per-word segmentation: pieces ending in `end_marker` close a word.
std::vector<std::string> merge_bpe_pieces(const std::vector<std::string>& pieces, std::string_view end_marker);

/// Sparse n-gram count vector of one word, sorted by id.
struct BagOfNgrams {
  std::vector<std::pair<int, int>> counts;  ///< (vocabulary id, count >= 1)
  std::string source_word;

  int total() const;
  friend bool operator==(const BagOfNgrams&, const BagOfNgrams&) = default;
};

/// All contiguous code-point substrings with length in `n_set`, in
/// left-to-right order per n. With `boundary_markers` the word is wrapped as
/// `<word>` first.
std::vector<std::string> enumerate_ngrams(std::string_view word, std::span<const int> n_set,
                                          bool boundary_markers = false);

BagOfNgrams char_ngrams(std::string_view word, std::span<const int> n_set, const Vocabulary& vocab,
                        bool boundary_markers = false);

/// Bag built from pieces instead of n-grams (pieces mapped through `vocab`).
BagOfNgrams bag_of_units(std::string_view word, const std::vector<std::string>& units, const Vocabulary& vocab);

enum class SegmentationMode { word, character, sub_joint, sub_sep };
std::string to_string(SegmentationMode mode);
SegmentationMode parse_segmentation_mode(const std::string& text);

/// BPE models keyed by language code, plus "joint" for the shared model.
using BpeModelSet = std::map<std::string, BpeModel>;

std::vector<std::string> segment(const std::vector<std::string>& sentence, SegmentationMode mode,
                                 const LanguageId& lang, const BpeModelSet* models = nullptr);

/// Undoes `segment` for any mode.
std::vector<std::string> desegment(const std::vector<std::string>& units, SegmentationMode mode,
                                   std::string_view end_marker = kDefaultEndMarker);

}  // namespace sde
