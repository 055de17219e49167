#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sde/corpus.hpp"

namespace sde {

inline constexpr std::string_view kNullWord = "<null>";

/// IBM Model 1 lexical table t(source | target). The target side carries a
/// NULL word at index 0, so each target word's distribution over source
/// words sums to one.
struct TranslationTable {
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;  ///< target_words[0] is the NULL word
  std::unordered_map<std::string, int> source_index;
  std::unordered_map<std::string, int> target_index;
  std::unordered_map<std::uint64_t, double> prob;  ///< key(target, source)
  std::vector<double> log_likelihood;              ///< one entry per completed iteration, plus the start

  static std::uint64_t key(int target, int source) {
    return (static_cast<std::uint64_t>(target) << 32) | static_cast<std::uint32_t>(source);
  }

  /// t(source | target); 0 for pairs that never co-occur. An empty target
  /// string means NULL.
  double probability(const std::string& source, const std::string& target) const;

  /// Sum of t(s | target) over all source words s.
  double target_mass(const std::string& target) const;
};

/// Uniform table over co-occurring pairs, before any EM update.
TranslationTable ibm1_init(const ParallelCorpus& corpus);
void ibm1_iterate(TranslationTable& table, const ParallelCorpus& corpus);
TranslationTable ibm1_train(const ParallelCorpus& corpus, int iterations);

/// sum over sentences and source positions of log(sum_i t(s_j | t_i) / (len + 1)).
double ibm1_log_likelihood(const TranslationTable& table, const ParallelCorpus& corpus);

/// (source index, target index) links; NULL links are dropped and ties go to
/// the leftmost target position, NULL counting as leftmost.
std::vector<std::pair<int, int>> viterbi_align(const TranslationTable& table, const SentencePair& pair);

/// For every target word type, its most frequently linked source word.
std::map<std::string, std::string> target_source_links(const TranslationTable& table, const ParallelCorpus& corpus);

struct DictionaryEntry {
  std::string lrl;
  std::string hrl;
  std::string pivot;
  std::int64_t count = 0;
  bool operator==(const DictionaryEntry&) const = default;
};

struct BilingualDictionary {
  std::vector<DictionaryEntry> pairs;

  void save(const std::filesystem::path& path) const;
  static BilingualDictionary load(const std::filesystem::path& path);
  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

/// Pairs LRL and HRL words that align to the same English word. Each English
/// type contributes its most frequent LRL and HRL partner, weighted by the
/// smaller of the two link counts.
BilingualDictionary extract_dictionary(const ParallelCorpus& lrl_corpus, const ParallelCorpus& hrl_corpus,
                                       std::int64_t min_count = 1, int iterations = 5);

/// Levenshtein distance over code points.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Half-open integer buckets given by ascending lower bounds; the last one is
/// open-ended. {0, 1, 3} labels values as "0", "1-2", "3+".
struct BucketScheme {
  std::vector<int> lower_bounds;

  explicit BucketScheme(std::vector<int> bounds);
  std::size_t index_of(int value) const;
  std::string label(std::size_t index) const;
  std::string label_of(int value) const { return label(index_of(value)); }
  std::size_t size() const { return lower_bounds.size(); }
};

using Histogram = std::vector<std::pair<std::string, double>>;

/// Percentage of dictionary pairs per edit-distance bucket.
Histogram edit_distance_histogram(const BilingualDictionary& dict, const BucketScheme& buckets);
std::string histogram_csv(const Histogram& histogram);

}  // namespace sde
