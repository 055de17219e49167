#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sde/vocabulary.hpp"

namespace sde {

/// Short language tag such as "aze" or "eng".
class LanguageId {
 public:
  LanguageId() = default;
  explicit LanguageId(std::string code);
  const std::string& code() const { return code_; }
  bool empty() const { return code_.empty(); }
  auto operator<=>(const LanguageId&) const = default;

 private:
  std::string code_;
};

enum class Split { train, dev, test };
std::string to_string(Split split);
Split parse_split(const std::string& text);

struct SentencePair {
  std::vector<std::string> source;
  std::vector<std::string> target;
  LanguageId lang;  ///< language of the source side
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  Split split = Split::train;
  LanguageId target_lang{"eng"};
  std::size_t dropped_blank = 0;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

/// Splits on single spaces; empty fields from repeated spaces are skipped.
std::vector<std::string> split_tokens(const std::string& line);
std::string join_tokens(const std::vector<std::string>& tokens);

std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

ParallelCorpus load_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                             const LanguageId& lang, Split split);

enum class CorpusSide { source, target, both };

Vocabulary build_word_vocab(std::span<const ParallelCorpus> corpora, std::size_t max_size,
                            CorpusSide side = CorpusSide::both);

enum class NgramVocabMode { per_language, concatenated };

struct NgramVocabOptions {
  std::vector<int> n_set{1, 2, 3, 4, 5};
  NgramVocabMode mode = NgramVocabMode::per_language;
  bool boundary_markers = false;
};

/// Source-side character n-gram vocabulary. Each word type contributes its
/// n-grams weighted by the type's token frequency. In per-language mode every
/// language keeps its top `(max_size - specials) / num_languages` n-grams and
/// the union is ranked by total frequency.
Vocabulary build_ngram_vocab(std::span<const ParallelCorpus> corpora, std::size_t max_size,
                             const NgramVocabOptions& options = {});

/// Word-budgeted batching over source lengths.
///
/// Indices are shuffled with `shuffle_seed`, cut into windows of
/// `window_batches * batch_words` tokens' worth of sentences, length-sorted
/// inside each window and filled greedily; the batch order is shuffled again.
std::vector<std::vector<std::size_t>> batch_iterator(std::span<const std::size_t> source_lengths,
                                                     std::size_t batch_words, std::uint64_t shuffle_seed,
                                                     std::size_t window_batches = 32);
std::vector<std::vector<std::size_t>> batch_iterator(const ParallelCorpus& corpus, std::size_t batch_words,
                                                     std::uint64_t shuffle_seed);

struct SplitCounts {
  std::size_t sentences = 0;
  std::size_t source_tokens = 0;
  std::size_t target_tokens = 0;
  std::size_t source_types = 0;
  std::size_t target_types = 0;
};

struct CorpusStats {
  /// language code -> split -> counts
  std::map<std::string, std::map<Split, SplitCounts>> per_language;
  const SplitCounts& at(const std::string& lang, Split split) const;
  std::string to_tsv() const;
};

CorpusStats corpus_stats(std::span<const ParallelCorpus> corpora);

/// Concatenates low- and high-resource corpora sharing one target language.
ParallelCorpus multi_source_setup(const ParallelCorpus& lrl, std::span<const ParallelCorpus> hrl);

/// Source languages in first-appearance order.
std::vector<LanguageId> source_languages(std::span<const ParallelCorpus> corpora);

}  // namespace sde
