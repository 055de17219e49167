#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sde/corpus.hpp"
#include "sde/nmt/seq2seq.hpp"
#include "sde/nmt/trainer.hpp"
#include "sde/segmentation.hpp"
#include "sde/sde_layer.hpp"

namespace sde {

/// Required key absent, unknown key, or unparsable value.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Missing or unreadable input path.
class PathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `section.key=value` text. `#` starts a comment line; surrounding
/// whitespace of keys and values is ignored; a repeated key keeps the last value.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Applies every entry of `overrides` on top of this config.
  void merge(const KeyValueConfig& overrides);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;  ///< throws ConfigError when absent
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Sorted `key=value` lines.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> entries_;
};

struct DataFiles {
  std::filesystem::path source;
  std::filesystem::path target;
};

/// Every setting of an experiment. Defaults are the full-scale training
/// settings.
struct RunConfig {
  std::string name = "sde";
  std::filesystem::path dir;  ///< empty means experiments/<name>
  std::uint64_t seed = 1;
  int threads = 1;

  /// The first language is the low-resource one; dev BLEU is measured on it.
  std::vector<LanguageId> source_langs;
  LanguageId target_lang{"eng"};
  std::map<std::string, std::map<Split, DataFiles>> data;

  SegmentationMode seg_mode = SegmentationMode::word;
  SegmentationMode target_seg_mode = SegmentationMode::word;
  std::size_t bpe_joint_merges = 64000;
  std::size_t bpe_sep_merges = 32000;

  std::size_t word_vocab_size = 64000;
  std::size_t target_vocab_size = 64000;
  std::size_t ngram_per_language = 32000;
  NgramVocabMode ngram_mode = NgramVocabMode::per_language;

  EmbedderKind embedder = EmbedderKind::sde;
  ModelConfig model;
  SdeConfig sde;
  TrainConfig train;
  int beam_size = 5;

  int align_iterations = 5;
  std::int64_t dict_min_count = 1;
  std::size_t bootstrap_samples = 1000;

  static RunConfig from(const KeyValueConfig& kv);
  /// Every key with its effective value; `from(resolved())` reproduces this config.
  KeyValueConfig resolved() const;

  std::filesystem::path experiment_dir() const;
  const DataFiles& files(const LanguageId& lang, Split split) const;  ///< throws ConfigError
  bool has_files(const LanguageId& lang, Split split) const;
  /// Source languages followed by the target language.
  std::vector<std::string> all_languages() const;
};

std::string to_string(NgramVocabMode mode);
NgramVocabMode parse_ngram_mode(const std::string& text);
std::string to_string(SdeUnitMode mode);
SdeUnitMode parse_unit_mode(const std::string& text);
std::string to_string(BagSource source);
BagSource parse_bag_source(const std::string& text);
std::string to_string(TransformInit init);
TransformInit parse_transform_init(const std::string& text);

}  // namespace sde
