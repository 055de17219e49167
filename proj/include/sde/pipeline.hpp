#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sde/align.hpp"
#include "sde/config.hpp"
#include "sde/corpus.hpp"
#include "sde/nmt/seq2seq.hpp"
#include "sde/nmt/trainer.hpp"
#include "sde/segmentation.hpp"

namespace sde {

/// Fixed experiment directory layout.
struct ExperimentLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config"; }
  std::filesystem::path vocab() const { return root / "vocab"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path reports() const { return root / "reports"; }

  std::filesystem::path best_checkpoint() const { return checkpoints() / "best.ckpt"; }
  std::filesystem::path train_log() const { return logs() / "train.log"; }
  std::filesystem::path bpe_model(const std::string& key) const { return vocab() / ("bpe." + key + ".model"); }

  void create() const;
};

struct VocabularySet {
  std::optional<Vocabulary> source;    ///< lookup embedder units
  std::optional<Vocabulary> units;     ///< SDE bag entries: n-grams or BPE pieces
  std::optional<Vocabulary> fallback;  ///< SDE query table when the lexical component is off
  Vocabulary target;
};

using Model = Seq2SeqModel<float>;

class Pipeline {
 public:
  explicit Pipeline(RunConfig config);

  const RunConfig& config() const { return config_; }
  const ExperimentLayout& layout() const { return layout_; }

  /// Writes config/manifest.<command>.txt: the resolved config plus the
  /// command, its arguments and library versions.
  void write_manifest(const std::string& command, const std::map<std::string, std::string>& extra = {}) const;

  ParallelCorpus load(const LanguageId& lang, Split split) const;
  /// One corpus per source language; languages without files for `split` are skipped.
  std::vector<ParallelCorpus> load_split(Split split) const;
  const LanguageId& low_resource_language() const;

  /// BPE models needed by the segmentation mode or the SDE bag source; empty
  /// when none are.
  bool needs_bpe() const;
  BpeMode bpe_mode() const;
  BpeModelSet train_bpe() const;  ///< trains on the train split and saves
  BpeModelSet bpe_models() const; ///< saved models, trained first when absent

  std::vector<std::string> source_units(const std::vector<std::string>& words, const LanguageId& lang,
                                        const BpeModelSet& models) const;
  std::vector<std::string> target_units(const std::vector<std::string>& words, const BpeModelSet& models) const;
  std::vector<std::string> target_words(const std::vector<std::string>& units) const;
  ParallelCorpus segmented(const ParallelCorpus& raw, const BpeModelSet& models) const;

  VocabularySet build_vocab(const BpeModelSet& models) const;  ///< builds and saves
  VocabularySet vocabularies(const BpeModelSet& models) const; ///< saved set, built first when absent

  Model make_model(const VocabularySet& vocab, const BpeModelSet& models) const;
  /// Rebuilds the architecture from saved vocabularies and loads the best checkpoint.
  Model load_model() const;

  /// Full training run: BPE, vocabularies, model, training log and best checkpoint.
  TrainResult train(std::ostream* progress = nullptr) const;

  /// Detokenized translations, one per input line, in input order.
  std::vector<std::string> translate(const Model& model, const std::vector<std::string>& lines, const LanguageId& lang,
                                     const BpeModelSet& models) const;

  /// LRL-HRL dictionary from the train split of the first two source languages.
  BilingualDictionary dictionary() const;
  /// Target word type -> most frequently aligned LRL word, from IBM-1 on the LRL train split.
  std::map<std::string, std::string> target_links() const;

 private:
  RunConfig config_;
  ExperimentLayout layout_;
};

}  // namespace sde
