#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sde/corpus.hpp"
#include "sde/numcore/graph.hpp"
#include "sde/numcore/ops.hpp"
#include "sde/segmentation.hpp"

namespace sde {

enum class SdeUnitMode { word, sub_sep };
enum class BagSource { char_ngrams, subword_pieces };
enum class TransformInit { identity, uniform };

/// Soft decoupled encoding settings. Component flags implement the
/// ablations: each disabled component is skipped and its parameters are not
/// allocated.
struct SdeConfig {
  int embed_dim = 128;
  int latent_size = 10000;
  std::vector<int> n_set{1, 2, 3, 4, 5};
  bool use_lexical = true;
  bool use_lang_transform = true;
  bool use_latent = true;
  bool use_residual = true;
  SdeUnitMode unit_mode = SdeUnitMode::word;
  BagSource bag_source = BagSource::char_ngrams;
  bool scale_scores = false;      ///< divide latent scores by sqrt(D)
  bool boundary_markers = false;  ///< wrap words as <word> before n-gram extraction
  TransformInit transform_init = TransformInit::identity;

  void validate(std::size_t bag_vocab_size) const {
    if (embed_dim < 1) throw std::invalid_argument("sde.embed_dim must be >= 1");
    if (latent_size < 1) throw std::invalid_argument("sde.latent_size must be >= 1");
    if (bag_vocab_size < 5 && use_lexical) throw std::invalid_argument("sde n-gram vocabulary must have >= 5 entries");
    if (!use_lexical && !use_latent) throw std::invalid_argument("sde needs the lexical or the latent component");
    if (n_set.empty()) throw std::invalid_argument("sde.n_set must be nonempty");
  }
};

/// Turns a word into its sparse bag: character n-grams, or BPE pieces of the
/// word for the subword-piece variant.
class BagBuilder {
 public:
  BagBuilder(Vocabulary units, std::vector<int> n_set, bool boundary_markers = false)
      : vocab_(std::move(units)), n_set_(std::move(n_set)), boundary_(boundary_markers) {}

  BagBuilder(Vocabulary pieces, BpeModelSet models)
      : vocab_(std::move(pieces)), source_(BagSource::subword_pieces), models_(std::move(models)) {}

  BagOfNgrams operator()(const std::string& word, const LanguageId& lang) const {
    if (source_ == BagSource::char_ngrams) return char_ngrams(word, n_set_, vocab_, boundary_);
    auto it = models_.find(lang.code());
    if (it == models_.end()) it = models_.find("joint");
    if (it == models_.end()) throw std::invalid_argument("no BPE model to bag words of language '" + lang.code() + "'");
    return bag_of_units(word, apply_bpe(it->second, word), vocab_);
  }

  const Vocabulary& vocabulary() const { return vocab_; }
  BagSource source() const { return source_; }
  const BpeModelSet& models() const { return models_; }

 private:
  Vocabulary vocab_;
  BagSource source_ = BagSource::char_ngrams;
  std::vector<int> n_set_;
  bool boundary_ = false;
  BpeModelSet models_;
};

struct ParameterCensus {
  std::size_t lexical = 0;         ///< W_c
  std::size_t latent = 0;          ///< W_s
  std::size_t lang_transform = 0;  ///< sum over all W_L
  std::size_t fallback = 0;        ///< word table replacing the lexical embedding
  std::size_t total() const { return lexical + latent + lang_transform + fallback; }
};

template <typename Scalar>
struct LatentOutput {
  Var embedding;  ///< rows x D
  Var weights;    ///< rows x S, each row a distribution
};

/// Per-stage vectors of one word, for analysis and export.
template <typename Scalar>
struct SdeStages {
  RowVector<Scalar> lexical;    ///< c(w), or the fallback lookup
  RowVector<Scalar> transform;  ///< c_i(w)
  RowVector<Scalar> full;       ///< final embedding
  RowVector<Scalar> attention;  ///< latent weights (empty when latent is off)
};

/// Soft decoupled encoding of words from several languages.
///
///   c(w)       = tanh(BoN(w) W_c)               shared n-gram table
///   c_i(w)     = tanh(c(w) W_{L_i})             one matrix per language
///   e_latent   = softmax(c_i(w) W_s^T) W_s      shared latent table
///   e(w)       = e_latent + c_i(w)
///
/// Parameters live in the caller's ParameterSet; the layer keeps pointers.
template <typename Scalar>
class SdeLayer {
 public:
  SdeLayer(SdeConfig config, BagBuilder bags, std::vector<LanguageId> languages, ParameterSet<Scalar>& params,
           std::mt19937_64& rng, std::optional<Vocabulary> word_vocab = std::nullopt, BpeModelSet unit_models = {},
           const std::string& prefix = "sde.")
      : config_(std::move(config)),
        bags_(std::move(bags)),
        languages_(std::move(languages)),
        word_vocab_(std::move(word_vocab)),
        unit_models_(std::move(unit_models)) {
    config_.validate(bags_.vocabulary().size());
    const Index D = config_.embed_dim;
    if (config_.use_lexical) {
      lexical_ = &params.add_uniform(prefix + "W_c", static_cast<Index>(bags_.vocabulary().size()), D, rng);
    } else {
      if (!word_vocab_) throw std::invalid_argument("sde without the lexical embedding needs a word vocabulary");
      fallback_ = &params.add_uniform(prefix + "fallback", static_cast<Index>(word_vocab_->size()), D, rng);
    }
    if (config_.use_lang_transform) {
      for (const auto& lang : languages_) {
        auto& w = params.add_uniform(prefix + "W_L." + lang.code(), D, D, rng);
        if (config_.transform_init == TransformInit::identity) w.value.setIdentity();
        transforms_.emplace(lang, &w);
      }
    }
    if (config_.use_latent) latent_ = &params.add_uniform(prefix + "W_s", config_.latent_size, D, rng);
  }

  const SdeConfig& config() const { return config_; }
  const BagBuilder& bags() const { return bags_; }
  const std::vector<LanguageId>& languages() const { return languages_; }
  Index dim() const { return config_.embed_dim; }

  Parameter<Scalar>* lexical_table() const { return lexical_; }
  Parameter<Scalar>* latent_table() const { return latent_; }
  Parameter<Scalar>* fallback_table() const { return fallback_; }
  Parameter<Scalar>* transform(const LanguageId& lang) const {
    auto it = transforms_.find(lang);
    return it == transforms_.end() ? nullptr : it->second;
  }

  bool knows(const LanguageId& lang) const {
    return std::find(languages_.begin(), languages_.end(), lang) != languages_.end();
  }

  BagOfNgrams bag(const std::string& word, const LanguageId& lang) const { return bags_(word, lang); }

  /// Lexical units fed to the layer: the word itself, or its BPE pieces when
  /// the layer works on subword units.
  std::vector<std::string> units(const std::string& word, const LanguageId& lang) const {
    if (config_.unit_mode == SdeUnitMode::word) return {word};
    auto it = unit_models_.find(lang.code());
    if (it == unit_models_.end()) throw std::invalid_argument("no unit BPE model for language '" + lang.code() + "'");
    return apply_bpe(it->second, word);
  }

  /// tanh(BoN W_c), one row per bag.
  Var lexical_embed(Graph<Scalar>& g, std::span<const BagOfNgrams> bags) const {
    if (!lexical_) throw std::logic_error("lexical embedding is disabled");
    return ops::tanh(g, ops::bag_embed(g, *lexical_, bags));
  }

  /// The query before the language transform: c(w), or the per-word lookup
  /// when the lexical component is ablated.
  Var query(Graph<Scalar>& g, std::span<const std::string> words, const LanguageId& lang) const {
    if (lexical_) {
      std::vector<BagOfNgrams> bags;
      bags.reserve(words.size());
      for (const auto& w : words) {
        if (w.empty()) throw std::invalid_argument("sde: empty word");
        bags.push_back(bags_(w, lang));
      }
      return lexical_embed(g, bags);
    }
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(word_vocab_->id(w));
    return ops::embedding_rows(g, *fallback_, ids);
  }

  Var lang_transform(Graph<Scalar>& g, Var c, const LanguageId& lang) const {
    if (!knows(lang)) throw std::invalid_argument("sde: unknown language '" + lang.code() + "'");
    if (!config_.use_lang_transform) return c;
    return ops::tanh(g, ops::matmul(g, c, g.parameter(*transforms_.at(lang))));
  }

  LatentOutput<Scalar> latent_attend(Graph<Scalar>& g, Var ci) const {
    if (!latent_) throw std::logic_error("latent embedding is disabled");
    const Var table = g.parameter(*latent_);
    Var scores = ops::matmul_nt(g, ci, table);
    if (config_.scale_scores) scores = ops::scale(g, scores, static_cast<Scalar>(1.0 / std::sqrt(double(dim()))));
    const Var weights = ops::softmax_rows(g, scores);
    return {ops::matmul(g, weights, table), weights};
  }

  /// Full pipeline for words of one language; one output row per word.
  Var embed(Graph<Scalar>& g, std::span<const std::string> words, const LanguageId& lang,
            Var* attention_weights = nullptr) const {
    if (!knows(lang)) throw std::invalid_argument("sde: unknown language '" + lang.code() + "'");
    const Var ci = lang_transform(g, query(g, words, lang), lang);
    if (!latent_) return ci;
    auto latent = latent_attend(g, ci);
    if (attention_weights) *attention_weights = latent.weights;
    return config_.use_residual ? ops::add(g, latent.embedding, ci) : latent.embedding;
  }

  /// Embeds (word, language) items of mixed languages; each distinct item is
  /// computed once and rows come back in input order.
  Var embed_mixed(Graph<Scalar>& g, std::span<const std::pair<std::string, LanguageId>> items) const {
    std::map<LanguageId, std::vector<std::string>> by_lang;
    std::map<std::pair<LanguageId, std::string>, int> slot;
    for (const auto& [w, lang] : items) {
      auto key = std::make_pair(lang, w);
      if (slot.count(key)) continue;
      slot.emplace(key, 0);
      by_lang[lang].push_back(w);
    }
    std::vector<Var> parts;
    int offset = 0;
    for (const auto& [lang, words] : by_lang) {
      parts.push_back(embed(g, words, lang));
      for (std::size_t i = 0; i < words.size(); ++i) slot[{lang, words[i]}] = offset + static_cast<int>(i);
      offset += static_cast<int>(words.size());
    }
    const Var unique = parts.size() == 1 ? parts[0] : ops::concat_rows(g, parts);
    std::vector<int> index;
    index.reserve(items.size());
    for (const auto& [w, lang] : items) index.push_back(slot.at({lang, w}));
    return ops::gather_rows(g, unique, std::move(index));
  }

  SdeStages<Scalar> stages(const std::string& word, const LanguageId& lang) const {
    Graph<Scalar> g(false);
    const std::vector<std::string> words{word};
    const Var c = query(g, words, lang);
    const Var ci = lang_transform(g, c, lang);
    SdeStages<Scalar> out;
    out.lexical = g.value(c).row(0);
    out.transform = g.value(ci).row(0);
    if (!latent_) {
      out.full = out.transform;
      return out;
    }
    auto latent = latent_attend(g, ci);
    out.attention = g.value(latent.weights).row(0);
    out.full = g.value(latent.embedding).row(0);
    if (config_.use_residual) out.full += out.transform;
    return out;
  }

  RowVector<Scalar> sde_embed(const std::string& word, const LanguageId& lang) const { return stages(word, lang).full; }

  /// Latent attention weights of one word.
  RowVector<Scalar> attention_distribution(const std::string& word, const LanguageId& lang) const {
    if (!latent_) throw std::logic_error("attention_distribution needs the latent component");
    return stages(word, lang).attention;
  }

  ParameterCensus census() const {
    ParameterCensus c;
    if (lexical_) c.lexical = static_cast<std::size_t>(lexical_->size());
    if (latent_) c.latent = static_cast<std::size_t>(latent_->size());
    for (const auto& [lang, p] : transforms_) c.lang_transform += static_cast<std::size_t>(p->size());
    if (fallback_) c.fallback = static_cast<std::size_t>(fallback_->size());
    return c;
  }

 private:
  SdeConfig config_;
  BagBuilder bags_;
  std::vector<LanguageId> languages_;
  std::optional<Vocabulary> word_vocab_;
  BpeModelSet unit_models_;
  Parameter<Scalar>* lexical_ = nullptr;
  Parameter<Scalar>* latent_ = nullptr;
  Parameter<Scalar>* fallback_ = nullptr;
  std::map<LanguageId, Parameter<Scalar>*> transforms_;
};

}  // namespace sde
