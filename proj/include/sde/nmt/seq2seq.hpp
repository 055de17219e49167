#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sde/nmt/lstm.hpp"
#include "sde/sde_layer.hpp"

namespace sde {

enum class EmbedderKind { lookup, sde };

inline std::string to_string(EmbedderKind kind) { return kind == EmbedderKind::lookup ? "lookup" : "sde"; }

inline EmbedderKind parse_embedder(const std::string& text) {
  if (text == "lookup") return EmbedderKind::lookup;
  if (text == "sde") return EmbedderKind::sde;
  throw std::invalid_argument("unknown embedder '" + text + "' (expected lookup or sde)");
}

struct ModelConfig {
  int embed_dim = 128;
  int hidden_dim = 512;
  bool bidirectional = false;
  double init_scale = 0.1;
  double forget_bias = 1.0;
};

/// One training or decoding item: source units, their language, and target
/// ids without <s> and </s>.
struct Example {
  std::vector<std::string> source;
  LanguageId lang;
  std::vector<int> target;
};

struct Hypothesis {
  std::vector<int> tokens;  ///< ends with </s> when complete
  double log_prob = 0.0;
  bool complete = false;

  /// Tokens with </s> removed.
  std::vector<int> content() const {
    std::vector<int> out = tokens;
    if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
    return out;
  }
};

/// Better means complete before incomplete, then higher log-probability.
inline bool better_hypothesis(const Hypothesis& a, const Hypothesis& b) {
  if (a.complete != b.complete) return a.complete;
  return a.log_prob > b.log_prob;
}

template <typename Scalar>
struct Encoded {
  std::vector<Var> keys;  ///< per source step, batch x H
  Matrix<Scalar> valid;   ///< batch x steps, 1 where a real token sits
  Var h;                  ///< final forward state
  Var c;
};

template <typename Scalar>
struct DecoderState {
  Var h;
  Var c;
  Var feed;  ///< attentional hidden state of the previous step
};

template <typename Scalar>
struct DecoderStep {
  DecoderState<Scalar> state;
  Var logits;
  Matrix<Scalar> attention;  ///< batch x source steps
};

template <typename Scalar>
struct BatchLoss {
  Var loss;            ///< mean negative log-likelihood per target token
  std::size_t tokens;  ///< target tokens including </s>
};

/// Attentional LSTM encoder-decoder with input feeding. The source side is
/// embedded either by a word lookup table or by soft decoupled encoding.
template <typename Scalar>
class Seq2SeqModel {
 public:
  static Seq2SeqModel lookup(ModelConfig config, Vocabulary source_vocab, Vocabulary target_vocab, std::uint64_t seed) {
    Seq2SeqModel m(std::move(config), std::move(target_vocab));
    std::mt19937_64 rng(seed);
    m.source_vocab_ = std::move(source_vocab);
    m.src_embed_ = &m.params_.add_uniform("src.embed", static_cast<Index>(m.source_vocab_->size()), m.config_.embed_dim,
                                          rng, m.config_.init_scale);
    m.build_rest(rng);
    return m;
  }

  static Seq2SeqModel sde(ModelConfig config, SdeConfig sde_config, BagBuilder bags, std::vector<LanguageId> languages,
                          Vocabulary target_vocab, std::uint64_t seed, std::optional<Vocabulary> fallback_vocab = {},
                          BpeModelSet unit_models = {}) {
    if (sde_config.embed_dim != config.embed_dim)
      throw std::invalid_argument("sde.embed_dim must equal model.embed_dim");
    Seq2SeqModel m(std::move(config), std::move(target_vocab));
    std::mt19937_64 rng(seed);
    m.sde_ = std::make_unique<SdeLayer<Scalar>>(std::move(sde_config), std::move(bags), std::move(languages), m.params_,
                                                rng, std::move(fallback_vocab), std::move(unit_models));
    m.build_rest(rng);
    return m;
  }

  const ModelConfig& config() const { return config_; }
  EmbedderKind embedder() const { return sde_ ? EmbedderKind::sde : EmbedderKind::lookup; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  const Vocabulary& target_vocab() const { return target_vocab_; }
  const std::optional<Vocabulary>& source_vocab() const { return source_vocab_; }
  const SdeLayer<Scalar>* sde_layer() const { return sde_.get(); }
  Index hidden() const { return config_.hidden_dim; }

  Encoded<Scalar> encode(Graph<Scalar>& g, std::span<const Example* const> batch, double dropout = 0.0,
                         std::mt19937_64* rng = nullptr) const {
    const Index B = static_cast<Index>(batch.size());
    if (B == 0) throw std::invalid_argument("encode: empty batch");
    std::size_t T = 0;
    for (const auto* ex : batch) {
      if (ex->source.empty()) throw std::invalid_argument("encode: empty source sentence");
      T = std::max(T, ex->source.size());
    }
    const bool train = rng != nullptr && dropout > 0.0;
    const auto inputs = embed_source(g, batch, T);

    Encoded<Scalar> enc;
    enc.valid = Matrix<Scalar>::Zero(B, static_cast<Index>(T));
    std::vector<std::vector<bool>> keep(T, std::vector<bool>(static_cast<std::size_t>(B)));
    for (Index b = 0; b < B; ++b)
      for (std::size_t t = 0; t < batch[b]->source.size(); ++t) {
        enc.valid(b, static_cast<Index>(t)) = 1;
        keep[t][static_cast<std::size_t>(b)] = true;
      }
    std::vector<Var> x(T);
    for (std::size_t t = 0; t < T; ++t) x[t] = train ? ops::dropout(g, inputs[t], dropout, *rng, true) : inputs[t];

    const Var zero = g.constant(Matrix<Scalar>::Zero(B, hidden()));
    Var h = zero, c = zero;
    std::vector<Var> forward(T);
    for (std::size_t t = 0; t < T; ++t) {
      auto [hn, cn] = encoder_.step(g, x[t], h, c);
      h = ops::blend(g, keep[t], hn, h);
      c = ops::blend(g, keep[t], cn, c);
      forward[t] = h;
    }
    enc.h = h;
    enc.c = c;
    if (!config_.bidirectional) {
      enc.keys = std::move(forward);
      return enc;
    }
    Var hb = zero, cb = zero;
    std::vector<Var> backward(T);
    for (std::size_t t = T; t-- > 0;) {
      auto [hn, cn] = encoder_bwd_.step(g, x[t], hb, cb);
      hb = ops::blend(g, keep[t], hn, hb);
      cb = ops::blend(g, keep[t], cn, cb);
      backward[t] = hb;
    }
    const Var proj = g.parameter(*enc_proj_);
    for (std::size_t t = 0; t < T; ++t) enc.keys.push_back(ops::matmul(g, ops::concat_cols(g, {forward[t], backward[t]}), proj));
    return enc;
  }

  DecoderState<Scalar> initial_state(Graph<Scalar>& g, const Encoded<Scalar>& enc) const {
    const Index B = enc.valid.rows();
    return {enc.h, enc.c, g.constant(Matrix<Scalar>::Zero(B, hidden()))};
  }

  Var embed_target(Graph<Scalar>& g, std::span<const int> ids) const { return ops::embedding_rows(g, *tgt_embed_, ids); }

  DecoderStep<Scalar> decode_step(Graph<Scalar>& g, const std::vector<Var>& keys, const Matrix<Scalar>& valid,
                                  const DecoderState<Scalar>& state, Var prev_embedding, double dropout = 0.0,
                                  std::mt19937_64* rng = nullptr) const {
    const bool train = rng != nullptr && dropout > 0.0;
    const Var emb = train ? ops::dropout(g, prev_embedding, dropout, *rng, true) : prev_embedding;
    const Var input = ops::concat_cols(g, {emb, state.feed});
    auto [h, c] = decoder_.step(g, input, state.h, state.c);
    auto att = ops::dot_attention(g, h, keys, valid);
    const Var attn_hidden = ops::tanh(g, ops::matmul(g, ops::concat_cols(g, {att.context, h}), g.parameter(*att_w_)));
    const Var out = train ? ops::dropout(g, attn_hidden, dropout, *rng, true) : attn_hidden;
    const Var logits = ops::add_bias(g, ops::matmul(g, out, g.parameter(*out_w_)), g.parameter(*out_b_));
    return {{h, c, attn_hidden}, logits, std::move(att.weights)};
  }

  /// Teacher-forced loss of a batch. Dropout applies only when `rng` is given.
  BatchLoss<Scalar> loss(Graph<Scalar>& g, std::span<const Example* const> batch, double dropout = 0.0,
                         std::mt19937_64* rng = nullptr) const {
    const auto enc = encode(g, batch, dropout, rng);
    auto state = initial_state(g, enc);
    std::size_t steps = 0, tokens = 0;
    for (const auto* ex : batch) {
      steps = std::max(steps, ex->target.size() + 1);
      tokens += ex->target.size() + 1;
    }
    const auto normalizer = static_cast<Scalar>(tokens);
    Var total;
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<int> prev, gold;
      for (const auto* ex : batch) {
        const std::size_t n = ex->target.size();
        prev.push_back(t == 0 ? Vocabulary::kBos : (t <= n ? ex->target[t - 1] : Vocabulary::kPad));
        gold.push_back(t < n ? ex->target[t] : (t == n ? Vocabulary::kEos : Vocabulary::kPad));
      }
      auto out = decode_step(g, enc.keys, enc.valid, state, embed_target(g, prev), dropout, rng);
      state = out.state;
      const Var step_loss = ops::cross_entropy_masked(g, out.logits, std::move(gold), Vocabulary::kPad, normalizer);
      total = total.valid() ? ops::add(g, total, step_loss) : step_loss;
    }
    return {total, tokens};
  }

  static std::size_t default_max_length(std::size_t source_length) { return 2 * source_length + 10; }

  /// Greedy decoding of several sentences at once.
  std::vector<Hypothesis> greedy(std::span<const Example* const> batch, std::size_t max_len = 0) const {
    Graph<Scalar> g(false);
    const auto enc = encode(g, batch);
    auto state = initial_state(g, enc);
    const std::size_t B = batch.size();
    std::vector<Hypothesis> hyps(B);
    std::vector<std::size_t> limit(B);
    std::size_t steps = 0;
    for (std::size_t b = 0; b < B; ++b) {
      limit[b] = max_len ? max_len : default_max_length(batch[b]->source.size());
      steps = std::max(steps, limit[b]);
    }
    std::vector<int> prev(B, Vocabulary::kBos);
    for (std::size_t t = 0; t < steps; ++t) {
      auto out = decode_step(g, enc.keys, enc.valid, state, embed_target(g, prev));
      state = out.state;
      const auto logp = log_softmax(g.value(out.logits));
      bool all_done = true;
      for (std::size_t b = 0; b < B; ++b) {
        auto& h = hyps[b];
        if (h.complete || h.tokens.size() >= limit[b]) {
          prev[b] = Vocabulary::kPad;
          continue;
        }
        Index best = 0;
        logp.row(static_cast<Index>(b)).maxCoeff(&best);
        h.tokens.push_back(static_cast<int>(best));
        h.log_prob += static_cast<double>(logp(static_cast<Index>(b), best));
        h.complete = best == Vocabulary::kEos;
        prev[b] = static_cast<int>(best);
        if (!h.complete && h.tokens.size() < limit[b]) all_done = false;
      }
      if (all_done) break;
    }
    return hyps;
  }

  /// Beam search without length normalization. The greedy path is kept as a
  /// candidate, so the result never scores below greedy decoding.
  Hypothesis translate(const std::vector<std::string>& source, const LanguageId& lang, int beam_size = 5,
                       std::size_t max_len = 0) const {
    if (beam_size < 1) throw std::invalid_argument("beam size must be >= 1");
    if (source.empty()) return Hypothesis{{Vocabulary::kEos}, 0.0, true};
    const Example ex{source, lang, {}};
    const Example* one[] = {&ex};
    Hypothesis greedy_hyp = greedy(one, max_len).front();
    if (beam_size == 1) return greedy_hyp;
    Hypothesis best = beam_search(ex, static_cast<std::size_t>(beam_size),
                                  max_len ? max_len : default_max_length(source.size()));
    return better_hypothesis(greedy_hyp, best) ? greedy_hyp : best;
  }

  static Matrix<Scalar> log_softmax(const Matrix<Scalar>& logits) {
    Matrix<Scalar> out(logits.rows(), logits.cols());
    for (Index r = 0; r < logits.rows(); ++r) {
      const Scalar mx = logits.row(r).maxCoeff();
      const Scalar lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
      out.row(r) = logits.row(r).array() - lse;
    }
    return out;
  }

 private:
  Seq2SeqModel(ModelConfig config, Vocabulary target_vocab)
      : config_(std::move(config)), target_vocab_(std::move(target_vocab)) {
    if (config_.embed_dim < 1 || config_.hidden_dim < 1) throw std::invalid_argument("model dimensions must be >= 1");
  }

  void build_rest(std::mt19937_64& rng) {
    const Index E = config_.embed_dim, H = config_.hidden_dim, V = static_cast<Index>(target_vocab_.size());
    const double s = config_.init_scale;
    encoder_ = LstmCell<Scalar>::create(params_, "enc.", E, H, rng, s, config_.forget_bias);
    if (config_.bidirectional) {
      encoder_bwd_ = LstmCell<Scalar>::create(params_, "enc_bwd.", E, H, rng, s, config_.forget_bias);
      enc_proj_ = &params_.add_uniform("enc.proj", 2 * H, H, rng, s);
    }
    decoder_ = LstmCell<Scalar>::create(params_, "dec.", E + H, H, rng, s, config_.forget_bias);
    tgt_embed_ = &params_.add_uniform("tgt.embed", V, E, rng, s);
    att_w_ = &params_.add_uniform("att.W", 2 * H, H, rng, s);
    out_w_ = &params_.add_uniform("out.W", H, V, rng, s);
    out_b_ = &params_.add_uniform("out.b", 1, V, rng, s);
  }

  std::vector<Var> embed_source(Graph<Scalar>& g, std::span<const Example* const> batch, std::size_t T) const {
    std::vector<Var> inputs(T);
    if (!sde_) {
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<int> ids;
        for (const auto* ex : batch) ids.push_back(t < ex->source.size() ? source_vocab_->id(ex->source[t]) : Vocabulary::kPad);
        inputs[t] = ops::embedding_rows(g, *src_embed_, ids);
      }
      return inputs;
    }
    std::map<std::pair<LanguageId, std::string>, int> slot;
    std::vector<std::pair<std::string, LanguageId>> unique;
    for (const auto* ex : batch)
      for (const auto& w : ex->source)
        if (slot.emplace(std::make_pair(ex->lang, w), static_cast<int>(unique.size())).second) unique.emplace_back(w, ex->lang);
    const Var table = sde_->embed_mixed(g, unique);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<int> index;
      for (const auto* ex : batch) index.push_back(t < ex->source.size() ? slot.at({ex->lang, ex->source[t]}) : -1);
      inputs[t] = ops::gather_rows(g, table, std::move(index));
    }
    return inputs;
  }

  Hypothesis beam_search(const Example& ex, std::size_t k, std::size_t max_len) const {
    Graph<Scalar> g(false);
    const Example* one[] = {&ex};
    const auto enc = encode(g, one);
    const auto init = initial_state(g, enc);
    Matrix<Scalar> h = g.value(init.h), c = g.value(init.c), feed = g.value(init.feed);
    std::vector<Matrix<Scalar>> key_values;
    for (auto v : enc.keys) key_values.push_back(g.value(v));

    struct Live {
      std::vector<int> tokens;
      double score;
    };
    std::vector<Live> live{{{}, 0.0}};
    std::vector<Hypothesis> done;
    std::map<Index, std::vector<Var>> tiled;
    for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
      const Index n = static_cast<Index>(live.size());
      auto& keys = tiled[n];
      if (keys.empty())
        for (const auto& kv : key_values) keys.push_back(g.constant(kv.replicate(n, 1)));
      const Matrix<Scalar> valid = enc.valid.replicate(n, 1);
      std::vector<int> prev;
      for (const auto& l : live) prev.push_back(l.tokens.empty() ? Vocabulary::kBos : l.tokens.back());
      DecoderState<Scalar> state{g.constant(h), g.constant(c), g.constant(feed)};
      auto out = decode_step(g, keys, valid, state, embed_target(g, prev));
      const auto logp = log_softmax(g.value(out.logits));

      std::vector<std::tuple<double, int, int>> cand;  // score, parent, token
      const Index V = logp.cols();
      std::vector<int> order(static_cast<std::size_t>(V));
      for (Index i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        const auto take = std::min<std::size_t>(k, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), [&](int a, int b) {
          return logp(i, a) > logp(i, b) || (logp(i, a) == logp(i, b) && a < b);
        });
        for (std::size_t j = 0; j < take; ++j)
          cand.emplace_back(live[static_cast<std::size_t>(i)].score + static_cast<double>(logp(i, order[j])),
                            static_cast<int>(i), order[j]);
      }
      std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
      });
      cand.resize(std::min(cand.size(), k));

      std::vector<Live> next;
      std::vector<int> parents;
      for (const auto& [score, parent, token] : cand) {
        auto tokens = live[static_cast<std::size_t>(parent)].tokens;
        tokens.push_back(token);
        if (token == Vocabulary::kEos) {
          done.push_back({std::move(tokens), score, true});
        } else {
          next.push_back({std::move(tokens), score});
          parents.push_back(parent);
        }
      }
      if (done.size() >= k) break;
      double best_done = -std::numeric_limits<double>::infinity();
      for (const auto& d : done) best_done = std::max(best_done, d.log_prob);
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& l : next) best_live = std::max(best_live, l.score);
      if (best_done >= best_live) break;

      const auto& H = g.value(out.state.h);
      const auto& C = g.value(out.state.c);
      const auto& F = g.value(out.state.feed);
      h.resize(static_cast<Index>(parents.size()), H.cols());
      c.resize(h.rows(), C.cols());
      feed.resize(h.rows(), F.cols());
      for (std::size_t r = 0; r < parents.size(); ++r) {
        h.row(static_cast<Index>(r)) = H.row(parents[r]);
        c.row(static_cast<Index>(r)) = C.row(parents[r]);
        feed.row(static_cast<Index>(r)) = F.row(parents[r]);
      }
      live = std::move(next);
    }
    Hypothesis best;
    best.log_prob = -std::numeric_limits<double>::infinity();
    for (const auto& d : done)
      if (better_hypothesis(d, best)) best = d;
    if (done.empty())
      for (const auto& l : live)
        if (l.score > best.log_prob) best = Hypothesis{l.tokens, l.score, false};
    return best;
  }

  ModelConfig config_;
  Vocabulary target_vocab_;
  std::optional<Vocabulary> source_vocab_;
  ParameterSet<Scalar> params_;
  std::unique_ptr<SdeLayer<Scalar>> sde_;
  Parameter<Scalar>* src_embed_ = nullptr;
  LstmCell<Scalar> encoder_, encoder_bwd_, decoder_;
  Parameter<Scalar>* enc_proj_ = nullptr;
  Parameter<Scalar>* tgt_embed_ = nullptr;
  Parameter<Scalar>* att_w_ = nullptr;
  Parameter<Scalar>* out_w_ = nullptr;
  Parameter<Scalar>* out_b_ = nullptr;
};

}  // namespace sde
