#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sde/nmt/seq2seq.hpp"
#include "sde/numcore/grad_check.hpp"
#include "sde/numcore/ops.hpp"
#include "sde/sde_layer.hpp"

namespace sde {

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
};

namespace detail {

inline Matrix<double> uniform_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Matrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

inline std::vector<Parameter<double>*> parameter_list(const ParameterSet<double>& set) {
  std::vector<Parameter<double>*> out;
  for (const auto& p : set) out.push_back(p.get());
  return out;
}

inline Vocabulary counted_vocab(const std::vector<std::string>& tokens) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& t : tokens) ++counts[t];
  return Vocabulary::from_counts(counts, counts.size() + Vocabulary::kNumSpecials);
}

}  // namespace detail

/// Every differentiable op on small random inputs, each reduced to a scalar
/// through a fixed random weighting.
inline std::vector<GradCheckCase> op_gradient_checks(std::uint64_t seed = 11) {
  using Mat = Matrix<double>;
  using detail::uniform_matrix;
  std::mt19937_64 rng(seed);
  ParameterSet<double> set;
  auto& a = set.add_uniform("a", 3, 4, rng, 1.0);
  auto& b = set.add_uniform("b", 4, 5, rng, 1.0);
  auto& c = set.add_uniform("c", 3, 4, rng, 1.0);
  auto& bias = set.add_uniform("bias", 1, 4, rng, 1.0);
  auto& table = set.add_uniform("table", 6, 4, rng, 1.0);
  const auto ps = detail::parameter_list(set);

  const Mat w35 = uniform_matrix(3, 5, rng), w34 = uniform_matrix(3, 4, rng), w38 = uniform_matrix(3, 8, rng);
  const Mat w44 = uniform_matrix(4, 4, rng), w42 = uniform_matrix(4, 2, rng), w24 = uniform_matrix(2, 4, rng);
  const Mat w33 = uniform_matrix(3, 3, rng), w64 = uniform_matrix(6, 4, rng);

  using G = Graph<double>;
  std::vector<std::pair<std::string, std::function<Var(G&)>>> cases = {
      {"matmul", [&](G& g) { return ops::weighted_sum(g, ops::matmul(g, g.parameter(a), g.parameter(b)), w35); }},
      {"matmul_nt", [&](G& g) { return ops::weighted_sum(g, ops::matmul_nt(g, g.parameter(a), g.parameter(c)), w33); }},
      {"add", [&](G& g) { return ops::weighted_sum(g, ops::add(g, g.parameter(a), g.parameter(c)), w34); }},
      {"add_bias", [&](G& g) { return ops::weighted_sum(g, ops::add_bias(g, g.parameter(a), g.parameter(bias)), w34); }},
      {"mul", [&](G& g) { return ops::weighted_sum(g, ops::mul(g, g.parameter(a), g.parameter(c)), w34); }},
      {"scale", [&](G& g) { return ops::weighted_sum(g, ops::scale(g, g.parameter(a), 0.37), w34); }},
      {"tanh", [&](G& g) { return ops::weighted_sum(g, ops::tanh(g, g.parameter(a)), w34); }},
      {"sigmoid", [&](G& g) { return ops::weighted_sum(g, ops::sigmoid(g, g.parameter(a)), w34); }},
      {"softmax_rows", [&](G& g) { return ops::weighted_sum(g, ops::softmax_rows(g, g.parameter(a)), w34); }},
      {"dropout",
       [&](G& g) { return ops::weighted_sum(g, ops::dropout(g, g.parameter(a), 0.3, std::uint64_t{9}, true), w34); }},
      {"embedding_rows",
       [&](G& g) {
         std::vector<int> ids{1, 4, 1};
         return ops::weighted_sum(g, ops::embedding_rows(g, table, ids), w34);
       }},
      {"bag_embed",
       [&](G& g) {
         std::vector<BagOfNgrams> bags(2);
         bags[0].counts = {{0, 2}, {3, 1}};
         bags[1].counts = {{5, 3}};
         return ops::weighted_sum(g, ops::bag_embed<double>(g, table, bags), w24);
       }},
      {"gather_rows", [&](G& g) { return ops::weighted_sum(g, ops::gather_rows(g, g.parameter(a), {2, -1, 0, 2}), w44); }},
      {"concat_cols",
       [&](G& g) { return ops::weighted_sum(g, ops::concat_cols(g, {g.parameter(a), g.parameter(c)}), w38); }},
      {"concat_rows", [&](G& g) { return ops::weighted_sum(g, ops::concat_rows(g, {g.parameter(table)}), w64); }},
      {"slice_cols", [&](G& g) { return ops::weighted_sum(g, ops::slice_cols(g, g.parameter(b), 1, 2), w42); }},
      {"blend",
       [&](G& g) { return ops::weighted_sum(g, ops::blend(g, {true, false, true}, g.parameter(a), g.parameter(c)), w34); }},
      {"dot_attention",
       [&](G& g) {
         Mat valid = Mat::Ones(3, 2);
         valid(1, 1) = 0;
         auto r = ops::dot_attention(g, g.parameter(a), {g.parameter(c), ops::tanh(g, g.parameter(a))}, valid);
         return ops::weighted_sum(g, r.context, w34);
       }},
      {"cross_entropy", [&](G& g) { return ops::cross_entropy(g, g.parameter(a), {0, 3, 2}); }},
      {"cross_entropy_masked", [&](G& g) { return ops::cross_entropy_masked(g, g.parameter(a), {0, 1, 2}, 1, 2.0); }},
  };
  std::vector<GradCheckCase> out;
  for (auto& [name, fn] : cases) out.push_back({"op." + name, grad_check<double>(fn, ps)});
  return out;
}

/// The SDE layer under every legal combination of its four component flags.
inline std::vector<GradCheckCase> sde_gradient_checks(std::uint64_t seed = 3) {
  const std::vector<std::string> words{"kitab", "kitap", "ev", "evler", "su"};
  const LanguageId aze("aze"), tur("tur");
  std::mt19937_64 wrng(seed);
  std::vector<GradCheckCase> out;
  for (int mask = 0; mask < 16; ++mask) {
    SdeConfig c;
    c.embed_dim = 4;
    c.latent_size = 6;
    c.n_set = {1, 2, 3};
    c.use_lexical = mask & 1;
    c.use_lang_transform = mask & 2;
    c.use_latent = mask & 4;
    c.use_residual = mask & 8;
    if (!c.use_lexical && !c.use_latent) continue;
    std::vector<std::string> grams;
    for (const auto& w : words)
      for (const auto& g : enumerate_ngrams(w, c.n_set)) grams.push_back(g);
    ParameterSet<double> params;
    std::mt19937_64 rng(seed + 8);
    SdeLayer<double> layer(c, BagBuilder(detail::counted_vocab(grams), c.n_set), {aze, tur}, params, rng,
                           detail::counted_vocab(words));
    const std::vector<std::pair<std::string, LanguageId>> items{{"kitab", aze}, {"ev", aze},  {"kitap", tur},
                                                                 {"kitab", aze}, {"su", tur}, {"evler", tur}};
    const Matrix<double> w = detail::uniform_matrix(static_cast<Index>(items.size()), c.embed_dim, wrng);
    const auto ps = detail::parameter_list(params);
    std::string name = "sde";
    name += c.use_lexical ? "+lex" : "-lex";
    name += c.use_lang_transform ? "+lang" : "-lang";
    name += c.use_latent ? "+latent" : "-latent";
    name += c.use_residual ? "+res" : "-res";
    out.push_back({name, grad_check<double>(
                             [&](Graph<double>& g) { return ops::weighted_sum(g, layer.embed_mixed(g, items), w); }, ps)});
  }
  return out;
}

/// Full teacher-forced loss of tiny translation models; a fixed subset of
/// entries per parameter is checked.
inline std::vector<GradCheckCase> model_gradient_checks(std::uint64_t seed = 3) {
  const std::vector<std::string> source{"ev", "su", "kitab", "gul", "yol"};
  const std::vector<std::string> target{"house", "water", "book", "rose", "road"};
  const LanguageId aze("aze"), tur("tur");
  struct Variant {
    const char* name;
    bool sde;
    bool bidirectional;
  };
  std::vector<GradCheckCase> out;
  for (auto v : {Variant{"lookup", false, false}, Variant{"sde", true, false}, Variant{"bidirectional", false, true}}) {
    ModelConfig cfg;
    cfg.embed_dim = 3;
    cfg.hidden_dim = 3;
    cfg.bidirectional = v.bidirectional;
    cfg.init_scale = 0.8;
    auto model = [&] {
      if (!v.sde) return Seq2SeqModel<double>::lookup(cfg, detail::counted_vocab(source), detail::counted_vocab(target), seed);
      SdeConfig s;
      s.embed_dim = cfg.embed_dim;
      s.latent_size = 6;
      s.n_set = {1, 2};
      std::vector<std::string> grams;
      for (const auto& w : source)
        for (const auto& g : enumerate_ngrams(w, s.n_set)) grams.push_back(g);
      return Seq2SeqModel<double>::sde(cfg, s, BagBuilder(detail::counted_vocab(grams), s.n_set), {aze, tur},
                                       detail::counted_vocab(target), seed);
    }();
    const auto& tv = model.target_vocab();
    const std::vector<Example> data{{{"ev", "su"}, aze, tv.encode({"house", "water", "rose"})},
                                    {{"kitab", "gul", "yol"}, tur, tv.encode({"book"})}};
    const std::vector<const Example*> batch{&data[0], &data[1]};
    const auto ps = detail::parameter_list(model.parameters());
    out.push_back({std::string("model.") + v.name,
                   grad_check<double>([&](Graph<double>& g) { return model.loss(g, batch).loss; }, ps, 1e-5, 40)});
  }
  return out;
}

inline std::vector<GradCheckCase> full_gradient_suite() {
  auto out = op_gradient_checks();
  for (auto& c : sde_gradient_checks()) out.push_back(std::move(c));
  for (auto& c : model_gradient_checks()) out.push_back(std::move(c));
  return out;
}

}  // namespace sde
