#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sde/sde_layer.hpp"

namespace sde {

using WordInLanguage = std::pair<std::string, LanguageId>;

inline constexpr double kKlFloor = 1e-12;

/// KL(p || q) with both probabilities floored at 1e-12 inside the log.
template <typename Derived>
double kl_divergence(const Eigen::MatrixBase<Derived>& p, const Eigen::MatrixBase<Derived>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p(i));
    if (pi <= 0.0) continue;
    kl += pi * (std::log(std::max(pi, kKlFloor)) - std::log(std::max(static_cast<double>(q(i)), kKlFloor)));
  }
  return kl;
}

/// Rows follow words_a, columns words_b.
template <typename Scalar>
Matrix<double> attention_kl(const SdeLayer<Scalar>& layer, const std::vector<WordInLanguage>& words_a,
                            const std::vector<WordInLanguage>& words_b) {
  if (!layer.config().use_latent) throw std::logic_error("attention_kl needs the latent component");
  std::vector<RowVector<double>> pa, pb;
  for (const auto& [w, l] : words_a) pa.push_back(layer.attention_distribution(w, l).template cast<double>());
  for (const auto& [w, l] : words_b) pb.push_back(layer.attention_distribution(w, l).template cast<double>());
  Matrix<double> out(static_cast<Index>(pa.size()), static_cast<Index>(pb.size()));
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pb.size(); ++j) out(static_cast<Index>(i), static_cast<Index>(j)) = kl_divergence(pa[i], pb[j]);
  return out;
}

enum class EmbeddingStage { after_lexical, after_transform, full_sde };

inline std::string to_string(EmbeddingStage stage) {
  switch (stage) {
    case EmbeddingStage::after_lexical: return "after_lexical";
    case EmbeddingStage::after_transform: return "after_transform";
    case EmbeddingStage::full_sde: return "full_sde";
  }
  return "full_sde";
}

inline EmbeddingStage parse_embedding_stage(const std::string& text) {
  if (text == "after_lexical") return EmbeddingStage::after_lexical;
  if (text == "after_transform") return EmbeddingStage::after_transform;
  if (text == "full_sde") return EmbeddingStage::full_sde;
  throw std::invalid_argument("unknown embedding stage '" + text + "'");
}

template <typename Scalar>
std::vector<RowVector<Scalar>> stage_vectors(const SdeLayer<Scalar>& layer, const std::vector<WordInLanguage>& words,
                                             EmbeddingStage stage) {
  std::vector<RowVector<Scalar>> out;
  out.reserve(words.size());
  for (const auto& [w, l] : words) {
    auto s = layer.stages(w, l);
    out.push_back(stage == EmbeddingStage::after_lexical     ? s.lexical
                  : stage == EmbeddingStage::after_transform ? s.transform
                                                             : s.full);
  }
  return out;
}

/// One line per word: word TAB lang TAB stage TAB space-separated values.
template <typename Scalar>
void export_embeddings(std::ostream& out, const SdeLayer<Scalar>& layer, const std::vector<WordInLanguage>& words,
                       EmbeddingStage stage) {
  if (words.empty()) throw std::invalid_argument("export_embeddings: no words");
  const auto vectors = stage_vectors(layer, words, stage);
  std::ostringstream line;
  line.precision(9);
  for (std::size_t i = 0; i < words.size(); ++i) {
    line.str("");
    line << words[i].first << '\t' << words[i].second.code() << '\t' << to_string(stage) << '\t';
    for (Index d = 0; d < vectors[i].size(); ++d) line << (d ? " " : "") << static_cast<double>(vectors[i](d));
    out << line.str() << '\n';
  }
}

}  // namespace sde
