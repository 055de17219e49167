#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sde/corpus.hpp"

namespace sde::testing {

inline constexpr const char* kSyntheticAlphabet = "abcdefghiklmnoprstuvyz";

/// Parallel word lists: every concept has an English word, a low-resource
/// spelling and a high-resource spelling that differs from it in one character.
struct RelatedLexicon {
  std::vector<std::string> english;
  std::vector<std::string> lrl;
  std::vector<std::string> hrl;
};

inline RelatedLexicon make_related_lexicon(std::size_t concepts, std::mt19937_64& rng) {
  const std::string alphabet = kSyntheticAlphabet;
  std::uniform_int_distribution<std::size_t> len(4, 8), letter(0, alphabet.size() - 1);
  RelatedLexicon lex;
  std::set<std::string> used;
  while (lex.lrl.size() < concepts) {
    std::string w;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) w += alphabet[letter(rng)];
    std::string v = w;
    const auto pos = rng() % v.size();
    char c;
    do c = alphabet[letter(rng)];
    while (c == v[pos]);
    v[pos] = c;
    if (used.count(w) || used.count(v)) continue;
    used.insert(w);
    used.insert(v);
    lex.english.push_back("E" + std::to_string(lex.english.size()));
    lex.lrl.push_back(w);
    lex.hrl.push_back(v);
  }
  return lex;
}

/// Monotone word-for-word sentences over a Zipf-distributed concept stream.
inline ParallelCorpus sample_related(const RelatedLexicon& lex, bool high_resource, std::size_t sentences,
                                     const LanguageId& lang, Split split, std::mt19937_64& rng,
                                     std::size_t min_len = 3, std::size_t max_len = 7) {
  std::vector<double> weights;
  for (std::size_t i = 0; i < lex.english.size(); ++i) weights.push_back(1.0 / std::pow(double(i + 1), 0.8));
  std::discrete_distribution<std::size_t> pick_concept(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  ParallelCorpus c;
  c.split = split;
  for (std::size_t s = 0; s < sentences; ++s) {
    SentencePair p;
    p.lang = lang;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = pick_concept(rng);
      p.source.push_back(high_resource ? lex.hrl[k] : lex.lrl[k]);
      p.target.push_back(lex.english[k]);
    }
    c.pairs.push_back(std::move(p));
  }
  return c;
}

/// Sentences whose target is an exact copy of the source.
inline ParallelCorpus copy_corpus(std::size_t sentences, std::size_t vocab, std::mt19937_64& rng,
                                  std::size_t min_len = 3, std::size_t max_len = 8) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < vocab; ++i) words.push_back("w" + std::to_string(i));
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1), len(min_len, max_len);
  ParallelCorpus c;
  for (std::size_t s = 0; s < sentences; ++s) {
    SentencePair p;
    p.lang = LanguageId("src");
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) p.source.push_back(words[pick(rng)]);
    p.target = p.source;
    c.pairs.push_back(std::move(p));
  }
  return c;
}

inline void write_corpus(const ParallelCorpus& c, const std::filesystem::path& src, const std::filesystem::path& tgt) {
  std::vector<std::string> s, t;
  for (const auto& p : c.pairs) {
    s.push_back(join_tokens(p.source));
    t.push_back(join_tokens(p.target));
  }
  write_lines(src, s);
  write_lines(tgt, t);
}

}  // namespace sde::testing
