#include "sde/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sde/segmentation.hpp"

namespace sde {

LanguageId::LanguageId(std::string code) : code_(std::move(code)) {
  if (code_.empty()) throw std::invalid_argument("language id must be nonempty");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "dev") return Split::dev;
  if (text == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + text + "'");
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start <= line.size()) {
    auto end = line.find(' ', start);
    if (end == std::string::npos) end = line.size();
    if (end > start) tokens.emplace_back(line, start, end - start);
    start = end + 1;
  }
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

ParallelCorpus load_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                             const LanguageId& lang, Split split) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size()) {
    throw std::runtime_error("line count mismatch " + std::to_string(src.size()) + " vs " +
                             std::to_string(tgt.size()) + " (" + src_path.string() + ", " + tgt_path.string() + ")");
  }
  ParallelCorpus corpus;
  corpus.split = split;
  corpus.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = split_tokens(src[i]);
    auto t = split_tokens(tgt[i]);
    if (s.empty() || t.empty()) {
      ++corpus.dropped_blank;
      continue;
    }
    corpus.pairs.push_back({std::move(s), std::move(t), lang});
  }
  return corpus;
}

Vocabulary build_word_vocab(std::span<const ParallelCorpus> corpora, std::size_t max_size, CorpusSide side) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& corpus : corpora) {
    for (const auto& pair : corpus.pairs) {
      if (side != CorpusSide::target)
        for (const auto& t : pair.source) ++counts[t];
      if (side != CorpusSide::source)
        for (const auto& t : pair.target) ++counts[t];
    }
  }
  return Vocabulary::from_counts(counts, max_size);
}

namespace {

void add_ngram_counts(const std::map<std::string, std::int64_t>& word_counts, const NgramVocabOptions& options,
                      std::map<std::string, std::int64_t>& ngram_counts) {
  for (const auto& [word, freq] : word_counts) {
    for (auto& gram : enumerate_ngrams(word, options.n_set, options.boundary_markers)) ngram_counts[gram] += freq;
  }
}

}  // namespace

Vocabulary build_ngram_vocab(std::span<const ParallelCorpus> corpora, std::size_t max_size,
                             const NgramVocabOptions& options) {
  if (options.n_set.empty()) throw std::invalid_argument("n_set must be nonempty");
  for (int n : options.n_set)
    if (n < 1) throw std::invalid_argument("n-gram orders must be >= 1, got " + std::to_string(n));

  std::map<std::string, std::map<std::string, std::int64_t>> words_by_lang;
  for (const auto& corpus : corpora)
    for (const auto& pair : corpus.pairs)
      for (const auto& t : pair.source) ++words_by_lang[pair.lang.code()][t];

  std::map<std::string, std::int64_t> totals;
  if (options.mode == NgramVocabMode::concatenated || words_by_lang.size() <= 1) {
    for (const auto& [lang, words] : words_by_lang) add_ngram_counts(words, options, totals);
    return Vocabulary::from_counts(totals, max_size);
  }

  const std::size_t quota = (max_size - std::min<std::size_t>(max_size, Vocabulary::kNumSpecials)) / words_by_lang.size();
  std::map<std::string, std::int64_t> per_lang_all;
  std::set<std::string> kept;
  for (const auto& [lang, words] : words_by_lang) {
    std::map<std::string, std::int64_t> counts;
    add_ngram_counts(words, options, counts);
    auto ranked = rank_counts(counts);
    for (std::size_t i = 0; i < ranked.size() && i < quota; ++i) kept.insert(ranked[i].first);
    for (const auto& [gram, c] : counts) per_lang_all[gram] += c;
  }
  for (const auto& gram : kept) totals[gram] = per_lang_all[gram];
  return Vocabulary::from_counts(totals, max_size);
}

std::vector<std::vector<std::size_t>> batch_iterator(std::span<const std::size_t> source_lengths,
                                                     std::size_t batch_words, std::uint64_t shuffle_seed,
                                                     std::size_t window_batches) {
  for (std::size_t i = 0; i < source_lengths.size(); ++i) {
    if (source_lengths[i] > batch_words) {
      throw std::invalid_argument("sentence " + std::to_string(i) + " has " + std::to_string(source_lengths[i]) +
                                  " tokens, more than batch_words " + std::to_string(batch_words));
    }
  }
  std::vector<std::size_t> order(source_lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> batches;
  const std::size_t window_tokens = std::max<std::size_t>(1, window_batches) * batch_words;
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start;
    std::size_t tokens = 0;
    while (end < order.size() && tokens < window_tokens) tokens += source_lengths[order[end++]];
    std::stable_sort(order.begin() + start, order.begin() + end,
                     [&](std::size_t a, std::size_t b) { return source_lengths[a] < source_lengths[b]; });
    std::vector<std::size_t> current;
    std::size_t used = 0;
    for (std::size_t k = start; k < end; ++k) {
      const auto len = source_lengths[order[k]];
      if (!current.empty() && used + len > batch_words) {
        batches.push_back(std::move(current));
        current.clear();
        used = 0;
      }
      current.push_back(order[k]);
      used += len;
    }
    if (!current.empty()) batches.push_back(std::move(current));
    start = end;
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

std::vector<std::vector<std::size_t>> batch_iterator(const ParallelCorpus& corpus, std::size_t batch_words,
                                                     std::uint64_t shuffle_seed) {
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.size());
  for (const auto& p : corpus.pairs) lengths.push_back(p.source.size());
  return batch_iterator(lengths, batch_words, shuffle_seed);
}

const SplitCounts& CorpusStats::at(const std::string& lang, Split split) const {
  static const SplitCounts empty{};
  auto it = per_language.find(lang);
  if (it == per_language.end()) return empty;
  auto jt = it->second.find(split);
  return jt == it->second.end() ? empty : jt->second;
}

std::string CorpusStats::to_tsv() const {
  std::ostringstream out;
  out << "lang\tsplit\tsentences\tsource_tokens\ttarget_tokens\tsource_types\ttarget_types\n";
  for (const auto& [lang, splits] : per_language) {
    for (const auto& [split, c] : splits) {
      out << lang << '\t' << to_string(split) << '\t' << c.sentences << '\t' << c.source_tokens << '\t'
          << c.target_tokens << '\t' << c.source_types << '\t' << c.target_types << '\n';
    }
  }
  return out.str();
}

CorpusStats corpus_stats(std::span<const ParallelCorpus> corpora) {
  CorpusStats stats;
  std::map<std::pair<std::string, Split>, std::pair<std::set<std::string>, std::set<std::string>>> types;
  for (const auto& corpus : corpora) {
    for (const auto& pair : corpus.pairs) {
      auto& c = stats.per_language[pair.lang.code()][corpus.split];
      ++c.sentences;
      c.source_tokens += pair.source.size();
      c.target_tokens += pair.target.size();
      auto& [src_types, tgt_types] = types[{pair.lang.code(), corpus.split}];
      src_types.insert(pair.source.begin(), pair.source.end());
      tgt_types.insert(pair.target.begin(), pair.target.end());
    }
  }
  for (auto& [key, sets] : types) {
    auto& c = stats.per_language[key.first][key.second];
    c.source_types = sets.first.size();
    c.target_types = sets.second.size();
  }
  return stats;
}

ParallelCorpus multi_source_setup(const ParallelCorpus& lrl, std::span<const ParallelCorpus> hrl) {
  ParallelCorpus out;
  out.split = lrl.split;
  out.target_lang = lrl.target_lang;
  out.pairs = lrl.pairs;
  for (const auto& corpus : hrl) {
    if (corpus.target_lang != lrl.target_lang) {
      throw std::invalid_argument("mismatched target language: " + lrl.target_lang.code() + " vs " +
                                  corpus.target_lang.code());
    }
    out.pairs.insert(out.pairs.end(), corpus.pairs.begin(), corpus.pairs.end());
  }
  return out;
}

std::vector<LanguageId> source_languages(std::span<const ParallelCorpus> corpora) {
  std::vector<LanguageId> langs;
  for (const auto& corpus : corpora)
    for (const auto& pair : corpus.pairs)
      if (std::find(langs.begin(), langs.end(), pair.lang) == langs.end()) langs.push_back(pair.lang);
  return langs;
}

}  // namespace sde
