#include "sde/segmentation.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <algorithm>
#include <tuple>

#include "sde/utf8.hpp"

namespace sde {

namespace {

using SymbolPair = std::pair<std::string, std::string>;

struct BpeWord {
  std::vector<std::string> symbols;
  std::int64_t freq = 0;
};

std::vector<std::string> initial_symbols(std::string_view word, const std::string& end_marker) {
  auto symbols = utf8::code_points(word);
  symbols.push_back(end_marker);
  return symbols;
}

// Merges every left-to-right occurrence of `pair` in place.
bool merge_pair(std::vector<std::string>& symbols, const SymbolPair& pair) {
  bool changed = false;
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(symbols[i] + symbols[i + 1]);
      ++i;
      changed = true;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
  return changed;
}

class PairTable {
 public:
  void add(const SymbolPair& pair, std::int64_t delta, std::size_t word) {
    auto& count = counts_[pair];
    if (count > 0) queue_.erase({-count, pair});
    count += delta;
    if (count > 0) queue_.insert({-count, pair});
    if (delta > 0) where_[pair].insert(word);
  }

  // Highest count, smallest pair on ties.
  std::optional<std::pair<SymbolPair, std::int64_t>> best() const {
    if (queue_.empty()) return std::nullopt;
    const auto& [neg, pair] = *queue_.begin();
    return std::make_pair(pair, -neg);
  }

  std::set<std::size_t> take_words(const SymbolPair& pair) {
    auto it = where_.find(pair);
    if (it == where_.end()) return {};
    auto words = std::move(it->second);
    where_.erase(it);
    return words;
  }

 private:
  std::map<SymbolPair, std::int64_t> counts_;
  std::set<std::pair<std::int64_t, SymbolPair>> queue_;
  std::map<SymbolPair, std::set<std::size_t>> where_;
};

void count_word(PairTable& table, const BpeWord& w, std::size_t index, int sign) {
  for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i)
    table.add({w.symbols[i], w.symbols[i + 1]}, sign * w.freq, index);
}

}  // namespace

void BpeModel::reindex() {
  ranks_.clear();
  for (std::size_t r = 0; r < merges.size(); ++r) ranks_.emplace(merges[r], r);
}

std::size_t BpeModel::rank(const std::string& left, const std::string& right) const {
  auto it = ranks_.find({left, right});
  return it == ranks_.end() ? merges.size() : it->second;
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write BPE model " + path.string());
  out << "#merges=" << num_merges << " end_marker=" << end_marker << '\n';
  for (const auto& [l, r] : merges) out << l << ' ' << r << '\n';
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read BPE model " + path.string());
  std::string header;
  std::getline(in, header);
  const std::string merges_key = "#merges=";
  const std::string marker_key = " end_marker=";
  const auto marker_pos = header.find(marker_key);
  if (header.rfind(merges_key, 0) != 0 || marker_pos == std::string::npos) {
    throw std::runtime_error("malformed BPE header in " + path.string());
  }
  BpeModel model;
  model.num_merges = std::stoull(header.substr(merges_key.size(), marker_pos - merges_key.size()));
  model.end_marker = header.substr(marker_pos + marker_key.size());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw std::runtime_error("malformed BPE merge line '" + line + "'");
    model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  if (model.merges.size() > model.num_merges) throw std::runtime_error("BPE model has more merges than its header");
  model.reindex();
  return model;
}

std::map<std::string, std::int64_t> word_type_counts(std::span<const ParallelCorpus> corpora, CorpusSide side) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& corpus : corpora) {
    for (const auto& pair : corpus.pairs) {
      if (side != CorpusSide::target)
        for (const auto& t : pair.source) ++counts[t];
      if (side != CorpusSide::source)
        for (const auto& t : pair.target) ++counts[t];
    }
  }
  return counts;
}

BpeModel train_bpe(const std::map<std::string, std::int64_t>& word_counts, std::size_t num_merges,
                   std::string end_marker) {
  if (num_merges < 1) throw std::invalid_argument("num_merges must be >= 1");
  if (word_counts.empty()) throw std::invalid_argument("cannot train BPE on an empty corpus");

  BpeModel model;
  model.num_merges = num_merges;
  model.end_marker = std::move(end_marker);

  std::vector<BpeWord> words;
  words.reserve(word_counts.size());
  for (const auto& [word, freq] : word_counts) words.push_back({initial_symbols(word, model.end_marker), freq});

  PairTable table;
  for (std::size_t i = 0; i < words.size(); ++i) count_word(table, words[i], i, +1);

  while (model.merges.size() < num_merges) {
    auto best = table.best();
    if (!best || best->second < 2) break;
    const SymbolPair pair = best->first;
    model.merges.push_back(pair);
    for (std::size_t index : table.take_words(pair)) {
      auto& w = words[index];
      count_word(table, w, index, -1);
      merge_pair(w.symbols, pair);
      count_word(table, w, index, +1);
    }
  }
  model.reindex();
  return model;
}

std::map<std::string, BpeModel> train_bpe(std::span<const ParallelCorpus> corpora, std::size_t num_merges,
                                          BpeMode mode) {
  std::map<std::string, BpeModel> models;
  if (mode == BpeMode::joint) {
    models.emplace("joint", train_bpe(word_type_counts(corpora, CorpusSide::both), num_merges));
    return models;
  }
  std::map<std::string, std::map<std::string, std::int64_t>> by_lang;
  for (const auto& corpus : corpora) {
    for (const auto& pair : corpus.pairs) {
      for (const auto& t : pair.source) ++by_lang[pair.lang.code()][t];
      for (const auto& t : pair.target) ++by_lang[corpus.target_lang.code()][t];
    }
  }
  for (const auto& [lang, counts] : by_lang) models.emplace(lang, train_bpe(counts, num_merges));
  return models;
}

std::vector<std::string> apply_bpe(const BpeModel& model, std::string_view word) {
  if (word.empty()) throw std::invalid_argument("apply_bpe: empty word");
  auto symbols = initial_symbols(word, model.end_marker);
  const BpeModel* indexed = &model;
  std::optional<BpeModel> local;
  if (!model.indexed()) {
    local = model;
    local->reindex();
    indexed = &*local;
  }
  while (symbols.size() > 1) {
    std::size_t best_rank = model.merges.size();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i)
      best_rank = std::min(best_rank, indexed->rank(symbols[i], symbols[i + 1]));
    if (best_rank == model.merges.size()) break;
    merge_pair(symbols, model.merges[best_rank]);
  }
  if (symbols.size() > 1 && symbols.back() == model.end_marker) {
    symbols[symbols.size() - 2] += symbols.back();
    symbols.pop_back();
  }
  return symbols;
}

std::vector<std::string> merge_bpe_pieces(const std::vector<std::string>& pieces, std::string_view end_marker) {
  std::vector<std::string> words;
  std::string current;
  for (const auto& piece : pieces) {
    if (piece.size() >= end_marker.size() && piece.compare(piece.size() - end_marker.size(), end_marker.size(),
                                                           end_marker) == 0) {
      current.append(piece, 0, piece.size() - end_marker.size());
      words.push_back(std::move(current));
      current.clear();
    } else {
      current += piece;
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

int BagOfNgrams::total() const {
  int sum = 0;
  for (const auto& [id, c] : counts) sum += c;
  return sum;
}

std::vector<std::string> enumerate_ngrams(std::string_view word, std::span<const int> n_set, bool boundary_markers) {
  auto chars = utf8::code_points(word);
  if (boundary_markers) {
    chars.insert(chars.begin(), "<");
    chars.push_back(">");
  }
  std::vector<std::string> grams;
  for (int n : n_set) {
    if (n < 1) throw std::invalid_argument("n-gram order must be >= 1");
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= chars.size(); ++i) {
      std::string gram;
      for (std::size_t k = 0; k < un; ++k) gram += chars[i + k];
      grams.push_back(std::move(gram));
    }
  }
  return grams;
}

namespace {

BagOfNgrams bag_from_ids(std::string_view word, const std::vector<std::string>& grams, const Vocabulary& vocab) {
  std::map<int, int> counts;
  for (const auto& g : grams) ++counts[vocab.id(g)];
  BagOfNgrams bag;
  bag.source_word = std::string(word);
  bag.counts.assign(counts.begin(), counts.end());
  return bag;
}

}  // namespace

BagOfNgrams char_ngrams(std::string_view word, std::span<const int> n_set, const Vocabulary& vocab,
                        bool boundary_markers) {
  if (word.empty()) throw std::invalid_argument("char_ngrams: empty word");
  return bag_from_ids(word, enumerate_ngrams(word, n_set, boundary_markers), vocab);
}

BagOfNgrams bag_of_units(std::string_view word, const std::vector<std::string>& units, const Vocabulary& vocab) {
  return bag_from_ids(word, units, vocab);
}

std::string to_string(SegmentationMode mode) {
  switch (mode) {
    case SegmentationMode::word: return "word";
    case SegmentationMode::character: return "char";
    case SegmentationMode::sub_joint: return "sub_joint";
    case SegmentationMode::sub_sep: return "sub_sep";
  }
  return "word";
}

SegmentationMode parse_segmentation_mode(const std::string& text) {
  if (text == "word") return SegmentationMode::word;
  if (text == "char") return SegmentationMode::character;
  if (text == "sub_joint") return SegmentationMode::sub_joint;
  if (text == "sub_sep") return SegmentationMode::sub_sep;
  throw std::invalid_argument("unknown segmentation mode '" + text + "'");
}

std::vector<std::string> segment(const std::vector<std::string>& sentence, SegmentationMode mode,
                                 const LanguageId& lang, const BpeModelSet* models) {
  switch (mode) {
    case SegmentationMode::word: return sentence;
    case SegmentationMode::character: {
      std::vector<std::string> out;
      for (const auto& w : sentence) {
        for (auto& c : utf8::code_points(w)) out.push_back(std::move(c));
        out.emplace_back(kCharBoundary);
      }
      return out;
    }
    case SegmentationMode::sub_joint:
    case SegmentationMode::sub_sep: {
      const std::string key = mode == SegmentationMode::sub_joint ? "joint" : lang.code();
      const BpeModel* model = nullptr;
      if (models) {
        auto it = models->find(key);
        if (it != models->end()) model = &it->second;
      }
      if (!model) {
        throw std::invalid_argument("no BPE model for language '" + lang.code() + "' in mode " + to_string(mode));
      }
      std::vector<std::string> out;
      for (const auto& w : sentence) {
        for (auto& p : apply_bpe(*model, w)) out.push_back(std::move(p));
      }
      return out;
    }
  }
  return sentence;
}

std::vector<std::string> desegment(const std::vector<std::string>& units, SegmentationMode mode,
                                   std::string_view end_marker) {
  switch (mode) {
    case SegmentationMode::word: return units;
    case SegmentationMode::character: return merge_bpe_pieces(units, kCharBoundary);
    case SegmentationMode::sub_joint:
    case SegmentationMode::sub_sep: return merge_bpe_pieces(units, end_marker);
  }
  return units;
}

}  // namespace sde
