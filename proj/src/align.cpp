#include "sde/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sde/utf8.hpp"

namespace sde {

namespace {

int intern(const std::string& word, std::vector<std::string>& words, std::unordered_map<std::string, int>& index) {
  auto [it, inserted] = index.emplace(word, static_cast<int>(words.size()));
  if (inserted) words.push_back(word);
  return it->second;
}

std::vector<int> lookup_all(const std::vector<std::string>& words, const std::unordered_map<std::string, int>& index) {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    auto it = index.find(w);
    ids.push_back(it == index.end() ? -1 : it->second);
  }
  return ids;
}

double lookup_prob(const TranslationTable& table, int target, int source) {
  if (target < 0 || source < 0) return 0.0;
  auto it = table.prob.find(TranslationTable::key(target, source));
  return it == table.prob.end() ? 0.0 : it->second;
}

std::vector<int> target_with_null(const TranslationTable& table, const SentencePair& pair) {
  std::vector<int> ids{0};
  const auto rest = lookup_all(pair.target, table.target_index);
  ids.insert(ids.end(), rest.begin(), rest.end());
  return ids;
}

// Most frequent key, smallest key on ties.
std::pair<std::string, std::int64_t> top_entry(const std::map<std::string, std::int64_t>& counts) {
  std::pair<std::string, std::int64_t> best{"", 0};
  for (const auto& [w, c] : counts)
    if (c > best.second) best = {w, c};
  return best;
}

}  // namespace

double TranslationTable::probability(const std::string& source, const std::string& target) const {
  auto s = source_index.find(source);
  if (s == source_index.end()) return 0.0;
  int t = 0;
  if (!target.empty()) {
    auto it = target_index.find(target);
    if (it == target_index.end()) return 0.0;
    t = it->second;
  }
  return lookup_prob(*this, t, s->second);
}

double TranslationTable::target_mass(const std::string& target) const {
  int t = 0;
  if (!target.empty()) {
    auto it = target_index.find(target);
    if (it == target_index.end()) return 0.0;
    t = it->second;
  }
  double sum = 0.0;
  for (std::size_t s = 0; s < source_words.size(); ++s) sum += lookup_prob(*this, t, static_cast<int>(s));
  return sum;
}

TranslationTable ibm1_init(const ParallelCorpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("ibm1: empty corpus");
  TranslationTable table;
  table.target_words.emplace_back(kNullWord);
  for (const auto& pair : corpus.pairs) {
    for (const auto& w : pair.source) intern(w, table.source_words, table.source_index);
    for (const auto& w : pair.target) intern(w, table.target_words, table.target_index);
  }
  const double uniform = 1.0 / static_cast<double>(table.source_words.size());
  for (const auto& pair : corpus.pairs) {
    const auto src = lookup_all(pair.source, table.source_index);
    const auto tgt = target_with_null(table, pair);
    for (int t : tgt)
      for (int s : src) table.prob.emplace(TranslationTable::key(t, s), uniform);
  }
  table.log_likelihood.push_back(ibm1_log_likelihood(table, corpus));
  return table;
}

void ibm1_iterate(TranslationTable& table, const ParallelCorpus& corpus) {
  std::unordered_map<std::uint64_t, double> counts;
  counts.reserve(table.prob.size());
  std::vector<double> totals(table.target_words.size(), 0.0);
  std::vector<double> column;
  for (const auto& pair : corpus.pairs) {
    const auto src = lookup_all(pair.source, table.source_index);
    const auto tgt = target_with_null(table, pair);
    column.resize(tgt.size());
    for (int s : src) {
      double denom = 0.0;
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        column[i] = lookup_prob(table, tgt[i], s);
        denom += column[i];
      }
      if (denom <= 0.0) continue;
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        const double share = column[i] / denom;
        counts[TranslationTable::key(tgt[i], s)] += share;
        totals[static_cast<std::size_t>(tgt[i])] += share;
      }
    }
  }
  for (auto& [k, p] : table.prob) {
    const auto t = static_cast<std::size_t>(k >> 32);
    auto it = counts.find(k);
    p = (it == counts.end() || totals[t] <= 0.0) ? 0.0 : it->second / totals[t];
  }
  table.log_likelihood.push_back(ibm1_log_likelihood(table, corpus));
}

TranslationTable ibm1_train(const ParallelCorpus& corpus, int iterations) {
  if (iterations < 1) throw std::invalid_argument("ibm1: iterations must be >= 1");
  auto table = ibm1_init(corpus);
  for (int i = 0; i < iterations; ++i) ibm1_iterate(table, corpus);
  return table;
}

double ibm1_log_likelihood(const TranslationTable& table, const ParallelCorpus& corpus) {
  double ll = 0.0;
  for (const auto& pair : corpus.pairs) {
    const auto src = lookup_all(pair.source, table.source_index);
    const auto tgt = target_with_null(table, pair);
    const double norm = 1.0 / static_cast<double>(tgt.size());
    for (int s : src) {
      double sum = 0.0;
      for (int t : tgt) sum += lookup_prob(table, t, s);
      ll += std::log(std::max(sum * norm, 1e-300));
    }
  }
  return ll;
}

std::vector<std::pair<int, int>> viterbi_align(const TranslationTable& table, const SentencePair& pair) {
  const auto src = lookup_all(pair.source, table.source_index);
  const auto tgt = target_with_null(table, pair);
  std::vector<std::pair<int, int>> links;
  for (std::size_t j = 0; j < src.size(); ++j) {
    std::size_t best = 0;
    double best_p = lookup_prob(table, tgt[0], src[j]);
    for (std::size_t i = 1; i < tgt.size(); ++i) {
      const double p = lookup_prob(table, tgt[i], src[j]);
      if (p > best_p) {
        best = i;
        best_p = p;
      }
    }
    if (best > 0) links.emplace_back(static_cast<int>(j), static_cast<int>(best - 1));
  }
  return links;
}

namespace {

std::map<std::string, std::map<std::string, std::int64_t>> link_counts(const TranslationTable& table,
                                                                       const ParallelCorpus& corpus) {
  std::map<std::string, std::map<std::string, std::int64_t>> counts;
  for (const auto& pair : corpus.pairs)
    for (auto [s, t] : viterbi_align(table, pair)) ++counts[pair.target[t]][pair.source[s]];
  return counts;
}

}  // namespace

std::map<std::string, std::string> target_source_links(const TranslationTable& table, const ParallelCorpus& corpus) {
  std::map<std::string, std::string> out;
  for (const auto& [target, sources] : link_counts(table, corpus)) out.emplace(target, top_entry(sources).first);
  return out;
}

BilingualDictionary extract_dictionary(const ParallelCorpus& lrl_corpus, const ParallelCorpus& hrl_corpus,
                                       std::int64_t min_count, int iterations) {
  if (lrl_corpus.target_lang != hrl_corpus.target_lang)
    throw std::invalid_argument("extract_dictionary: corpora must share the target language");
  const auto lrl_links = link_counts(ibm1_train(lrl_corpus, iterations), lrl_corpus);
  const auto hrl_links = link_counts(ibm1_train(hrl_corpus, iterations), hrl_corpus);

  std::map<std::pair<std::string, std::string>, DictionaryEntry> best;
  for (const auto& [pivot, lrl_counts] : lrl_links) {
    auto h = hrl_links.find(pivot);
    if (h == hrl_links.end()) continue;
    const auto [lrl, lc] = top_entry(lrl_counts);
    const auto [hrl, hc] = top_entry(h->second);
    const std::int64_t count = std::min(lc, hc);
    if (count < std::max<std::int64_t>(min_count, 1)) continue;
    auto [it, inserted] = best.try_emplace({lrl, hrl}, DictionaryEntry{lrl, hrl, pivot, count});
    if (!inserted && count > it->second.count) it->second = DictionaryEntry{lrl, hrl, pivot, count};
  }
  BilingualDictionary dict;
  for (auto& [k, entry] : best) dict.pairs.push_back(std::move(entry));
  return dict;
}

void BilingualDictionary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file " + path.string());
  for (const auto& e : pairs) out << e.lrl << '\t' << e.hrl << '\t' << e.pivot << '\t' << e.count << '\n';
}

BilingualDictionary BilingualDictionary::load(const std::filesystem::path& path) {
  BilingualDictionary dict;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    DictionaryEntry e;
    std::string count;
    if (!std::getline(fields, e.lrl, '\t') || !std::getline(fields, e.hrl, '\t') ||
        !std::getline(fields, e.pivot, '\t') || !std::getline(fields, count))
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields");
    e.count = std::stoll(count);
    dict.pairs.push_back(std::move(e));
  }
  return dict;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto x = utf8::code_points(a);
  const auto y = utf8::code_points(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

BucketScheme::BucketScheme(std::vector<int> bounds) : lower_bounds(std::move(bounds)) {
  if (lower_bounds.empty()) throw std::invalid_argument("bucket scheme needs at least one bound");
  if (!std::is_sorted(lower_bounds.begin(), lower_bounds.end()) ||
      std::adjacent_find(lower_bounds.begin(), lower_bounds.end()) != lower_bounds.end())
    throw std::invalid_argument("bucket bounds must be strictly increasing");
}

std::size_t BucketScheme::index_of(int value) const {
  if (value < lower_bounds.front())
    throw std::out_of_range("value " + std::to_string(value) + " below the first bucket");
  const auto it = std::upper_bound(lower_bounds.begin(), lower_bounds.end(), value);
  return static_cast<std::size_t>(it - lower_bounds.begin()) - 1;
}

std::string BucketScheme::label(std::size_t index) const {
  const int lo = lower_bounds.at(index);
  if (index + 1 == lower_bounds.size()) return std::to_string(lo) + "+";
  const int hi = lower_bounds[index + 1] - 1;
  return hi == lo ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi);
}

Histogram edit_distance_histogram(const BilingualDictionary& dict, const BucketScheme& buckets) {
  if (dict.empty()) throw std::invalid_argument("edit_distance_histogram: empty dictionary");
  std::vector<std::size_t> counts(buckets.size(), 0);
  for (const auto& e : dict.pairs) ++counts[buckets.index_of(static_cast<int>(edit_distance(e.lrl, e.hrl)))];
  Histogram out;
  for (std::size_t i = 0; i < counts.size(); ++i)
    out.emplace_back(buckets.label(i), 100.0 * static_cast<double>(counts[i]) / static_cast<double>(dict.size()));
  return out;
}

std::string histogram_csv(const Histogram& histogram) {
  std::ostringstream out;
  out << "bucket,percent\n";
  out.setf(std::ios::fixed);
  out.precision(2);
  for (const auto& [label, pct] : histogram) out << label << ',' << pct << '\n';
  return out.str();
}

}  // namespace sde
