#include "sde/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sde {

Vocabulary::Vocabulary() {
  for (auto special : kSpecialTokens) push(std::string(special), 0);
}

void Vocabulary::push(std::string token, std::int64_t freq) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
  freqs_.push_back(freq);
}

std::vector<std::pair<std::string, std::int64_t>> rank_counts(const std::map<std::string, std::int64_t>& counts) {
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already byte-ordered, so a stable sort on count
  // keeps the lexicographic tie-break.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

Vocabulary Vocabulary::from_counts(const std::map<std::string, std::int64_t>& counts, std::size_t max_size) {
  if (max_size < kNumSpecials + 1) {
    throw std::invalid_argument("vocabulary max_size must be >= 5, got " + std::to_string(max_size));
  }
  Vocabulary vocab;
  for (auto& [token, freq] : rank_counts(counts)) {
    if (vocab.size() >= max_size) break;
    if (vocab.contains(token)) {
      // A corpus token spelled like a special folds into it.
      vocab.freqs_[vocab.id(token)] += freq;
      continue;
    }
    vocab.push(token, freq);
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(tokens_.size()) + ")");
  }
  return tokens_[id];
}

std::int64_t Vocabulary::frequency(int id) const {
  token(id);
  return freqs_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids, bool strip_specials) const {
  std::vector<std::string> out;
  for (int i : ids) {
    if (strip_specials && i != kUnk && i < kNumSpecials) continue;
    out.push_back(token(i));
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << i << '\t' << freqs_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw std::runtime_error("malformed vocabulary line " + std::to_string(lineno + 1) + " in " + path.string());
    }
    std::string token = line.substr(0, t1);
    const auto id = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
    const auto freq = std::stoll(line.substr(t2 + 1));
    if (static_cast<std::size_t>(id) != lineno) {
      throw std::runtime_error("non-contiguous vocabulary id " + std::to_string(id) + " in " + path.string());
    }
    if (lineno < kNumSpecials) {
      if (token != kSpecialTokens[lineno]) throw std::runtime_error("vocabulary specials out of order in " + path.string());
      vocab.freqs_[lineno] = freq;
    } else {
      vocab.push(std::move(token), freq);
    }
    ++lineno;
  }
  return vocab;
}

}  // namespace sde
