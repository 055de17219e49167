#include <map>
#include <set>

#include "doctest.h"
#include "sde/segmentation.hpp"
#include "sde/utf8.hpp"
#include "test_util.hpp"

using namespace sde;

namespace {

using Pair = std::pair<std::string, std::string>;

// Oracle: recount every pair from scratch each round.
std::vector<Pair> naive_bpe(const std::map<std::string, std::int64_t>& words, std::size_t merges,
                            const std::string& marker) {
  std::vector<std::pair<std::vector<std::string>, std::int64_t>> state;
  for (const auto& [w, f] : words) {
    auto s = utf8::code_points(w);
    s.push_back(marker);
    state.push_back({s, f});
  }
  std::vector<Pair> out;
  while (out.size() < merges) {
    std::map<Pair, std::int64_t> counts;
    for (const auto& [s, f] : state)
      for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] += f;
    const Pair* best = nullptr;
    std::int64_t best_count = 0;
    for (const auto& [p, c] : counts)
      if (c > best_count) {
        best = &p;
        best_count = c;
      }
    if (!best || best_count < 2) break;
    const Pair chosen = *best;
    out.push_back(chosen);
    for (auto& [s, f] : state) {
      std::vector<std::string> merged;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == chosen.first && s[i + 1] == chosen.second) {
          merged.push_back(s[i] + s[i + 1]);
          ++i;
        } else {
          merged.push_back(s[i]);
        }
      }
      s = merged;
    }
  }
  return out;
}

std::map<std::string, int> substring_oracle(const std::string& word, const std::vector<int>& n_set) {
  const auto chars = utf8::code_points(word);
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    std::string gram;
    for (std::size_t len = 1; i + len <= chars.size(); ++len) {
      gram += chars[i + len - 1];
      if (std::find(n_set.begin(), n_set.end(), static_cast<int>(len)) != n_set.end()) ++counts[gram];
    }
  }
  return counts;
}

Vocabulary vocab_of(const std::vector<std::string>& tokens) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& t : tokens) ++counts[t];
  return Vocabulary::from_counts(counts, tokens.size() + 10);
}

}  // namespace

TEST_CASE("train_bpe first merge follows pair counts") {
  std::map<std::string, std::int64_t> words{{"ab", 2}, {"abc", 1}};
  // oracle pair counts: (a,b)=3, (b,§)=2, (b,c)=1, (c,§)=1
  auto model = train_bpe(words, 1, "§");
  REQUIRE(model.merges.size() == 1);
  CHECK(model.merges[0] == Pair{"a", "b"});
  CHECK(naive_bpe(words, 1, "§") == model.merges);

  CHECK_THROWS_AS(train_bpe(words, 0, "§"), std::invalid_argument);
  CHECK(train_bpe({{"a", 1}}, 10, "§").merges.empty());
  CHECK_THROWS_AS(train_bpe(std::map<std::string, std::int64_t>{}, 10), std::invalid_argument);
}

TEST_CASE("incremental BPE matches the naive oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    std::map<std::string, std::int64_t> words;
    std::uniform_int_distribution<int> freq(1, 6);
    for (int i = 0; i < 40; ++i) words[sde::testing::random_word(rng, 1, 8, "abcd")] += freq(rng);
    CHECK(train_bpe(words, 60, "</w>").merges == naive_bpe(words, 60, "</w>"));
  }
}

TEST_CASE("apply_bpe") {
  BpeModel m;
  m.end_marker = "§";
  m.merges = {{"a", "b"}};
  m.num_merges = 1;
  m.reindex();
  CHECK(apply_bpe(m, "abc") == std::vector<std::string>{"ab", "c§"});

  BpeModel empty;
  CHECK(apply_bpe(empty, "xyz") == std::vector<std::string>{"x", "y", "z</w>"});
  CHECK_THROWS_AS(apply_bpe(empty, ""), std::invalid_argument);

  // unindexed model still applies merges
  BpeModel raw;
  raw.merges = {{"x", "y"}};
  raw.num_merges = 1;
  CHECK(apply_bpe(raw, "xyz") == std::vector<std::string>{"xy", "z</w>"});
}

TEST_CASE("apply_bpe round trip and monotone fragmentation") {
  std::mt19937_64 rng(5);
  std::map<std::string, std::int64_t> words;
  for (int i = 0; i < 300; ++i) words[sde::testing::random_word(rng, 2, 9, "abcdef")] += 1 + static_cast<int>(rng() % 5);
  auto big = train_bpe(words, 200);
  for (int i = 0; i < 1000; ++i) {
    const auto w = sde::testing::random_word(rng, 1, 12, "abcdefgh");
    CHECK(merge_bpe_pieces(apply_bpe(big, w), big.end_marker) == std::vector<std::string>{w});
  }
  for (std::size_t m1 : {5, 20, 80}) {
    auto small = train_bpe(words, m1);
    for (const auto& [w, f] : words) CHECK(apply_bpe(small, w).size() >= apply_bpe(big, w).size());
  }
}

TEST_CASE("BPE determinism and file format") {
  std::map<std::string, std::int64_t> words{{"low", 5}, {"lower", 2}, {"newest", 6}, {"widest", 3}};
  auto a = train_bpe(words, 10);
  auto b = train_bpe(words, 10);
  sde::testing::TempDir dir("bpe");
  a.save(dir / "a.bpe");
  b.save(dir / "b.bpe");
  const auto text = sde::testing::read_file(dir / "a.bpe");
  CHECK(text == sde::testing::read_file(dir / "b.bpe"));
  CHECK(text.rfind("#merges=10 end_marker=</w>\n", 0) == 0);
  auto loaded = BpeModel::load(dir / "a.bpe");
  CHECK(loaded == a);
  CHECK(apply_bpe(loaded, "lowest") == apply_bpe(a, "lowest"));
  sde::testing::write_file(dir / "bad.bpe", "merges=3\n");
  CHECK_THROWS(BpeModel::load(dir / "bad.bpe"));
}

TEST_CASE("char_ngrams of puppy") {
  const std::vector<int> n{1, 2, 3, 4};
  std::vector<std::string> grams{"p", "u", "y", "pu", "up", "pp", "py", "pup", "upp", "ppy", "pupp", "uppy"};
  auto vocab = vocab_of(grams);
  auto bag = char_ngrams("puppy", n, vocab);
  CHECK(bag.counts.size() == 12);
  CHECK(bag.source_word == "puppy");
  std::map<std::string, int> by_token;
  for (auto [id, c] : bag.counts) by_token[vocab.token(id)] = c;
  CHECK(by_token["p"] == 3);
  for (const auto& g : grams)
    if (g != "p") CHECK(by_token[g] == 1);
  CHECK(by_token.count("<unk>") == 0);
}

TEST_CASE("char_ngrams edge cases") {
  auto vocab = vocab_of({"a"});
  const std::vector<int> n12{1, 2};
  auto bag = char_ngrams("a", n12, vocab);
  REQUIRE(bag.counts.size() == 1);
  CHECK(bag.counts[0] == std::pair<int, int>{vocab.id("a"), 1});

  auto oov = char_ngrams("zzz", n12, vocab);
  REQUIRE(oov.counts.size() == 1);
  CHECK(oov.counts[0] == std::pair<int, int>{Vocabulary::kUnk, 5});
  CHECK_THROWS_AS(char_ngrams("", n12, vocab), std::invalid_argument);

  auto wrapped = enumerate_ngrams("ab", std::vector<int>{2}, true);
  CHECK(wrapped == std::vector<std::string>{"<a", "ab", "b>"});
}

TEST_CASE("char_ngrams agrees with the substring oracle") {
  std::mt19937_64 rng(1234);
  const std::vector<int> n_set{1, 2, 3, 4, 5};
  for (int i = 0; i < 1000; ++i) {
    const auto w = sde::testing::random_word(rng, 1, 12, "abcxyz\xC3\xA7");
    auto oracle = substring_oracle(w, n_set);
    std::vector<std::string> tokens;
    for (const auto& [g, c] : oracle) tokens.push_back(g);
    auto vocab = vocab_of(tokens);
    auto bag = char_ngrams(w, n_set, vocab);
    std::map<std::string, int> got;
    for (auto [id, c] : bag.counts) got[vocab.token(id)] = c;
    CHECK(got == oracle);
    int expected_total = 0;
    const int len = static_cast<int>(utf8::length(w));
    for (int n : n_set) expected_total += std::max(0, len - n + 1);
    CHECK(bag.total() == expected_total);
  }
}

TEST_CASE("segment modes") {
  const LanguageId aze("aze"), tur("tur");
  std::vector<std::string> s{"a", "cute", "puppy"};
  CHECK(segment(s, SegmentationMode::word, aze) == s);
  CHECK(segment({"ab"}, SegmentationMode::character, aze) ==
        std::vector<std::string>{"a", "b", std::string(kCharBoundary)});
  CHECK(desegment(segment(s, SegmentationMode::character, aze), SegmentationMode::character) == s);

  BpeModelSet models;
  models["aze"].merges = {{"c", "u"}};
  models["aze"].num_merges = 1;
  models["aze"].reindex();
  models["tur"].num_merges = 1;
  auto aze_units = segment({"cute"}, SegmentationMode::sub_sep, aze, &models);
  auto tur_units = segment({"cute"}, SegmentationMode::sub_sep, tur, &models);
  CHECK(aze_units.size() == 3);
  CHECK(tur_units.size() == 4);
  CHECK(desegment(aze_units, SegmentationMode::sub_sep) == std::vector<std::string>{"cute"});

  try {
    segment(s, SegmentationMode::sub_joint, aze, &models);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("aze") != std::string::npos);
    CHECK(msg.find("sub_joint") != std::string::npos);
  }
  CHECK_THROWS(segment(s, SegmentationMode::sub_sep, LanguageId("bel"), &models));
}
