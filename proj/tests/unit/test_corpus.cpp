#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "sde/corpus.hpp"
#include "sde/segmentation.hpp"
#include "test_util.hpp"

using namespace sde;
using sde::testing::TempDir;
using sde::testing::write_file;

namespace {

ParallelCorpus corpus_of(const std::vector<std::pair<std::string, std::string>>& lines, const std::string& lang,
                         Split split = Split::train) {
  ParallelCorpus c;
  c.split = split;
  for (const auto& [s, t] : lines) c.pairs.push_back({split_tokens(s), split_tokens(t), LanguageId(lang)});
  return c;
}

}  // namespace

TEST_CASE("load_parallel") {
  TempDir dir("corpus");
  write_file(dir / "a.src", "x y\nz\nw w w\n");
  write_file(dir / "a.tgt", "1\n2 3\n4\n");
  auto c = load_parallel(dir / "a.src", dir / "a.tgt", LanguageId("aze"), Split::dev);
  CHECK(c.size() == 3);
  CHECK(c.split == Split::dev);
  CHECK(c.pairs[2].source == std::vector<std::string>{"w", "w", "w"});
  CHECK(c.pairs[1].lang.code() == "aze");

  write_file(dir / "b.src", "1\n2\n3\n4\n5\n");
  write_file(dir / "b.tgt", "1\n2\n3\n4\n");
  try {
    load_parallel(dir / "b.src", dir / "b.tgt", LanguageId("aze"), Split::train);
    FAIL("expected mismatch");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line count mismatch 5 vs 4") != std::string::npos);
  }

  write_file(dir / "c.src", "a\n\nb\n");
  write_file(dir / "c.tgt", "a\nb\n\n");
  auto blanks = load_parallel(dir / "c.src", dir / "c.tgt", LanguageId("tur"), Split::train);
  CHECK(blanks.size() == 1);
  CHECK(blanks.dropped_blank == 2);

  CHECK_THROWS_AS(load_parallel(dir / "missing", dir / "a.tgt", LanguageId("x"), Split::train), std::runtime_error);
  CHECK_THROWS_AS(LanguageId(""), std::invalid_argument);
}

TEST_CASE("build_word_vocab") {
  std::vector<ParallelCorpus> cs{corpus_of({{"a a b", "a"}}, "aze")};
  auto v = build_word_vocab(cs, 6, CorpusSide::source);
  CHECK(v.size() == 6);
  CHECK(v.token(0) == "<unk>");
  CHECK(v.token(3) == "</s>");
  CHECK(v.token(4) == "a");
  CHECK(v.token(5) == "b");
  CHECK(v.frequency(4) == 2);
  CHECK(v.id("c") == Vocabulary::kUnk);

  std::vector<ParallelCorpus> none;
  CHECK(build_word_vocab(none, 100).size() == 4);
  CHECK_THROWS_AS(build_word_vocab(cs, 4), std::invalid_argument);

  // equal counts fall back to byte order
  std::vector<ParallelCorpus> ties{corpus_of({{"c b a", "z"}}, "aze")};
  auto t = build_word_vocab(ties, 6, CorpusSide::source);
  CHECK(t.token(4) == "a");
  CHECK(t.token(5) == "b");
}

TEST_CASE("vocabulary properties on random corpora") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::string line;
    for (int i = 0; i < 200; ++i) line += sde::testing::random_word(rng, 1, 3, "abcde") + " ";
    std::vector<ParallelCorpus> cs{corpus_of({{line, "x"}}, "aze")};
    std::uniform_int_distribution<std::size_t> sz(5, 60);
    auto m1 = sz(rng), m2 = sz(rng);
    if (m1 > m2) std::swap(m1, m2);
    auto small = build_word_vocab(cs, m1, CorpusSide::source);
    auto large = build_word_vocab(cs, m2, CorpusSide::source);
    CHECK(small.size() <= m1);
    for (std::size_t id = 0; id < small.size(); ++id) {
      CHECK(large.contains(small.token(static_cast<int>(id))));
      CHECK(small.id(small.token(static_cast<int>(id))) == static_cast<int>(id));
    }
  }
}

TEST_CASE("vocabulary file format") {
  std::vector<ParallelCorpus> cs{corpus_of({{"a a b", "a"}}, "aze")};
  auto v = build_word_vocab(cs, 10, CorpusSide::source);
  TempDir dir("vocab");
  v.save(dir / "v.tsv");
  CHECK(sde::testing::read_file(dir / "v.tsv") == "<unk>\t0\t0\n<pad>\t1\t0\n<s>\t2\t0\n</s>\t3\t0\na\t4\t2\nb\t5\t1\n");
  CHECK(Vocabulary::load(dir / "v.tsv") == v);
  write_file(dir / "bad.tsv", "<unk>\t0\t0\n<pad>\t2\t0\n");
  CHECK_THROWS(Vocabulary::load(dir / "bad.tsv"));
}

TEST_CASE("build_ngram_vocab") {
  std::vector<ParallelCorpus> single{corpus_of({{"a", "x"}}, "aze")};
  NgramVocabOptions ones;
  ones.n_set = {1};
  auto v = build_ngram_vocab(single, 100, ones);
  CHECK(v.size() == 5);
  CHECK(v.token(4) == "a");

  std::vector<ParallelCorpus> puppy{corpus_of({{"puppy", "x"}}, "aze")};
  NgramVocabOptions four;
  four.n_set = {1, 2, 3, 4};
  auto pv = build_ngram_vocab(puppy, 1000, four);
  CHECK(pv.size() == 4 + 12);
  for (const char* g : {"p", "u", "y", "pu", "up", "pp", "py", "pup", "upp", "ppy", "pupp", "uppy"}) CHECK(pv.contains(g));
  CHECK(pv.frequency(pv.id("p")) == 3);

  // 20 distinct unigrams, truncated to 8 entries including specials
  std::string letters = "abcdefghijklmnopqrst";
  std::string sentence;
  for (char c : letters) sentence += std::string(1, c) + " ";
  std::vector<ParallelCorpus> twenty{corpus_of({{sentence, "x"}}, "aze")};
  auto brute = std::set<std::string>();
  for (char c : letters) brute.insert(std::string(1, c));
  REQUIRE(brute.size() == 20);
  CHECK(build_ngram_vocab(twenty, 8, ones).size() == 8);

  CHECK_THROWS_AS(build_ngram_vocab(twenty, 8, NgramVocabOptions{{}, NgramVocabMode::concatenated, false}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_ngram_vocab(twenty, 8, NgramVocabOptions{{0}, NgramVocabMode::concatenated, false}),
                  std::invalid_argument);
}

TEST_CASE("ngram vocab covers every n-gram when unbounded") {
  std::mt19937_64 rng(4);
  std::vector<int> n_set{1, 2, 3};
  for (int trial = 0; trial < 30; ++trial) {
    const auto w = sde::testing::random_word(rng, 1, 9);
    std::vector<ParallelCorpus> cs{corpus_of({{w, "x"}}, "aze")};
    auto v = build_ngram_vocab(cs, 100000, NgramVocabOptions{n_set, NgramVocabMode::concatenated, false});
    for (const auto& g : enumerate_ngrams(w, n_set)) CHECK(v.contains(g));
  }
}

TEST_CASE("per-language n-gram quota") {
  std::vector<ParallelCorpus> cs{corpus_of({{"aaaa bbbb", "x"}}, "aze"), corpus_of({{"cccc dd", "x"}}, "tur")};
  NgramVocabOptions opts;
  opts.n_set = {1};
  opts.mode = NgramVocabMode::per_language;
  // 2 n-grams per language
  auto v = build_ngram_vocab(cs, 8, opts);
  CHECK(v.size() == 8);
  for (const char* g : {"a", "b", "c", "d"}) CHECK(v.contains(g));
  // 1 per language: aze keeps "a" (tie with b broken by bytes), tur keeps "c"
  auto tight = build_ngram_vocab(cs, 6, opts);
  CHECK(tight.size() == 6);
  CHECK(tight.contains("a"));
  CHECK(tight.contains("c"));
  opts.mode = NgramVocabMode::concatenated;
  auto concat = build_ngram_vocab(cs, 6, opts);
  CHECK(concat.contains("a"));
  CHECK(concat.contains("b"));
}

TEST_CASE("batch_iterator") {
  std::vector<std::size_t> lengths{600, 600, 600};
  auto batches = batch_iterator(lengths, 1500, 7);
  REQUIRE(batches.size() == 2);
  std::multiset<std::size_t> sizes{batches[0].size(), batches[1].size()};
  CHECK(sizes == std::multiset<std::size_t>{1, 2});

  std::vector<std::size_t> one{12};
  CHECK(batch_iterator(one, 12, 3).size() == 1);

  std::vector<std::size_t> too_long{3, 20, 4};
  try {
    batch_iterator(too_long, 10, 1);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("sentence 1") != std::string::npos);
  }
}

TEST_CASE("batch_iterator partitions and is deterministic") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> lengths(300);
    for (auto& l : lengths) l = len(rng);
    const std::uint64_t seed = rng();
    auto a = batch_iterator(lengths, 100, seed, 4);
    auto b = batch_iterator(lengths, 100, seed, 4);
    CHECK(a == b);
    std::vector<std::size_t> seen;
    for (const auto& batch : a) {
      std::size_t words = 0;
      for (auto i : batch) words += lengths[i];
      CHECK(words <= 100);
      seen.insert(seen.end(), batch.begin(), batch.end());
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(lengths.size());
    std::iota(all.begin(), all.end(), 0);
    CHECK(seen == all);
  }
}

TEST_CASE("corpus_stats") {
  std::vector<ParallelCorpus> none;
  CHECK(corpus_stats(none).per_language.empty());
  CHECK(corpus_stats(none).at("aze", Split::train).sentences == 0);

  std::vector<ParallelCorpus> cs{corpus_of({{"a b", "x"}, {"a", "y y"}}, "aze"),
                                 corpus_of({{"c", "x"}}, "aze", Split::dev)};
  auto s = corpus_stats(cs);
  CHECK(s.at("aze", Split::train).sentences == 2);
  CHECK(s.at("aze", Split::train).source_tokens == 3);
  CHECK(s.at("aze", Split::train).source_types == 2);
  CHECK(s.at("aze", Split::train).target_types == 2);
  CHECK(s.at("aze", Split::dev).sentences == 1);
  CHECK(s.to_tsv().find("aze\tdev\t1\t1\t1\t1\t1") != std::string::npos);
}

TEST_CASE("multi_source_setup") {
  auto lrl = corpus_of({{"a", "x"}}, "aze");
  std::vector<ParallelCorpus> hrl{corpus_of({{"b", "y"}, {"c", "z"}}, "tur")};
  auto joined = multi_source_setup(lrl, hrl);
  CHECK(joined.size() == 3);
  std::vector<ParallelCorpus> all{joined};
  CHECK(source_languages(all).size() == 2);

  hrl[0].target_lang = LanguageId("deu");
  CHECK_THROWS_AS(multi_source_setup(lrl, hrl), std::invalid_argument);
}
