#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "sde/numcore/grad_check.hpp"
#include "sde/nmt/trainer.hpp"
#include "test_util.hpp"

using namespace sde;

namespace {

const LanguageId kAze("aze"), kTur("tur");

Vocabulary vocab_of(const std::vector<std::string>& words) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& w : words) ++counts[w];
  return Vocabulary::from_counts(counts, counts.size() + 4);
}

const std::vector<std::string> kSource{"ev", "su", "kitab", "gul", "yol"};
const std::vector<std::string> kTarget{"house", "water", "book", "rose", "road"};

ModelConfig tiny_config(int e = 4, int h = 5) {
  ModelConfig c;
  c.embed_dim = e;
  c.hidden_dim = h;
  return c;
}

template <typename Scalar>
Seq2SeqModel<Scalar> lookup_model(ModelConfig c = tiny_config(), std::uint64_t seed = 3) {
  return Seq2SeqModel<Scalar>::lookup(c, vocab_of(kSource), vocab_of(kTarget), seed);
}

template <typename Scalar>
Seq2SeqModel<Scalar> sde_model(ModelConfig c = tiny_config(), std::uint64_t seed = 3) {
  SdeConfig s;
  s.embed_dim = c.embed_dim;
  s.latent_size = 6;
  s.n_set = {1, 2};
  std::map<std::string, std::int64_t> grams;
  for (const auto& w : kSource)
    for (const auto& g : enumerate_ngrams(w, s.n_set)) ++grams[g];
  return Seq2SeqModel<Scalar>::sde(c, s, BagBuilder(Vocabulary::from_counts(grams, 200), s.n_set), {kAze, kTur},
                                   vocab_of(kTarget), seed);
}

Example example(const Vocabulary& tv, const std::string& src, const std::string& tgt, LanguageId lang = kAze) {
  return {split_tokens(src), lang, tv.encode(split_tokens(tgt))};
}

double loss_sum(const Seq2SeqModel<double>& m, std::vector<const Example*> batch) {
  Graph<double> g(false);
  auto out = m.loss(g, batch);
  return g.scalar(out.loss) * static_cast<double>(out.tokens);
}

using Mat = Matrix<double>;
using Row = RowVector<double>;

Row sigmoid(const Row& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

void lstm(const ParameterSet<double>& p, const std::string& pre, const Row& x, Row& h, Row& c) {
  const Index H = h.size();
  const Row z = x * p.at(pre + "W_x").value + h * p.at(pre + "W_h").value + p.at(pre + "b").value;
  const Row i = sigmoid(z.segment(0, H)), f = sigmoid(z.segment(H, H)), o = sigmoid(z.segment(3 * H, H));
  const Row g = z.segment(2 * H, H).array().tanh().matrix();
  c = (f.array() * c.array() + i.array() * g.array()).matrix();
  h = (o.array() * c.array().tanh()).matrix();
}

// Straight-line recomputation of the teacher-forced loss, one sentence at a time.
double oracle_loss(const Seq2SeqModel<double>& m, const std::vector<Example>& batch) {
  const auto& p = m.parameters();
  const Index H = m.hidden();
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& ex : batch) {
    Row h = Row::Zero(H), c = Row::Zero(H);
    std::vector<Row> keys;
    for (const auto& w : ex.source) {
      lstm(p, "enc.", p.at("src.embed").value.row(m.source_vocab()->id(w)), h, c);
      keys.push_back(h);
    }
    Row feed = Row::Zero(H);
    int prev = Vocabulary::kBos;
    auto gold = ex.target;
    gold.push_back(Vocabulary::kEos);
    for (int y : gold) {
      Row x(p.at("tgt.embed").value.cols() + H);
      x << p.at("tgt.embed").value.row(prev), feed;
      lstm(p, "dec.", x, h, c);
      Eigen::ArrayXd s(static_cast<Index>(keys.size()));
      for (std::size_t t = 0; t < keys.size(); ++t) s(static_cast<Index>(t)) = h.dot(keys[t]);
      s = (s - s.maxCoeff()).exp();
      s /= s.sum();
      Row ctx = Row::Zero(H);
      for (std::size_t t = 0; t < keys.size(); ++t) ctx += s(static_cast<Index>(t)) * keys[t];
      Row cat(2 * H);
      cat << ctx, h;
      feed = (cat * p.at("att.W").value).array().tanh().matrix();
      const Row logits = feed * p.at("out.W").value + p.at("out.b").value;
      const double mx = logits.maxCoeff();
      total += mx + std::log((logits.array() - mx).exp().sum()) - logits(y);
      prev = y;
      ++tokens;
    }
  }
  return total / static_cast<double>(tokens);
}

}  // namespace

TEST_CASE("initial loss is close to uniform") {
  auto m = lookup_model<double>(tiny_config(8, 16));
  const auto& tv = m.target_vocab();
  std::vector<Example> data{example(tv, "ev su", "house water"), example(tv, "kitab", "book")};
  Graph<double> g(false);
  std::vector<const Example*> batch{&data[0], &data[1]};
  auto out = m.loss(g, batch);
  CHECK(out.tokens == 5);
  CHECK(std::abs(g.scalar(out.loss) - std::log(static_cast<double>(tv.size()))) < 0.05);
}

TEST_CASE("loss matches the straight-line oracle") {
  auto m = lookup_model<double>();
  const auto& tv = m.target_vocab();
  std::vector<Example> data{example(tv, "ev su gul", "house water"), example(tv, "kitab", "book rose road")};
  Graph<double> g(false);
  std::vector<const Example*> batch{&data[0], &data[1]};
  CHECK(std::abs(g.scalar(m.loss(g, batch).loss) - oracle_loss(m, data)) < 1e-12);
}

TEST_CASE("padding does not leak between sentences") {
  for (bool sde : {false, true}) {
    auto m = sde ? sde_model<double>() : lookup_model<double>();
    const auto& tv = m.target_vocab();
    Example a = example(tv, "ev", "house"), b = example(tv, "kitab su gul yol", "book water rose road", kTur);
    const double joint = loss_sum(m, {&a, &b});
    const double apart = loss_sum(m, {&a}) + loss_sum(m, {&b});
    CHECK(std::abs(joint - apart) < 1e-10);
  }
}

TEST_CASE("model gradients") {
  struct Case {
    const char* name;
    bool sde;
    bool bidirectional;
  };
  for (auto cs : {Case{"lookup", false, false}, Case{"sde", true, false}, Case{"bidirectional", false, true}}) {
    CAPTURE(cs.name);
    auto cfg = tiny_config(3, 3);
    cfg.bidirectional = cs.bidirectional;
    cfg.init_scale = 0.8;
    auto m = cs.sde ? sde_model<double>(cfg) : lookup_model<double>(cfg);
    const auto& tv = m.target_vocab();
    std::vector<Example> data{example(tv, "ev su", "house water rose"), example(tv, "kitab gul yol", "book", kTur)};
    std::vector<const Example*> batch{&data[0], &data[1]};
    std::vector<Parameter<double>*> params;
    for (const auto& p : m.parameters()) params.push_back(p.get());
    auto r = grad_check<double>([&](Graph<double>& g) { return m.loss(g, batch).loss; }, params, 1e-5, 40);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("attention rows are distributions over real positions") {
  auto m = lookup_model<double>();
  const auto& tv = m.target_vocab();
  Example a = example(tv, "ev", "house"), b = example(tv, "kitab su gul", "book");
  std::vector<const Example*> batch{&a, &b};
  Graph<double> g(false);
  auto enc = m.encode(g, batch);
  auto state = m.initial_state(g, enc);
  std::vector<int> prev{Vocabulary::kBos, Vocabulary::kBos};
  auto step = m.decode_step(g, enc.keys, enc.valid, state, m.embed_target(g, prev));
  CHECK(step.attention.rows() == 2);
  CHECK(step.attention.cols() == 3);
  for (Index r = 0; r < 2; ++r) CHECK(std::abs(step.attention.row(r).sum() - 1.0) < 1e-12);
  CHECK(step.attention(0, 1) == 0.0);
  CHECK(step.attention(0, 2) == 0.0);
}

TEST_CASE("beam search never scores below greedy") {
  auto m = lookup_model<double>(tiny_config(4, 8), 11);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    std::vector<std::string> src;
    for (int j = 0; j < 1 + i % 4; ++j) src.push_back(kSource[rng() % kSource.size()]);
    const auto greedy = m.translate(src, kAze, 1);
    const auto beam = m.translate(src, kAze, 5);
    CHECK(greedy.tokens.size() <= Seq2SeqModel<double>::default_max_length(src.size()));
    if (greedy.complete) CHECK(beam.complete);
    if (beam.complete == greedy.complete) CHECK(beam.log_prob >= greedy.log_prob - 1e-12);
    Example ex{src, kAze, {}};
    const Example* one[] = {&ex};
    CHECK(m.greedy(one).front().tokens == greedy.tokens);
  }
  CHECK_THROWS_AS(m.translate({"ev"}, kAze, 0), std::invalid_argument);
}

TEST_CASE("patience and learning-rate decay") {
  auto m = lookup_model<float>();
  const auto& tv = m.target_vocab();
  std::vector<Example> data{example(tv, "ev", "house"), example(tv, "su", "water")};
  TrainConfig cfg;
  cfg.eval_every = 1;
  cfg.batch_words = 1;
  cfg.patience = 5;
  int calls = 0;
  std::vector<Matrix<float>> at_best;
  auto worsening = [&](const Seq2SeqModel<float>& model) {
    ++calls;
    if (calls == 2) at_best = model.parameters().snapshot();
    return 50.0 - calls * (calls == 1 ? 10.0 : 1.0) + (calls == 2 ? 20.0 : 0.0);
  };
  std::ostringstream log;
  auto r = train_model<float>(m, cfg, data, worsening, &log);
  // dev BLEU 40, 68, 47, 46, 45, 44, 43: best at eval 2, then five worse evals
  CHECK(r.early_stopped);
  CHECK(r.log.size() == 7);
  CHECK(r.best_step == 2);
  CHECK(r.steps == 7);
  CHECK(r.log[4].learning_rate == doctest::Approx(0.00064));
  CHECK(r.final_learning_rate == doctest::Approx(0.001 * std::pow(0.8, 5)));
  const auto now = m.parameters().snapshot();
  for (std::size_t i = 0; i < now.size(); ++i) CHECK(now[i] == at_best[i]);

  std::istringstream lines(log.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "1\t40.0000\t0.001\t" + line.substr(line.rfind('\t') + 1));
  CHECK(std::count(line.begin(), line.end(), '\t') == 3);
}

TEST_CASE("training stops at max_steps with a final evaluation") {
  auto m = lookup_model<float>();
  const auto& tv = m.target_vocab();
  std::vector<Example> data{example(tv, "ev", "house"), example(tv, "su", "water")};
  TrainConfig cfg;
  cfg.eval_every = 4;
  cfg.max_steps = 10;
  cfg.batch_words = 1;
  auto r = train_model<float>(m, cfg, data, [](const Seq2SeqModel<float>&) { return 1.0; });
  CHECK(r.steps == 10);
  REQUIRE(r.log.size() == 3);
  CHECK(r.log.back().step == 10);
  CHECK_FALSE(r.early_stopped);
}

TEST_CASE("non-finite loss is reported") {
  auto m = lookup_model<float>();
  const auto& tv = m.target_vocab();
  std::vector<Example> data{example(tv, "ev", "house")};
  m.parameters().at("out.b").value(0, 4) = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.max_steps = 3;
  CHECK_THROWS_AS(train_model<float>(m, cfg, data, [](const Seq2SeqModel<float>&) { return 0.0; }), std::runtime_error);
}

TEST_CASE("copy task overfits and training is deterministic") {
  std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  std::mt19937_64 rng(4);
  ParallelCorpus corpus;
  for (int i = 0; i < 12; ++i) {
    SentencePair p;
    p.lang = kAze;
    for (int j = 0; j < 3 + i % 3; ++j) p.source.push_back(words[rng() % words.size()]);
    p.target = p.source;
    corpus.pairs.push_back(p);
  }
  auto run = [&](std::ostream& log) {
    auto m = Seq2SeqModel<float>::lookup(tiny_config(16, 32), vocab_of(words), vocab_of(words), 5);
    const auto data = make_examples(corpus, m.target_vocab());
    std::vector<Sentence> refs;
    for (const auto& p : corpus.pairs) refs.push_back(p.target);
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.dropout = 0.0;
    cfg.batch_words = 60;
    cfg.eval_every = 100;
    cfg.max_steps = 600;
    auto r = train_model<float>(m, cfg, data, [&](const Seq2SeqModel<float>& model) { return dev_bleu(model, data, refs); }, &log);
    return std::make_pair(r, m.parameters().snapshot());
  };
  std::ostringstream log1, log2;
  auto [r1, p1] = run(log1);
  auto [r2, p2] = run(log2);
  CHECK(r1.best_bleu >= 95.0);
  CHECK(log1.str() == log2.str());
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i] == p2[i]);
}
