#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "sde/numcore/adam.hpp"
#include "sde/numcore/checkpoint.hpp"
#include "sde/numcore/grad_check.hpp"
#include "sde/numcore/ops.hpp"

using namespace sde;
using Mat = Matrix<double>;

namespace {

Parameter<double>& random_param(ParameterSet<double>& set, const std::string& name, Index r, Index c,
                                std::mt19937_64& rng, double scale = 1.0) {
  return set.add_uniform(name, r, c, rng, scale);
}

std::vector<Parameter<double>*> all_params(ParameterSet<double>& set) {
  std::vector<Parameter<double>*> out;
  for (std::size_t i = 0; i < set.count(); ++i) out.push_back(&set[i]);
  return out;
}

Mat random_weights(Index r, Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Mat w(r, c);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = d(rng);
  return w;
}

}  // namespace

TEST_CASE("matmul forward values") {
  Graph<double> g;
  Mat a(2, 2);
  a << 1, 2, 3, 4;
  Mat b(2, 1);
  b << 1, 1;
  auto c = ops::matmul(g, g.constant(a), g.constant(b));
  CHECK(g.value(c)(0, 0) == 3.0);
  CHECK(g.value(c)(1, 0) == 7.0);

  auto x = g.constant(a);
  auto id = ops::matmul(g, g.constant(Mat::Identity(2, 2)), x);
  CHECK(g.value(id) == a);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph<double> g;
  auto a = g.constant(Mat::Zero(2, 3));
  auto b = g.constant(Mat::Zero(2, 3));
  try {
    ops::matmul(g, a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax rows") {
  Graph<double> g;
  Mat x(1, 2);
  x << 0.0, std::log(3.0);
  auto y = ops::softmax_rows(g, g.constant(x));
  CHECK(g.value(y)(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(g.value(y)(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Mat r = random_weights(4, 7, rng) * 20.0;
    auto s = ops::softmax_rows(g, g.constant(r));
    const auto& S = g.value(s);
    for (Index i = 0; i < S.rows(); ++i) CHECK(std::abs(S.row(i).sum() - 1.0) < 1e-6);
    CHECK((S.array() > 0.0).all());
    CHECK((S.array() < 1.0).all());
  }
}

TEST_CASE("tanh range") {
  Graph<double> g;
  std::mt19937_64 rng(5);
  Mat x = random_weights(10, 10, rng) * 5.0;
  auto y = ops::tanh(g, g.constant(x));
  CHECK((g.value(y).array().abs() < 1.0).all());
}

TEST_CASE("dropout") {
  Graph<double> g;
  std::mt19937_64 rng(1);
  Mat x = random_weights(6, 6, rng);
  auto v = g.constant(x);
  CHECK(g.value(ops::dropout(g, v, 0.0, rng, true)) == x);
  CHECK(g.value(ops::dropout(g, v, 0.5, rng, false)) == x);
  CHECK_THROWS_AS(ops::dropout(g, v, 1.0, rng, true), std::invalid_argument);
  CHECK_THROWS_AS(ops::dropout(g, v, -0.1, rng, true), std::invalid_argument);

  auto d = ops::dropout(g, v, 0.3, rng, true);
  const auto& D = g.value(d);
  for (Index i = 0; i < D.size(); ++i) {
    const double out = D.data()[i];
    CHECK((out == 0.0 || std::abs(out - x.data()[i] / 0.7) < 1e-12));
  }
}

TEST_CASE("cross entropy tends to zero as the correct logit dominates") {
  double previous = 1e9;
  for (double gap : {1.0, 5.0, 10.0, 30.0}) {
    Graph<double> g;
    Mat logits = Mat::Zero(2, 4);
    logits(0, 1) = gap;
    logits(1, 3) = gap;
    const double loss = g.scalar(ops::cross_entropy(g, g.constant(logits), {1, 3}));
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK(previous < 1e-12);

  Graph<double> g;
  CHECK(g.scalar(ops::cross_entropy(g, g.constant(Mat::Zero(1, 8)), {2})) == doctest::Approx(std::log(8.0)));
  CHECK_THROWS_AS(ops::cross_entropy(g, g.constant(Mat::Zero(1, 8)), {8}), std::out_of_range);
}

TEST_CASE("embedding backward touches only referenced rows") {
  ParameterSet<double> set;
  std::mt19937_64 rng(2);
  auto& table = random_param(set, "table", 10, 4, rng);
  Graph<double> g;
  std::vector<int> ids{2, 7, 2};
  auto e = ops::embedding_rows(g, table, ids);
  g.backward(ops::weighted_sum(g, e, random_weights(3, 4, rng)));
  for (Index r = 0; r < 10; ++r) {
    const bool referenced = r == 2 || r == 7;
    CHECK((table.grad.row(r).cwiseAbs().sum() > 0.0) == referenced);
  }
  std::vector<int> bad{10};
  CHECK_THROWS_AS(ops::embedding_rows(g, table, bad), std::out_of_range);
}

TEST_CASE("grad_check of tanh at zero") {
  ParameterSet<double> set;
  auto& x = set.add("x", 1, 1);
  std::vector<Parameter<double>*> ps{&x};
  auto result = grad_check<double>([&](Graph<double>& g) { return ops::sum_all(g, ops::tanh(g, g.parameter(x))); }, ps);
  CHECK(result.max_rel_error < 1e-6);
  Graph<double> g;
  auto root = ops::sum_all(g, ops::tanh(g, g.parameter(x)));
  g.backward(root);
  CHECK(x.grad(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("every differentiable op passes grad_check") {
  std::mt19937_64 rng(11);
  ParameterSet<double> set;
  auto& a = random_param(set, "a", 3, 4, rng);
  auto& b = random_param(set, "b", 4, 5, rng);
  auto& c = random_param(set, "c", 3, 4, rng);
  auto& bias = random_param(set, "bias", 1, 4, rng);
  auto& table = random_param(set, "table", 6, 4, rng);
  auto ps = all_params(set);

  const Mat w35 = random_weights(3, 5, rng);
  const Mat w34 = random_weights(3, 4, rng);
  const Mat w38 = random_weights(3, 8, rng);
  const Mat w44 = random_weights(4, 4, rng);
  const Mat w62 = random_weights(6, 2, rng);
  const Mat w24 = random_weights(2, 4, rng);
  const Mat w33 = random_weights(3, 3, rng);
  const Mat w64 = random_weights(6, 4, rng);

  std::vector<std::pair<const char*, std::function<Var(Graph<double>&)>>> cases = {
      {"matmul", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::matmul(g, g.parameter(a), g.parameter(b)), w35); }},
      {"matmul_nt", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::matmul_nt(g, g.parameter(a), g.parameter(c)), w33); }},
      {"add", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::add(g, g.parameter(a), g.parameter(c)), w34); }},
      {"add_bias", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::add_bias(g, g.parameter(a), g.parameter(bias)), w34); }},
      {"mul", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::mul(g, g.parameter(a), g.parameter(c)), w34); }},
      {"scale", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::scale(g, g.parameter(a), 0.37), w34); }},
      {"tanh", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::tanh(g, g.parameter(a)), w34); }},
      {"sigmoid", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::sigmoid(g, g.parameter(a)), w34); }},
      {"softmax_rows", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::softmax_rows(g, g.parameter(a)), w34); }},
      {"dropout", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::dropout(g, g.parameter(a), 0.3, std::uint64_t{9}, true), w34); }},
      {"embedding_rows", [&](Graph<double>& g) {
         std::vector<int> ids{1, 4, 1};
         return ops::weighted_sum(g, ops::embedding_rows(g, table, ids), w34);
       }},
      {"bag_embed", [&](Graph<double>& g) {
         std::vector<BagOfNgrams> bags(2);
         bags[0].counts = {{0, 2}, {3, 1}};
         bags[1].counts = {{5, 3}};
         return ops::weighted_sum(g, ops::bag_embed<double>(g, table, bags), w24);
       }},
      {"gather_rows", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::gather_rows(g, g.parameter(a), {2, -1, 0, 2}), w44); }},
      {"concat_cols", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::concat_cols(g, {g.parameter(a), g.parameter(c)}), w38); }},
      {"concat_rows", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::concat_rows(g, {g.parameter(table)}), w64); }},
      {"slice_cols", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::slice_cols(g, g.parameter(b), 1, 2), Mat(w62.topRows(4))); }},
      {"blend", [&](Graph<double>& g) { return ops::weighted_sum(g, ops::blend(g, {true, false, true}, g.parameter(a), g.parameter(c)), w34); }},
      {"dot_attention", [&](Graph<double>& g) {
         Mat valid = Mat::Ones(3, 2);
         valid(1, 1) = 0;
         auto r = ops::dot_attention(g, g.parameter(a), {g.parameter(c), ops::tanh(g, g.parameter(a))}, valid);
         return ops::weighted_sum(g, r.context, w34);
       }},
      {"cross_entropy", [&](Graph<double>& g) { return ops::cross_entropy(g, g.parameter(a), {0, 3, 2}); }},
      {"cross_entropy_masked", [&](Graph<double>& g) { return ops::cross_entropy_masked(g, g.parameter(a), {0, 1, 2}, 1, 2.0); }},
      {"softmax+cross_entropy", [&](Graph<double>& g) {
         auto s = ops::softmax_rows(g, ops::matmul(g, g.parameter(a), g.parameter(b)));
         return ops::cross_entropy(g, s, {4, 0, 1});
       }},
  };
  for (auto& [name, fn] : cases) {
    auto result = grad_check<double>(fn, ps);
    INFO(name << " worst " << result.worst_parameter << "[" << result.worst_index << "]");
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("dot_attention weights are a distribution that respects the mask") {
  Graph<double> g;
  std::mt19937_64 rng(4);
  Mat valid = Mat::Ones(2, 3);
  valid(0, 2) = 0;
  auto q = g.constant(random_weights(2, 5, rng));
  std::vector<Var> keys;
  for (int t = 0; t < 3; ++t) keys.push_back(g.constant(random_weights(2, 5, rng)));
  auto r = ops::dot_attention(g, q, keys, valid);
  CHECK(r.weights(0, 2) == 0.0);
  for (Index b = 0; b < 2; ++b) CHECK(std::abs(r.weights.row(b).sum() - 1.0) < 1e-12);
}

TEST_CASE("adam step") {
  ParameterSet<float> set;
  auto& p = set.add("p", 1, 3);
  p.value << 1.0f, 2.0f, 3.0f;
  p.grad << 0.5f, -2.0f, 0.0f;
  AdamState<float> state;
  adam_step(set, state);
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.001).epsilon(1e-4));
  CHECK(p.value(0, 1) == doctest::Approx(2.0 + 0.001).epsilon(1e-4));
  CHECK(p.value(0, 2) == 3.0f);
  CHECK(p.grad.isZero());
  CHECK(state.step == 1);

  ParameterSet<float> fresh;
  auto& q = fresh.add("q", 2, 2);
  q.value.setConstant(1.5f);
  AdamState<float> s2;
  adam_step(fresh, s2);
  CHECK((q.value.array() == 1.5f).all());

  AdamState<double> s3;
  s3.decay(0.8);
  CHECK(s3.learning_rate == doctest::Approx(0.0008).epsilon(1e-15));
  s3.decay(0.8);
  CHECK(s3.learning_rate == doctest::Approx(0.00064).epsilon(1e-15));
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(8);
  ParameterSet<float> a;
  a.add_uniform("w", 3, 4, rng);
  a.add_uniform("b", 1, 4, rng);
  for (auto& p : a) p->grad.setConstant(0.1f);
  AdamState<float> opt;
  adam_step(a, opt);
  opt.learning_rate = 0.0008;
  const auto path = std::filesystem::temp_directory_path() / "sde_test_ckpt.bin";
  save_checkpoint(path, a, &opt);

  ParameterSet<float> b;
  b.add("w", 3, 4);
  b.add("b", 1, 4);
  AdamState<float> opt2;
  load_checkpoint(path, b, &opt2);
  CHECK(b.at("w").value == a.at("w").value);
  CHECK(b.at("b").value == a.at("b").value);
  CHECK(opt2.step == 1);
  CHECK(opt2.learning_rate == 0.0008);
  REQUIRE(opt2.second_moment.size() == 2);
  CHECK(opt2.second_moment[0] == opt.second_moment[0]);

  ParameterSet<float> wrong;
  wrong.add("w", 4, 3);
  wrong.add("b", 1, 4);
  CHECK_THROWS(load_checkpoint(path, wrong));
  ParameterSet<double> wide;
  wide.add("w", 3, 4);
  wide.add("b", 1, 4);
  CHECK_THROWS(load_checkpoint(path, wide));
  std::filesystem::remove(path);
}
