#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sde/numcore/graph.hpp"
#include "sde/segmentation.hpp"

namespace sde::ops {

namespace detail {

inline std::string shape_string(Index rows, Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

template <typename Scalar>
void require_same_shape(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.rows(), a.cols()) + " vs " +
                                shape_string(b.rows(), b.cols()));
  }
}

}  // namespace detail

/// a[m x k] * b[k x n]
template <typename Scalar>
Var matmul(Graph<Scalar>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.cols() != B.rows()) {
    throw std::invalid_argument("matmul: inner dimension mismatch " + detail::shape_string(A.rows(), A.cols()) +
                                " x " + detail::shape_string(B.rows(), B.cols()));
  }
  Matrix<Scalar> out(A.rows(), B.cols());
  out.noalias() = A * B;
  return g.record(std::move(out), g.any_needs_grad({a, b}), [a, b](Graph<Scalar>& g, const Matrix<Scalar>& dC) {
    if (g.needs_grad(a)) g.grad(a).noalias() += dC * g.value(b).transpose();
    if (g.needs_grad(b)) g.grad(b).noalias() += g.value(a).transpose() * dC;
  });
}

/// a[m x k] * b[n x k]^T
template <typename Scalar>
Var matmul_nt(Graph<Scalar>& g, Var a, Var b) {
  const auto& A = g.value(a);
  const auto& B = g.value(b);
  if (A.cols() != B.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimension mismatch " + detail::shape_string(A.rows(), A.cols()) +
                                " x " + detail::shape_string(B.cols(), B.rows()));
  }
  Matrix<Scalar> out(A.rows(), B.rows());
  out.noalias() = A * B.transpose();
  return g.record(std::move(out), g.any_needs_grad({a, b}), [a, b](Graph<Scalar>& g, const Matrix<Scalar>& dC) {
    if (g.needs_grad(a)) g.grad(a).noalias() += dC * g.value(b);
    if (g.needs_grad(b)) g.grad(b).noalias() += dC.transpose() * g.value(a);
  });
}

template <typename Scalar>
Var add(Graph<Scalar>& g, Var a, Var b) {
  detail::require_same_shape(g.value(a), g.value(b), "add");
  Matrix<Scalar> out = g.value(a) + g.value(b);
  return g.record(std::move(out), g.any_needs_grad({a, b}), [a, b](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    if (g.needs_grad(a)) g.grad(a) += d;
    if (g.needs_grad(b)) g.grad(b) += d;
  });
}

/// x[m x n] + bias[1 x n] broadcast over rows.
template <typename Scalar>
Var add_bias(Graph<Scalar>& g, Var x, Var bias) {
  const auto& X = g.value(x);
  const auto& B = g.value(bias);
  if (B.rows() != 1 || B.cols() != X.cols()) {
    throw std::invalid_argument("add_bias: bias " + detail::shape_string(B.rows(), B.cols()) + " for input " +
                                detail::shape_string(X.rows(), X.cols()));
  }
  Matrix<Scalar> out = X.rowwise() + B.row(0);
  return g.record(std::move(out), g.any_needs_grad({x, bias}), [x, bias](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    if (g.needs_grad(x)) g.grad(x) += d;
    if (g.needs_grad(bias)) g.grad(bias) += d.colwise().sum();
  });
}

/// Elementwise product.
template <typename Scalar>
Var mul(Graph<Scalar>& g, Var a, Var b) {
  detail::require_same_shape(g.value(a), g.value(b), "mul");
  Matrix<Scalar> out = g.value(a).cwiseProduct(g.value(b));
  return g.record(std::move(out), g.any_needs_grad({a, b}), [a, b](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    if (g.needs_grad(a)) g.grad(a) += d.cwiseProduct(g.value(b));
    if (g.needs_grad(b)) g.grad(b) += d.cwiseProduct(g.value(a));
  });
}

template <typename Scalar>
Var scale(Graph<Scalar>& g, Var x, Scalar factor) {
  Matrix<Scalar> out = g.value(x) * factor;
  return g.record(std::move(out), g.needs_grad(x), [x, factor](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    g.grad(x) += d * factor;
  });
}

template <typename Scalar>
Var tanh(Graph<Scalar>& g, Var x) {
  Matrix<Scalar> out = g.value(x).array().tanh().matrix();
  const Var y{static_cast<int>(g.size())};
  return g.record(std::move(out), g.needs_grad(x), [x, y](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    const auto& Y = g.value(y);
    g.grad(x).array() += d.array() * (Scalar(1) - Y.array().square());
  });
}

template <typename Scalar>
Var sigmoid(Graph<Scalar>& g, Var x) {
  Matrix<Scalar> out = (Scalar(1) / (Scalar(1) + (-g.value(x).array()).exp())).matrix();
  const Var y{static_cast<int>(g.size())};
  return g.record(std::move(out), g.needs_grad(x), [x, y](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    const auto& Y = g.value(y);
    g.grad(x).array() += d.array() * Y.array() * (Scalar(1) - Y.array());
  });
}

/// Numerically stable row softmax (max subtraction).
template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& X) {
  Matrix<Scalar> out(X.rows(), X.cols());
  for (Index r = 0; r < X.rows(); ++r) {
    const Scalar mx = X.row(r).maxCoeff();
    out.row(r) = (X.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Scalar>
Var softmax_rows(Graph<Scalar>& g, Var x) {
  Matrix<Scalar> out = softmax_rows_value(g.value(x));
  const Var y{static_cast<int>(g.size())};
  return g.record(std::move(out), g.needs_grad(x), [x, y](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    const auto& Y = g.value(y);
    const Matrix<Scalar> dot = d.cwiseProduct(Y).rowwise().sum();
    g.grad(x).array() += Y.array() * (d.colwise() - dot.col(0)).array();
  });
}

/// Inverted dropout: kept units are scaled by 1/(1-rate) in training,
/// identity otherwise.
template <typename Scalar>
Var dropout(Graph<Scalar>& g, Var x, double rate, std::mt19937_64& rng, bool train) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!train || rate == 0.0) return x;
  const auto& X = g.value(x);
  Matrix<Scalar> mask(X.rows(), X.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  const Scalar kept = static_cast<Scalar>(1.0 / (1.0 - rate));
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? kept : Scalar(0);
  Matrix<Scalar> out = X.cwiseProduct(mask);
  return g.record(std::move(out), g.needs_grad(x), [x, mask = std::move(mask)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    g.grad(x) += d.cwiseProduct(mask);
  });
}

template <typename Scalar>
Var dropout(Graph<Scalar>& g, Var x, double rate, std::uint64_t seed, bool train) {
  std::mt19937_64 rng(seed);
  return dropout(g, x, rate, rng, train);
}

/// Rows of `table` selected by `ids`. Backward scatter-adds into the
/// referenced rows of the parameter gradient only.
template <typename Scalar>
Var embedding_rows(Graph<Scalar>& g, Parameter<Scalar>& table, std::span<const int> ids) {
  Matrix<Scalar> out(static_cast<Index>(ids.size()), table.value.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= table.value.rows()) {
      throw std::out_of_range("embedding_rows: id " + std::to_string(ids[r]) + " out of range for " + table.name +
                              " with " + std::to_string(table.value.rows()) + " rows");
    }
    out.row(static_cast<Index>(r)) = table.value.row(ids[r]);
  }
  std::vector<int> rows(ids.begin(), ids.end());
  return g.record(std::move(out), true, [&table, rows = std::move(rows)](Graph<Scalar>&, const Matrix<Scalar>& d) {
    for (std::size_t r = 0; r < rows.size(); ++r) table.grad.row(rows[r]) += d.row(static_cast<Index>(r));
  });
}

/// One output row per bag: the count-weighted sum of `table` rows.
template <typename Scalar>
Var bag_embed(Graph<Scalar>& g, Parameter<Scalar>& table, std::span<const BagOfNgrams> bags) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(bags.size()), table.value.cols());
  std::vector<std::vector<std::pair<int, int>>> entries;
  entries.reserve(bags.size());
  for (std::size_t r = 0; r < bags.size(); ++r) {
    for (const auto& [id, count] : bags[r].counts) {
      if (id < 0 || id >= table.value.rows()) {
        throw std::out_of_range("bag_embed: n-gram id " + std::to_string(id) + " out of range for " + table.name +
                                " with " + std::to_string(table.value.rows()) + " rows");
      }
      out.row(static_cast<Index>(r)) += static_cast<Scalar>(count) * table.value.row(id);
    }
    entries.push_back(bags[r].counts);
  }
  return g.record(std::move(out), true, [&table, entries = std::move(entries)](Graph<Scalar>&, const Matrix<Scalar>& d) {
    for (std::size_t r = 0; r < entries.size(); ++r)
      for (const auto& [id, count] : entries[r]) table.grad.row(id) += static_cast<Scalar>(count) * d.row(static_cast<Index>(r));
  });
}

/// out.row(r) = x.row(index[r]); a negative index yields a zero row.
template <typename Scalar>
Var gather_rows(Graph<Scalar>& g, Var x, std::vector<int> index) {
  const auto& X = g.value(x);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(index.size()), X.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= X.rows()) throw std::out_of_range("gather_rows: row index out of range");
    if (index[r] >= 0) out.row(static_cast<Index>(r)) = X.row(index[r]);
  }
  return g.record(std::move(out), g.needs_grad(x), [x, index = std::move(index)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    auto& dx = g.grad(x);
    for (std::size_t r = 0; r < index.size(); ++r)
      if (index[r] >= 0) dx.row(index[r]) += d.row(static_cast<Index>(r));
  });
}

template <typename Scalar>
Var concat_cols(Graph<Scalar>& g, std::vector<Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = g.value(parts[0]).rows();
  Index cols = 0;
  bool needs = false;
  for (auto p : parts) {
    if (g.value(p).rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += g.value(p).cols();
    needs = needs || g.needs_grad(p);
  }
  Matrix<Scalar> out(rows, cols);
  Index offset = 0;
  for (auto p : parts) {
    out.middleCols(offset, g.value(p).cols()) = g.value(p);
    offset += g.value(p).cols();
  }
  return g.record(std::move(out), needs, [parts = std::move(parts)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    Index off = 0;
    for (auto p : parts) {
      const Index c = g.value(p).cols();
      if (g.needs_grad(p)) g.grad(p) += d.middleCols(off, c);
      off += c;
    }
  });
}

template <typename Scalar>
Var concat_rows(Graph<Scalar>& g, std::vector<Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Index cols = g.value(parts[0]).cols();
  Index rows = 0;
  bool needs = false;
  for (auto p : parts) {
    if (g.value(p).cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
    rows += g.value(p).rows();
    needs = needs || g.needs_grad(p);
  }
  Matrix<Scalar> out(rows, cols);
  Index offset = 0;
  for (auto p : parts) {
    out.middleRows(offset, g.value(p).rows()) = g.value(p);
    offset += g.value(p).rows();
  }
  return g.record(std::move(out), needs, [parts = std::move(parts)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    Index off = 0;
    for (auto p : parts) {
      const Index r = g.value(p).rows();
      if (g.needs_grad(p)) g.grad(p) += d.middleRows(off, r);
      off += r;
    }
  });
}

template <typename Scalar>
Var slice_cols(Graph<Scalar>& g, Var x, Index start, Index count) {
  const auto& X = g.value(x);
  if (start < 0 || count < 0 || start + count > X.cols()) throw std::out_of_range("slice_cols: range out of bounds");
  Matrix<Scalar> out = X.middleCols(start, count);
  return g.record(std::move(out), g.needs_grad(x), [x, start, count](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    g.grad(x).middleCols(start, count) += d;
  });
}

/// Row-wise select: out.row(r) = keep[r] ? fresh.row(r) : old.row(r).
/// Carries recurrent state across padded positions.
template <typename Scalar>
Var blend(Graph<Scalar>& g, std::vector<bool> keep, Var fresh, Var old) {
  const auto& F = g.value(fresh);
  const auto& O = g.value(old);
  detail::require_same_shape(F, O, "blend");
  if (static_cast<Index>(keep.size()) != F.rows()) throw std::invalid_argument("blend: mask length mismatch");
  Matrix<Scalar> out = O;
  for (Index r = 0; r < F.rows(); ++r)
    if (keep[r]) out.row(r) = F.row(r);
  return g.record(std::move(out), g.any_needs_grad({fresh, old}),
                  [fresh, old, keep = std::move(keep)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                    for (Index r = 0; r < d.rows(); ++r) {
                      const Var target = keep[r] ? fresh : old;
                      if (g.needs_grad(target)) g.grad(target).row(r) += d.row(r);
                    }
                  });
}

template <typename Scalar>
struct AttentionResult {
  Var context;
  Matrix<Scalar> weights;  ///< batch x time, rows sum to 1
};

/// Dot-product attention of each query row over its own time steps.
/// `keys[t]` holds row b's state at time t; `valid(b, t) == 0` masks it out.
/// Every row must have at least one valid position.
template <typename Scalar>
AttentionResult<Scalar> dot_attention(Graph<Scalar>& g, Var query, std::vector<Var> keys,
                                      const Matrix<Scalar>& valid) {
  const auto& Q = g.value(query);
  const Index batch = Q.rows();
  const Index steps = static_cast<Index>(keys.size());
  if (valid.rows() != batch || valid.cols() != steps) throw std::invalid_argument("dot_attention: mask shape mismatch");
  Matrix<Scalar> weights(batch, steps);
  bool needs = g.needs_grad(query);
  for (Index t = 0; t < steps; ++t) {
    const auto& K = g.value(keys[t]);
    detail::require_same_shape(K, Q, "dot_attention");
    weights.col(t) = Q.cwiseProduct(K).rowwise().sum();
    needs = needs || g.needs_grad(keys[t]);
  }
  for (Index b = 0; b < batch; ++b) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index t = 0; t < steps; ++t)
      if (valid(b, t) != 0) mx = std::max(mx, weights(b, t));
    if (!std::isfinite(mx)) throw std::invalid_argument("dot_attention: row without valid positions");
    Scalar sum = 0;
    for (Index t = 0; t < steps; ++t) {
      weights(b, t) = valid(b, t) != 0 ? std::exp(weights(b, t) - mx) : Scalar(0);
      sum += weights(b, t);
    }
    weights.row(b) /= sum;
  }
  Matrix<Scalar> context = Matrix<Scalar>::Zero(batch, Q.cols());
  for (Index t = 0; t < steps; ++t) context += weights.col(t).asDiagonal() * g.value(keys[t]);
  AttentionResult<Scalar> result{{}, weights};
  result.context = g.record(std::move(context), needs,
                            [query, keys = std::move(keys), weights](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                              const Index T = static_cast<Index>(keys.size());
                              Matrix<Scalar> dw(weights.rows(), T);
                              for (Index t = 0; t < T; ++t) {
                                const auto& K = g.value(keys[t]);
                                dw.col(t) = d.cwiseProduct(K).rowwise().sum();
                                if (g.needs_grad(keys[t])) g.grad(keys[t]) += weights.col(t).asDiagonal() * d;
                              }
                              const Matrix<Scalar> dot = dw.cwiseProduct(weights).rowwise().sum();
                              const Matrix<Scalar> ds = weights.cwiseProduct(dw.colwise() - dot.col(0));
                              const auto& Q = g.value(query);
                              for (Index t = 0; t < T; ++t) {
                                if (g.needs_grad(query)) g.grad(query) += ds.col(t).asDiagonal() * g.value(keys[t]);
                                if (g.needs_grad(keys[t])) g.grad(keys[t]) += ds.col(t).asDiagonal() * Q;
                              }
                            });
  return result;
}

/// Sum over rows r with targets[r] != ignore_id of -log softmax(logits)[r, target],
/// divided by `normalizer`. Returns a 1x1 node.
template <typename Scalar>
Var cross_entropy_masked(Graph<Scalar>& g, Var logits, std::vector<int> targets, int ignore_id, Scalar normalizer) {
  const auto& L = g.value(logits);
  if (static_cast<Index>(targets.size()) != L.rows()) throw std::invalid_argument("cross_entropy: target count mismatch");
  Matrix<Scalar> probs = softmax_rows_value(L);
  Scalar total = 0;
  for (Index r = 0; r < L.rows(); ++r) {
    const int t = targets[r];
    if (t == ignore_id) continue;
    if (t < 0 || t >= L.cols()) throw std::out_of_range("cross_entropy: target id " + std::to_string(t) + " out of range");
    const Scalar mx = L.row(r).maxCoeff();
    const Scalar lse = mx + std::log((L.row(r).array() - mx).exp().sum());
    total += lse - L(r, t);
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / normalizer;
  return g.record(std::move(out), g.needs_grad(logits),
                  [logits, targets = std::move(targets), probs = std::move(probs), ignore_id, normalizer](
                      Graph<Scalar>& g, const Matrix<Scalar>& d) {
                    auto& dl = g.grad(logits);
                    const Scalar s = d(0, 0) / normalizer;
                    for (Index r = 0; r < probs.rows(); ++r) {
                      if (targets[r] == ignore_id) continue;
                      dl.row(r) += s * probs.row(r);
                      dl(r, targets[r]) -= s;
                    }
                  });
}

/// Mean negative log-likelihood over all rows.
template <typename Scalar>
Var cross_entropy(Graph<Scalar>& g, Var logits, std::vector<int> targets) {
  const auto n = static_cast<Scalar>(targets.size());
  return cross_entropy_masked(g, logits, std::move(targets), std::numeric_limits<int>::min(), n);
}

template <typename Scalar>
Var sum_all(Graph<Scalar>& g, Var x) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = g.value(x).sum();
  return g.record(std::move(out), g.needs_grad(x), [x](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    g.grad(x).array() += d(0, 0);
  });
}

/// sum(x .* weights) for a constant weight matrix; used to scalarize outputs
/// in gradient checks.
template <typename Scalar>
Var weighted_sum(Graph<Scalar>& g, Var x, Matrix<Scalar> weights) {
  detail::require_same_shape(g.value(x), weights, "weighted_sum");
  Matrix<Scalar> out(1, 1);
  out(0, 0) = g.value(x).cwiseProduct(weights).sum();
  return g.record(std::move(out), g.needs_grad(x), [x, weights = std::move(weights)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    g.grad(x) += d(0, 0) * weights;
  });
}

}  // namespace sde::ops
