#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sde/numcore/graph.hpp"

namespace sde {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  std::size_t entries_checked = 0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8).
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares backprop gradients of a scalar loss against central differences.
///
/// `loss` builds a fresh graph and returns its scalar root. With
/// `max_entries_per_parameter > 0` a deterministic evenly spaced subset of
/// each parameter's entries is checked.
template <typename Scalar>
GradCheckResult grad_check(const std::function<Var(Graph<Scalar>&)>& loss, std::span<Parameter<Scalar>* const> params,
                           double eps = 1e-5, std::size_t max_entries_per_parameter = 0) {
  for (auto* p : params) p->zero_grad();
  {
    Graph<Scalar> g;
    const Var root = loss(g);
    if (!std::isfinite(static_cast<double>(g.scalar(root)))) throw std::runtime_error("grad_check: non-finite loss");
    g.backward(root);
  }
  auto evaluate = [&]() {
    Graph<Scalar> g(false);
    const double v = static_cast<double>(g.scalar(loss(g)));
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss under perturbation");
    return v;
  };

  GradCheckResult result;
  for (auto* p : params) {
    const Matrix<Scalar> analytic = p->grad;
    if (!analytic.allFinite()) throw std::runtime_error("grad_check: non-finite gradient for " + p->name);
    const Index n = p->value.size();
    Index stride = 1;
    if (max_entries_per_parameter > 0 && static_cast<std::size_t>(n) > max_entries_per_parameter)
      stride = (n + static_cast<Index>(max_entries_per_parameter) - 1) / static_cast<Index>(max_entries_per_parameter);
    for (Index i = 0; i < n; i += stride) {
      Scalar& x = p->value.data()[i];
      const Scalar saved = x;
      x = saved + static_cast<Scalar>(eps);
      const double plus = evaluate();
      x = saved - static_cast<Scalar>(eps);
      const double minus = evaluate();
      x = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = relative_error(static_cast<double>(analytic.data()[i]), numeric);
      ++result.entries_checked;
      if (err > result.max_rel_error || result.worst_index < 0) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        if (err >= result.max_rel_error) {
          result.worst_parameter = p->name;
          result.worst_index = i;
        }
      }
    }
    p->zero_grad();
  }
  return result;
}

}  // namespace sde
