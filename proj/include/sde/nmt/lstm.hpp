#pragma once

#include <random>
#include <string>
#include <utility>

#include "sde/numcore/graph.hpp"
#include "sde/numcore/ops.hpp"

namespace sde {

/// LSTM cell with gates packed as [input, forget, candidate, output].
template <typename Scalar>
struct LstmCell {
  Parameter<Scalar>* w_x = nullptr;  ///< input x 4H
  Parameter<Scalar>* w_h = nullptr;  ///< H x 4H
  Parameter<Scalar>* bias = nullptr; ///< 1 x 4H
  Index hidden = 0;

  static LstmCell create(ParameterSet<Scalar>& params, const std::string& prefix, Index input, Index hidden,
                         std::mt19937_64& rng, double init_scale, double forget_bias) {
    LstmCell cell;
    cell.hidden = hidden;
    cell.w_x = &params.add_uniform(prefix + "W_x", input, 4 * hidden, rng, init_scale);
    cell.w_h = &params.add_uniform(prefix + "W_h", hidden, 4 * hidden, rng, init_scale);
    cell.bias = &params.add_uniform(prefix + "b", 1, 4 * hidden, rng, init_scale);
    cell.bias->value.block(0, hidden, 1, hidden).setConstant(static_cast<Scalar>(forget_bias));
    return cell;
  }

  /// Returns the new (h, c).
  std::pair<Var, Var> step(Graph<Scalar>& g, Var x, Var h, Var c) const {
    const Var z = ops::add_bias(g, ops::add(g, ops::matmul(g, x, g.parameter(*w_x)), ops::matmul(g, h, g.parameter(*w_h))),
                                g.parameter(*bias));
    const Var i = ops::sigmoid(g, ops::slice_cols(g, z, 0, hidden));
    const Var f = ops::sigmoid(g, ops::slice_cols(g, z, hidden, hidden));
    const Var cand = ops::tanh(g, ops::slice_cols(g, z, 2 * hidden, hidden));
    const Var o = ops::sigmoid(g, ops::slice_cols(g, z, 3 * hidden, hidden));
    const Var c_next = ops::add(g, ops::mul(g, f, c), ops::mul(g, i, cand));
    const Var h_next = ops::mul(g, o, ops::tanh(g, c_next));
    return {h_next, c_next};
  }
};

}  // namespace sde
