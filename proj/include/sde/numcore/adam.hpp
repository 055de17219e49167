#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sde/numcore/parameter.hpp"

namespace sde {

/// Adam moments and hyper-parameters. `learning_rate` is mutable between
/// steps so a trainer can decay it.
template <typename Scalar>
struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix<Scalar>> first_moment;
  std::vector<Matrix<Scalar>> second_moment;

  void decay(double factor) { learning_rate *= factor; }
};

/// One bias-corrected Adam update over every parameter, then zeroes the
/// gradients.
template <typename Scalar>
void adam_step(ParameterSet<Scalar>& params, AdamState<Scalar>& state) {
  if (state.first_moment.size() != params.count()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const auto& p : params) {
      state.first_moment.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(state.beta1);
  const auto b2 = static_cast<Scalar>(state.beta2);
  const auto step_size = static_cast<Scalar>(state.learning_rate / c1);
  const auto bias2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<Scalar>(state.epsilon);
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& p = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = b1 * m + (Scalar(1) - b1) * p.grad;
    v = b2 * v + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * m.array() / (v.array().sqrt() * bias2 + eps);
    p.zero_grad();
  }
}

}  // namespace sde
