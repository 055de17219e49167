#pragma once

#include <Eigen/Dense>

#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sde {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

/// A named trainable matrix and its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter(std::string n, Index rows, Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}

  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

/// Owns every parameter of a model in registration order, which is also the
/// checkpoint order. Addresses stay stable for the lifetime of the set.
template <typename Scalar>
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter<Scalar>& add(const std::string& name, Index rows, Index cols) {
    if (find(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
    params_.push_back(std::make_unique<Parameter<Scalar>>(name, rows, cols));
    return *params_.back();
  }

  /// Adds a parameter filled with uniform(-scale, scale).
  Parameter<Scalar>& add_uniform(const std::string& name, Index rows, Index cols, std::mt19937_64& rng,
                                 double scale = 0.1) {
    auto& p = add(name, rows, cols);
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
    return p;
  }

  Parameter<Scalar>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  Parameter<Scalar>& at(const std::string& name) const {
    auto* p = find(name);
    if (!p) throw std::out_of_range("no parameter named '" + name + "'");
    return *p;
  }

  std::size_t count() const { return params_.size(); }
  Parameter<Scalar>& operator[](std::size_t i) const { return *params_[i]; }

  Index total_size() const {
    Index n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::vector<Matrix<Scalar>> snapshot() const {
    std::vector<Matrix<Scalar>> values;
    values.reserve(params_.size());
    for (const auto& p : params_) values.push_back(p->value);
    return values;
  }

  void restore(const std::vector<Matrix<Scalar>>& values) {
    if (values.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) params_[i]->value = values[i];
  }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
};

template <typename Scalar>
bool all_finite(const Matrix<Scalar>& m) {
  return m.allFinite();
}

}  // namespace sde
