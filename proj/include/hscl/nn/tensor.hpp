#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hscl/error.hpp"

namespace hscl::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major array with an optional same-shape gradient slot.
///
/// `Real` is `float` for training and `double` for gradient checking; the
/// layer code is shared between both.
template <class Real>
class BasicTensor {
 public:
  using value_type = Real;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), values_(element_count(shape_), fill) {}
  BasicTensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
      throw ValidationError("tensor of shape " + to_string(shape_) + " given " + std::to_string(values_.size()) +
                            " values");
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }

  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  Real* data() { return values_.data(); }
  const Real* data() const { return values_.data(); }
  Real& operator[](std::size_t i) { return values_[i]; }
  Real operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const { return has_grad_; }
  // Allocates a zeroed gradient slot on first use.
  std::span<Real> grad() {
    if (!has_grad_) {
      grad_.assign(values_.size(), Real(0));
      has_grad_ = true;
    }
    return grad_;
  }
  std::span<const Real> grad() const {
    if (!has_grad_) throw RuntimeError("tensor has no gradient slot");
    return grad_;
  }
  void zero_grad() {
    if (has_grad_) std::fill(grad_.begin(), grad_.end(), Real(0));
  }
  void clear_grad() {
    grad_.clear();
    has_grad_ = false;
  }

  void reshape(Shape shape) {
    if (element_count(shape) != values_.size()) {
      throw ValidationError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    shape_ = std::move(shape);
  }

  bool all_finite() const {
    for (Real v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <class Other>
  BasicTensor<Other> cast() const {
    std::vector<Other> v(values_.begin(), values_.end());
    return BasicTensor<Other>(shape_, std::move(v));
  }

  // Value equality; gradients are ignored.
  bool operator==(const BasicTensor& other) const { return shape_ == other.shape_ && values_ == other.values_; }

 private:
  Shape shape_;
  std::vector<Real> values_;
  std::vector<Real> grad_;
  bool has_grad_ = false;
};

using Tensor = BasicTensor<float>;

/// Named tensors in insertion order. Iteration order is stable, which keeps
/// checkpoints and optimizer updates deterministic.
template <class Real>
class BasicParameterSet {
 public:
  using TensorType = BasicTensor<Real>;

  void add(const std::string& name, TensorType tensor) {
    if (index_.count(name)) throw ValidationError("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(tensor));
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  TensorType& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("missing parameter '" + name + "'");
    return entries_[it->second].second;
  }
  const TensorType& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("missing parameter '" + name + "'");
    return entries_[it->second].second;
  }
  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }
  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }
  void clear_grad() {
    for (auto& [_, t] : entries_) t.clear_grad();
  }

  template <class Other>
  BasicParameterSet<Other> cast() const {
    BasicParameterSet<Other> out;
    for (const auto& [n, t] : entries_) out.add(n, t.template cast<Other>());
    return out;
  }

  bool operator==(const BasicParameterSet& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::pair<std::string, TensorType>> entries_;
  std::map<std::string, std::size_t> index_;
};

using ParameterSet = BasicParameterSet<float>;

}  // namespace hscl::nn
