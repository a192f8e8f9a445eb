#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "hscl/error.hpp"
#include "hscl/nn/tensor.hpp"

namespace hscl::nn {

template <class Real>
class Tape;

/// Handle to a node recorded on a Tape.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::size_t id = 0;

  const BasicTensor<Real>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode recorder. Every op appends a node holding its forward value
/// and a closure that pushes the node's gradient to its inputs; `backward`
/// replays the closures in reverse recording order.
///
/// A tape supports one backward pass. Call `reset()` before reusing it.
template <class Real>
class Tape {
 public:
  using TensorType = BasicTensor<Real>;
  // Receives the tape and the id of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Input or constant. With `requires_grad` its gradient is kept and
  // readable after backward; without it ops skip that gradient entirely.
  Var<Real> leaf(TensorType value, bool requires_grad = true) {
    Var<Real> v = push(std::move(value), nullptr);
    nodes_[v.id].requires_grad = requires_grad;
    return v;
  }

  // Binds a named parameter. Backward accumulates into the parameter's grad
  // slot, so the set must outlive the backward pass.
  Var<Real> parameter(BasicParameterSet<Real>& params, const std::string& name) {
    auto& t = params.at(name);
    Var<Real> v = push(TensorType(t.shape(), std::vector<Real>(t.values().begin(), t.values().end())), nullptr);
    nodes_[v.id].bound = frozen_parameters_ ? nullptr : &t;
    nodes_[v.id].requires_grad = !frozen_parameters_;
    return v;
  }

  // When set, later `parameter` calls bind constants: no gradient flows to
  // the parameter set.
  void freeze_parameters(bool frozen = true) { frozen_parameters_ = frozen; }

  // Records an op result. The node needs a gradient iff any parent does;
  // otherwise the closure is dropped.
  Var<Real> record(TensorType value, std::initializer_list<std::optional<Var<Real>>> parents, BackwardFn fn) {
    bool needs = false;
    for (const auto& p : parents) {
      if (!p) continue;
      (void)node(*p);
      needs = needs || nodes_[p->id].requires_grad;
    }
    Var<Real> v = push(std::move(value), needs ? std::move(fn) : nullptr);
    nodes_[v.id].requires_grad = needs;
    return v;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  const TensorType& value(Var<Real> v) const { return node(v).value; }
  const TensorType& value(std::size_t id) const { return nodes_.at(id).value; }

  // Mutable gradient of a node, allocated on first touch.
  std::span<Real> grad_mut(std::size_t id) { return nodes_.at(id).value.grad(); }
  bool has_grad(std::size_t id) const { return nodes_.at(id).value.has_grad(); }
  std::span<const Real> grad(Var<Real> v) const {
    const auto& n = node(v);
    if (!n.value.has_grad()) throw RuntimeError("node has no gradient; was backward run?");
    return n.value.grad();
  }

  void backward(Var<Real> root) {
    check_root(root);
    if (node(root).value.size() != 1) throw ValidationError("backward(root) needs a scalar root; pass a seed");
    std::vector<Real> seed{Real(1)};
    backward(root, seed);
  }

  void backward(Var<Real> root, std::span<const Real> seed) {
    check_root(root);
    if (backward_done_) throw RuntimeError("backward already ran on this tape; reset() first");
    auto& r = nodes_[root.id];
    if (seed.size() != r.value.size()) {
      throw ValidationError("seed has " + std::to_string(seed.size()) + " entries, root has " +
                            std::to_string(r.value.size()));
    }
    backward_done_ = true;
    auto g = r.value.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (std::size_t id = root.id + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.requires_grad || !n.value.has_grad()) continue;
      if (n.value.grad().size() != n.value.size()) throw RuntimeError("gradient shape corrupted");
      if (n.backward) n.backward(*this, id);
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) (void)n.value.grad();
      if (!n.bound) continue;
      auto dst = n.bound->grad();
      if (!n.value.has_grad()) continue;
      auto src = n.value.grad();
      if (dst.size() != src.size()) throw RuntimeError("parameter changed shape during the pass");
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
  }

  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
    min_kink_ = std::numeric_limits<double>::infinity();
    kink_signature_ = kSignatureSeed;
  }

  // Piecewise ops (ReLU, max) report how close the probe sits to a switch
  // point and a digest of the branch each element took.
  void note_kink(double distance, std::uint64_t pattern) {
    if (distance < min_kink_) min_kink_ = distance;
    kink_signature_ = (kink_signature_ ^ pattern) * 0x100000001b3ull;
  }
  double min_kink_distance() const { return min_kink_; }
  std::uint64_t kink_signature() const { return kink_signature_; }

 private:
  static constexpr std::uint64_t kSignatureSeed = 0xcbf29ce484222325ull;

  struct Node {
    TensorType value;
    BackwardFn backward;
    TensorType* bound = nullptr;
    bool requires_grad = false;
  };

  Var<Real> push(TensorType value, BackwardFn fn) {
    if (backward_done_) throw RuntimeError("tape already differentiated; reset() before recording");
    nodes_.push_back(Node{std::move(value), std::move(fn), nullptr, false});
    return Var<Real>{this, nodes_.size() - 1};
  }

  const Node& node(Var<Real> v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw RuntimeError("variable does not belong to this tape");
    return nodes_[v.id];
  }
  void check_root(Var<Real> root) const {
    if (nodes_.empty()) throw RuntimeError("backward called before any forward op was recorded");
    (void)node(root);
  }

  std::vector<Node> nodes_;
  bool frozen_parameters_ = false;
  bool backward_done_ = false;
  double min_kink_ = std::numeric_limits<double>::infinity();
  std::uint64_t kink_signature_ = kSignatureSeed;
};

// Running FNV-style digest for kink patterns.
inline std::uint64_t mix_pattern(std::uint64_t h, std::uint64_t v) { return (h ^ v) * 0x100000001b3ull; }

}  // namespace hscl::nn
