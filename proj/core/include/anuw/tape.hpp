#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "anuw/tensor.hpp"

namespace anuw {

/// A learnable array together with its accumulated gradient.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name_(std::move(name)), value_(std::move(value)), grad_(value_.shape()) {}

  const std::string& name() const noexcept { return name_; }
  const Tensor& value() const noexcept { return value_; }
  Tensor& value() noexcept { return value_; }
  const Tensor& grad() const noexcept { return grad_; }
  Tensor& grad() noexcept { return grad_; }

  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation record. Operations append nodes in
/// evaluation order; backward() replays them in reverse.
///
/// A tape created with Mode::inference keeps forward values only, so no
/// gradient can flow through it.
class Tape {
 public:
  enum class Mode { training, inference };

  /// Called during backward with the gradient of the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(Mode mode = Mode::training) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const noexcept { return mode_; }
  bool recording() const noexcept { return mode_ == Mode::training; }

  /// A value that never receives gradient.
  Var constant(Tensor value);
  /// A leaf that receives gradient (readable through grad()) but is not
  /// tied to a Parameter. Used for input-gradient checks.
  Var variable(Tensor value);
  /// Leaf bound to `p`; one node per Parameter per tape. backward() adds the
  /// node's gradient into p.grad().
  Var parameter(Parameter& p);

  /// Appends an operation result. `inputs` are the nodes `fn` may write
  /// gradient into; the node requires grad iff any input does.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  /// Gradient after backward(); zeros if the node received none.
  const Tensor& grad(Var v) const;

  /// Mutable gradient buffer for `v`, allocated on first use. Only call for
  /// nodes where requires_grad(v) is true.
  Tensor& grad_buffer(Var v);

  /// Runs the reverse pass from a scalar (single-element) node.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  Mode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace anuw
