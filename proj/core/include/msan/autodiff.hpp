#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "msan/tensor.hpp"

namespace msan::ad {

/// A trainable tensor. Parameters live outside any tape; a tape only
/// borrows them for the duration of one step and accumulates into `grad`.
struct Parameter {
  std::string name;
  Tensor value;
  Buffer grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

  void zero_grad();
};

enum class OpKind {
  constant,
  input,
  parameter,
  matmul,
  add_bias,
  relu,
  tanh,
  grl,
  softmax_cross_entropy,
  mse,
  sum,
  add,
  scale,
  slice_rows,
  concat_rows,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& dims() const { return value().dims(); }
  /// Gradient after `Tape::backward`; zeros if the node was not reached. For a
  /// parameter leaf this is the parameter's accumulated gradient.
  std::span<const double> grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of operations for reverse-mode differentiation.
///
/// Node ids increase strictly with insertion and every input id is smaller
/// than the id of the node that consumes it, so reverse insertion order is a
/// valid topological order for the backward sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient readable through `Var::grad`.
  Var input(Tensor value);
  /// Borrows `p`; backward accumulates into `p.grad`.
  Var parameter(Parameter& p);

  /// Records an operation. Used by the op functions below.
  Var record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(OpKind kind, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(kind, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  /// Propagates d(loss)/d(node) to every node and accumulates into the
  /// gradients of borrowed parameters. `loss` must hold exactly one element.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  std::span<const std::size_t> inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated on first use.
  Buffer& grad_buffer(std::size_t id);
  std::span<const double> grad(std::size_t id) const;

 private:
  struct Node {
    OpKind kind = OpKind::constant;
    Tensor value;
    const Tensor* external = nullptr;  // parameter leaves view the parameter's tensor
    Parameter* param = nullptr;
    std::vector<std::size_t> inputs;
    Buffer grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // stable addresses: values stay valid while the tape grows
  mutable Buffer empty_grad_;
};

// Differentiable operations. All inputs must live on the same tape.

/// [m x k] * [k x n] -> [m x n]
Var matmul(Var a, Var b);
/// Adds a length-n vector to every row of an [m x n] matrix.
Var add_bias(Var a, Var b);
Var relu(Var a);
Var tanh(Var a);
/// Gradient reversal: identity forward, -lambda * upstream backward.
Var grl(Var a, double lambda = 1.0);
/// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
/// Mean of squared elementwise differences.
Var mse(Var a, Var b);
Var sum(Var a);
/// Elementwise sum of two same-shaped tensors.
Var add(Var a, Var b);
Var scale(Var a, double factor);
/// Rows [begin, end) of a matrix.
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);

/// Warm-up schedule for the reversal strength: 2 / (1 + exp(-10 p)) - 1.
double grl_ramp(double progress);

/// Scalar function of one tensor, evaluated on a fresh tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Central-difference check of d f / d x. Returns the maximum over
/// coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Same comparison for gradients with respect to parameters. `loss` builds
/// the scalar on the given tape, borrowing whichever parameters it needs.
double grad_check_params(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                         double h = 1e-5);

}  // namespace msan::ad
