#pragma once

// Dense double-precision tensors and a reverse-mode differentiation tape.
//
// A DTensor owns values and an accumulated gradient. Model parameters are
// DTensors that outlive any single tape. A Tape records primitive
// applications for one forward pass; Var is a lightweight handle into it.
// Backward walks the node list in reverse and adds leaf gradients into the
// DTensor bound to each parameter leaf, so repeated backward calls
// accumulate until the caller zeroes them.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace exost {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised for shape rule violations; always a caller bug, never a data problem.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DTensor {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;

  DTensor() = default;
  explicit DTensor(Shape s, double fill = 0.0);
  DTensor(Shape s, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  void zero_grad();
};

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const;
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Size of an axis; negative axes count from the back.
  std::size_t dim(int axis) const;
  std::span<const double> value() const;
  std::span<const double> grad() const;
  bool tracked() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool tracked = false;
    Backprop backprop;
    DTensor* sink = nullptr;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tracked leaf; backward adds d(root)/d(p) into p.grad.
  Var param(DTensor& p);
  Var constant(const DTensor& t);
  Var constant(Shape shape, std::vector<double> values);
  Var fill(Shape shape, double value);

  /// Reverse sweep from a single-element root. The tape is not consumed:
  /// a second call recomputes the same node gradients and adds them to the
  /// bound parameter gradients again.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  /// Appends a node. The backprop closure is dropped when no input is tracked.
  Var record(Shape shape, std::vector<double> value,
             std::initializer_list<Var> inputs, Backprop backprop);
  Var record(Shape shape, std::vector<double> value, std::span<const Var> inputs,
             Backprop backprop);

 private:
  std::vector<Node> nodes_;
};

// Linear algebra and shape primitives.

/// Batched matrix product over the last two axes. Leading axes must match, or
/// one operand may be a plain matrix that broadcasts over the other's batch.
Var matmul(Var a, Var b, bool transpose_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double shift);
/// Numpy-style right-aligned broadcast to `shape`.
Var broadcast_to(Var x, const Shape& shape);
Var reshape(Var x, const Shape& shape);
Var slice(Var x, int axis, std::size_t start, std::size_t length);
Var concat(std::span<const Var> parts, int axis);
Var concat(std::initializer_list<Var> parts, int axis);
Var sum(Var x, int axis, bool keepdim = false);
Var mean(Var x, int axis, bool keepdim = false);
/// Mean of every element, rank-0 result.
Var mean_all(Var x);

// Element-wise nonlinearities.

Var relu(Var x);
Var leaky_relu(Var x, double slope = 0.01);
Var sigmoid(Var x);
Var tanh(Var x);
Var abs(Var x);
Var softmax(Var x, int axis);

/// Inverted dropout. Identity when `train` is false; otherwise surviving
/// entries are scaled by 1/keep_prob.
Var dropout(Var x, double keep_prob, bool train, std::mt19937_64& rng);

// Composite helpers.

/// x · Wᵀ + b over the last axis, with W stored out×in.
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);

// Verification instrument.

/// Max over coordinates of |analytic − central difference| / max(1, |central|)
/// for a scalar function of one tensor. Throws std::domain_error when the
/// function is non-finite at a perturbed point.
double grad_check(const std::function<Var(Tape&, Var)>& f, const DTensor& point,
                  double step = 1e-5);

/// Same measure, taken jointly over every coordinate of several parameters.
/// `f` must bind each parameter through Tape::param.
double grad_check_params(const std::function<Var(Tape&)>& f,
                         std::span<DTensor* const> params, double step = 1e-5);

}  // namespace ad
}  // namespace exost
