#pragma once

#include "gsgw/linalg.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace gsgw::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
};

/// Append-only record of a forward computation. Nodes are created in
/// topological order, so backward() only needs a reverse sweep.
///
/// Single-threaded; separate tapes may be used from separate threads.
class Tape {
 public:
  using BackwardFn = std::function<void(const Mat& out_grad, Tape& tape)>;

  Var leaf(Mat value, bool requires_grad = true);
  Var constant(Mat value) { return leaf(std::move(value), false); }
  Var constant_scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

  /// Registers an op result. `inputs` must already be on this tape.
  /// Throws NumericError if `value` is not finite.
  Var push(Mat value, const char* op, std::vector<std::size_t> inputs, BackwardFn backward);

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 output. Clears gradients from earlier sweeps.
  void backward(Var output);

  /// Gradient of the last backward() output with respect to `v`; zeros if
  /// `v` did not influence it.
  Mat grad(Var v) const;

  /// Used by backward closures.
  void accumulate(std::size_t id, const Mat& g);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    const char* op = "leaf";
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Linear algebra and elementwise arithmetic.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
/// Scalar-tensor product with a 1x1 node.
Var scale(Var a, Var c);
Var add_scalar(Var a, double c);
/// Adds a 1 x c row to every row of an r x c matrix.
Var add_bias(Var a, Var row);
Var transpose(Var a);

// Nonlinearities.
Var row_softmax(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// tanh approximation 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3))).
Var gelu(Var a);
Var sin(Var a);
Var cos(Var a);
Var square(Var a);
Var sqrt(Var a);
Var reciprocal(Var a);

// Reductions and reshaping.
Var sum(Var a);
Var mean(Var a);
/// 1 x c column means.
Var mean_rows(Var a);
/// r x 1 row sums.
Var sum_cols(Var a);
/// Repeats a 1 x c row r times.
Var repeat_rows(Var row, Eigen::Index r);
Var concat_cols(Var a, Var b);
/// Contiguous slice of the row-major buffer reshaped to rows x cols.
Var slice(Var a, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);

enum class Activation { relu, gelu, tanh };
Var activate(Var a, Activation act);

/// Scalar function of a parameter column vector, expressed on a tape.
using TapeFn = std::function<Var(Tape& tape, Var theta)>;

/// Max over coordinates of |analytic - central| / (1e-8 + |central|), where
/// the analytic gradient comes from the tape and `central` uses step h.
double grad_check(const TapeFn& fn, const Vec& theta, double h);

/// Evaluates fn on a fresh tape and returns (value, gradient).
std::pair<double, Vec> value_and_grad(const TapeFn& fn, const Vec& theta);

}  // namespace gsgw::ad
