#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stlstm/errors.hpp"

namespace stlstm {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

class Tape;

namespace detail {

// One node of the computation graph. Leaves are parameters or constants;
// everything else is the output of a recorded primitive.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff requires_grad; accumulates
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;  // keeps inputs alive
  std::function<void()> backprop;                    // set on recorded ops
  const Tape* tape = nullptr;
  std::size_t index = 0;  // position on the recording tape
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Copying a Tensor copies a handle,
// not the storage; values are treated as immutable once the tensor has been
// used as an operation input (mutable_data exists for leaf construction and
// finite-difference sweeps only).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t i) const;

  double item() const;  // requires size() == 1
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  std::span<const double> data() const;
  std::span<double> mutable_data();

  bool requires_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  bool all_finite() const;
  // Throws NumericalError naming `what` if any entry is NaN or Inf.
  void check_finite(const std::string& what) const;

  // Value copy with no gradient tracking.
  Tensor detach() const;

  detail::TensorNode* node() const { return d_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> d) : d_(std::move(d)) {}
  std::shared_ptr<detail::TensorNode> d_;

  friend void record_op(Tensor& out, const std::vector<Tensor>& inputs,
                        std::function<void()> back);
};

// Records differentiable primitives in creation order while it is the
// innermost live Tape on the current thread. backward() walks the recording
// in reverse and accumulates dLoss/dNode into every node's gradient buffer.
// Tensors created while no tape is active carry values only.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  // loss must be a scalar recorded on this tape.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend void record_op(Tensor& out, const std::vector<Tensor>& inputs,
                        std::function<void()> back);
  void record(const std::shared_ptr<detail::TensorNode>& n);

  std::vector<std::shared_ptr<detail::TensorNode>> nodes_;
  Tape* prev_ = nullptr;
};

enum class Activation { kRelu, kSigmoid, kTanh, kPrelu, kLinear };

// ---- elementwise / structural primitives ----------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
// slope is a learnable scalar tensor; prelu(x) = x for x > 0, slope * x else.
Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor activate(const Tensor& x, Activation kind, const Tensor* slope = nullptr);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// m[i][j] + v[j] for every row i.
Tensor add_rows(const Tensor& m, const Tensor& v);

// Length-preserving 1-D convolution over the time axis with left zero
// padding of kernel_size - 1, so output at time t sees inputs at times <= t.
//   x [C_in x T], kernel [C_out x C_in x K], bias [C_out] -> [C_out x T]
Tensor conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// Normalizes to zero mean and unit variance along `axis` (rank 1: axis 0;
// rank 2: 0 = down each column, 1 = along each row), then applies
// gain/bias indexed by the normalized axis. When the variance falls below
// eps the denominator is frozen at sqrt(eps), which maps constant input to
// zero instead of dividing by zero.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  std::size_t axis, double eps = 1e-5);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t start, std::size_t len);       // rank 1
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);  // rank 2
Tensor row(const Tensor& x, std::size_t i);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

// Sum over all entries of softplus(logit) - target * logit, the negative
// Bernoulli log-likelihood of `targets` under sigmoid(logits), evaluated in
// a form that stays finite for large |logit|.
Tensor bce_logits_sum(const Tensor& logits, const Tensor& targets);

// steps: T matrices [n x c] -> [n x T x c].
Tensor stack_steps(const std::vector<Tensor>& steps);
// per_node: n matrices [C x T] -> [n x C] holding column t of each.
Tensor gather_timestep(const std::vector<Tensor>& per_node, std::size_t t);
// per_step: T matrices [n x C] -> [C x T] holding row `node` of each.
Tensor node_series(const std::vector<Tensor>& per_step, std::size_t node);

// ---- finite-difference verification ----------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares tape gradients of f() against central differences with step h,
// sweeping every scalar of every listed parameter. f must be deterministic
// and rebuild its computation from the parameter tensors on each call.
// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double h = 1e-5);

}  // namespace stlstm
