#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// Storage is a flat row-major Eigen array; operations record backward rules
// onto an explicit per-thread tape whose creation order is the topological
// order of the graph. backward() runs one reverse sweep and leaves the tape
// ready to be cleared (the trainer owns one Tape per optimization step).
//
// Broadcasting is deliberately limited: binary elementwise ops accept equal
// shapes or a tensor-vs-scalar pair, and add_rows() covers the one row-vector
// case the networks need. Anything else is a ShapeError.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtp::ad {

using Array = Eigen::ArrayXd;
using Index = Eigen::Index;
using Shape = std::vector<Index>;

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

Index shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
  Shape shape;
  Array values;
  Array grad;  // empty until a backward contribution touches it
  bool requires_grad = false;

  Index numel() const { return values.size(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad = Array::Zero(values.size());
  }
};

// Value-semantics handle onto shared storage. Copies alias; ops return fresh
// tensors. A tensor is a leaf unless an op produced it while a tape was live.
class Tensor {
 public:
  Tensor() : data_(std::make_shared<TensorData>()) {}
  explicit Tensor(std::shared_ptr<TensorData> d) : data_(std::move(d)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from_array(Shape shape, Array values, bool requires_grad = false);
  static Tensor scalar(double value);

  const Shape& shape() const { return data_->shape; }
  Index rank() const { return static_cast<Index>(data_->shape.size()); }
  Index numel() const { return data_->numel(); }
  Index extent(Index axis) const { return data_->shape.at(static_cast<size_t>(axis)); }

  const Array& values() const { return data_->values; }
  Array& mutable_values() { return data_->values; }
  const Array& grad() const { return data_->grad; }
  bool has_grad() const { return data_->grad.size() == data_->numel(); }
  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool v) { data_->requires_grad = v; }
  void zero_grad() { data_->grad = Array::Zero(data_->values.size()); }

  double value() const;            // numel()==1 only
  double at(Index flat) const { return data_->values(flat); }

  // Rank-2 views over the flat storage.
  ConstMatMap matrix() const;
  MatMap mutable_matrix();

  const std::shared_ptr<TensorData>& data() const { return data_; }

 private:
  std::shared_ptr<TensorData> data_;
};

struct TapeNode {
  const char* op;
  std::vector<std::shared_ptr<TensorData>> inputs;
  std::shared_ptr<TensorData> output;
  std::function<void()> backward;
};

// Explicit gradient tape. Constructing one makes it the active tape for the
// current thread; ops with a grad-requiring input append nodes. Nested tapes
// are not supported.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(TapeNode node) { nodes_.push_back(std::move(node)); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss)=1 and sweeps the tape in reverse. The tape is
  // cleared afterwards; intermediate grads die with their tensors.
  void backward(const Tensor& loss);

  // Test fixture: scales the upstream gradient of every node whose op name
  // matches, so a finite-difference check can prove it catches a bad rule.
  static void corrupt_backward(const char* op_name);

 private:
  std::vector<TapeNode> nodes_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, double b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor ln(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);

// y[r,c] = x[r,c] + bias[c]
Tensor add_rows(const Tensor& x, const Tensor& bias);

// ---- linear algebra ----
// [m,k]x[k,n] or batched [b,m,k]x[b,k,n]; a rank-2 operand against a rank-3
// one is broadcast across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- reductions ----
enum class Reduce { Sum, Mean, Max };
Tensor reduce_all(Reduce kind, const Tensor& a);
Tensor reduce_axis(Reduce kind, const Tensor& a, Index axis);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose2(const Tensor& a);  // swaps the last two axes
Tensor concat(Index axis, const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, Index axis, Index lo, Index hi);
Tensor stack(const std::vector<Tensor>& parts);  // new leading axis

// ---- normalization ----
Tensor softmax(const Tensor& a, Index axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Runs the active tape's reverse sweep from a scalar loss.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must be deterministic; it is evaluated under its own tape.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps = 1e-5);

// Same check restricted to chosen flat coordinates of x (for sampled
// whole-model sweeps where the full Jacobian would be too slow).
double finite_diff_check_coords(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                const std::vector<Index>& coords, double eps = 1e-5);

}  // namespace vtp::ad
