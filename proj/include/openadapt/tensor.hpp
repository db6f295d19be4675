#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage. Operations
// executed while a Tape is recording (see Tape::record) append a node to that
// tape whenever at least one input requires a gradient. Outside a recording
// scope every operation is a plain value computation.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace openadapt {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  Tape* tape = nullptr;  // set only for values produced by a recorded op
};
}  // namespace detail

class Tensor {
 public:
  Tensor();  // scalar zero

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  // Direct write access; intended for leaves (parameters, optimizer updates).
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  // Empty unless requires_grad; same length as data() otherwise.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  bool is_leaf() const { return node_->tape == nullptr; }
  const Tape* tape() const { return node_->tape; }

  // Value copy with no gradient tracking.
  Tensor detach() const;
  // Row r of a matrix as a rank-1 value copy.
  Tensor row(std::size_t r) const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  friend struct OpBuilder;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// Ordered record of differentiable operations for one forward pass.
// Confined to a single thread; the active tape is thread-local.
class Tape {
 public:
  // Receives the output gradient and the input nodes; adds into input grads.
  using BackwardFn = std::function<void(const detail::TensorNode& out,
                                        std::span<detail::TensorNode* const> inputs)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;
    ~Scope();

   private:
    Tape* previous_;
  };

  [[nodiscard]] Scope record() { return Scope(*this); }
  static Tape* active();

  // Populates grad() of every requires_grad leaf reachable from `loss`.
  // Leaf accumulators are zeroed first; shared subexpressions accumulate.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  void clear();

 private:
  friend struct OpBuilder;
  struct Record {
    std::vector<std::shared_ptr<detail::TensorNode>> inputs;
    std::shared_ptr<detail::TensorNode> output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
};

// Primitives. Every other differentiable expression is composed from these.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Same shape, or `b` a 1×n row broadcast over the rows of an m×n `a`.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
// Along the last dimension (per row for matrices), max-shifted.
Tensor softmax(const Tensor& logits);
inline constexpr double kLogClamp = 1e-12;
// log(max(x, kLogClamp)); zero derivative inside the clamped region.
Tensor log(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
// Subgradient 0 at the origin.
Tensor frobenius_norm(const Tensor& a);

// Max over coordinates of |analytic - central| / max(1, |central|), where
// analytic gradients come from one taped evaluation of `f` and the central
// differences perturb each coordinate of each tensor in `params` by ±step.
double finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params, double step);

}  // namespace openadapt
