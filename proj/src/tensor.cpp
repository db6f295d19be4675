#include "openadapt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace openadapt {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor() : node_(std::make_shared<detail::TensorNode>()) { node_->data.assign(1, 0.0); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto node = std::make_shared<detail::TensorNode>();
  node->data.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(m * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw ShapeError("Tensor::matrix: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return from({m, n}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return from({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix " + shape_string(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix " + shape_string(shape()));
  return shape()[1];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad on a recorded (non-leaf) tensor");
  node_->requires_grad = on;
  if (on) {
    node_->grad.assign(node_->data.size(), 0.0);
  } else {
    node_->grad.clear();
  }
  return *this;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->data); }

Tensor Tensor::row(std::size_t r) const {
  const std::size_t n = cols();
  if (r >= rows()) throw std::out_of_range("Tensor::row index out of range");
  auto first = node_->data.begin() + static_cast<std::ptrdiff_t>(r * n);
  return from({n}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

// ---------------------------------------------------------------- Tape

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

Tape::~Tape() { clear(); }

void Tape::clear() {
  for (auto& rec : records_) {
    rec.output->tape = nullptr;
    rec.output->requires_grad = false;
    rec.output->grad.clear();
  }
  records_.clear();
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(loss.shape()));
  }
  if (loss.node_->tape != this) {
    throw std::logic_error("backward: loss is not recorded on this tape");
  }
  std::size_t last = records_.size();
  while (last > 0 && records_[last - 1].output != loss.node_) --last;

  for (std::size_t r = 0; r < last; ++r) {
    for (auto& in : records_[r].inputs) {
      if (in->requires_grad) in->grad.assign(in->data.size(), 0.0);
    }
    records_[r].output->grad.assign(records_[r].output->data.size(), 0.0);
  }
  loss.node_->grad[0] = 1.0;

  std::vector<detail::TensorNode*> inputs;
  for (std::size_t r = last; r-- > 0;) {
    const Record& rec = records_[r];
    inputs.clear();
    for (const auto& in : rec.inputs) inputs.push_back(in.get());
    rec.backward(*rec.output, inputs);
  }
}

// ---------------------------------------------------------------- ops

struct OpBuilder {
  static Tensor make(Shape shape, std::vector<double> data) {
    return Tensor::from(std::move(shape), std::move(data));
  }

  static detail::TensorNode& node(const Tensor& t) { return *t.node_; }

  static Tensor finish(Tensor out, std::initializer_list<const Tensor*> inputs,
                       Tape::BackwardFn fn) {
    Tape* tape = Tape::active();
    if (tape == nullptr) return out;
    bool tracked = false;
    for (const Tensor* in : inputs) {
      if (in->node_->tape != nullptr && in->node_->tape != tape) {
        throw std::logic_error("operation mixes tensors from different tapes");
      }
      tracked = tracked || in->node_->requires_grad;
    }
    if (!tracked) return out;
    out.node_->requires_grad = true;
    out.node_->tape = tape;
    Tape::Record rec;
    for (const Tensor* in : inputs) rec.inputs.push_back(in->node_);
    rec.output = out.node_;
    rec.backward = std::move(fn);
    tape->records_.push_back(std::move(rec));
    return out;
  }
};

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// out(m×n) += a(m×k)·b(k×n), with optional transposition of either operand's storage.
void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
              std::size_t n, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      double* orow = out + i * n;
      if (!trans_b) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_string(a.shape()) + " · " +
                     shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n, false, false);
  return OpBuilder::finish(
      OpBuilder::make({m, n}, std::move(out)), {&a, &b},
      [m, k, n](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        detail::TensorNode& A = *in[0];
        detail::TensorNode& B = *in[1];
        if (A.requires_grad) gemm_acc(o.grad.data(), B.data.data(), A.grad.data(), m, n, k, false, true);
        if (B.requires_grad) gemm_acc(A.data.data(), o.grad.data(), B.grad.data(), k, m, n, true, false);
      });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return OpBuilder::finish(
      OpBuilder::make({n, m}, std::move(out)), {&a},
      [m, n](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad) return;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) in[0]->grad[i * n + j] += o.grad[j * m + i];
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast) {
    const bool row_ok = a.rank() == 2 && b.rank() == 2 && b.rows() == 1 && b.cols() == a.cols();
    if (!row_ok) {
      throw ShapeError("add: incompatible shapes " + shape_string(a.shape()) + " and " +
                       shape_string(b.shape()));
    }
  }
  const std::size_t n = broadcast ? b.size() : a.size();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i % n];
  return OpBuilder::finish(
      OpBuilder::make(a.shape(), std::move(out)), {&a, &b},
      [n](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (in[0]->requires_grad)
          for (std::size_t i = 0; i < o.grad.size(); ++i) in[0]->grad[i] += o.grad[i];
        if (in[1]->requires_grad)
          for (std::size_t i = 0; i < o.grad.size(); ++i) in[1]->grad[i % n] += o.grad[i];
      });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return OpBuilder::finish(
      OpBuilder::make(a.shape(), std::move(out)), {&a, &b},
      [](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        detail::TensorNode& A = *in[0];
        detail::TensorNode& B = *in[1];
        if (A.requires_grad)
          for (std::size_t i = 0; i < o.grad.size(); ++i) A.grad[i] += o.grad[i] * B.data[i];
        if (B.requires_grad)
          for (std::size_t i = 0; i < o.grad.size(); ++i) B.grad[i] += o.grad[i] * A.data[i];
      });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return OpBuilder::finish(
      OpBuilder::make(a.shape(), std::move(out)), {&a},
      [factor](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) in[0]->grad[i] += factor * o.grad[i];
      });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return OpBuilder::finish(
      OpBuilder::make(a.shape(), std::move(out)), {&a},
      [](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          if (in[0]->data[i] > 0.0) in[0]->grad[i] += o.grad[i];
      });
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 && logits.rank() != 2) {
    throw ShapeError("softmax: expected vector or matrix, got " + shape_string(logits.shape()));
  }
  const std::size_t n = logits.shape().back();
  const std::size_t m = n == 0 ? 0 : logits.size() / n;
  const auto x = logits.data();
  std::vector<double> out(logits.size());
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    const double shift = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - shift);
      total += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
  }
  return OpBuilder::finish(
      OpBuilder::make(logits.shape(), std::move(out)), {&logits},
      [m, n](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad) return;
        for (std::size_t r = 0; r < m; ++r) {
          const double* y = o.data.data() + r * n;
          const double* g = o.grad.data() + r * n;
          double inner = 0.0;
          for (std::size_t j = 0; j < n; ++j) inner += g[j] * y[j];
          double* gx = in[0]->grad.data() + r * n;
          for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - inner);
        }
      });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(x[i], kLogClamp));
  return OpBuilder::finish(
      OpBuilder::make(a.shape(), std::move(out)), {&a},
      [](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          const double v = in[0]->data[i];
          if (v > kLogClamp) in[0]->grad[i] += o.grad[i] / v;
        }
      });
}

Tensor pow(const Tensor& a, double exponent) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(x[i], exponent);
  return OpBuilder::finish(
      OpBuilder::make(a.shape(), std::move(out)), {&a},
      [exponent](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad) return;
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          in[0]->grad[i] += o.grad[i] * exponent * std::pow(in[0]->data[i], exponent - 1.0);
        }
      });
}

Tensor sum(const Tensor& a) {
  const auto x = a.data();
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  return OpBuilder::finish(
      OpBuilder::make({}, {total}), {&a},
      [](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad) return;
        for (double& g : in[0]->grad) g += o.grad[0];
      });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  const auto x = a.data();
  const auto y = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += x[i] * y[i];
  return OpBuilder::finish(
      OpBuilder::make({}, {total}), {&a, &b},
      [](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        const double g = o.grad[0];
        detail::TensorNode& A = *in[0];
        detail::TensorNode& B = *in[1];
        if (A.requires_grad)
          for (std::size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += g * B.data[i];
        if (B.requires_grad)
          for (std::size_t i = 0; i < B.grad.size(); ++i) B.grad[i] += g * A.data[i];
      });
}

Tensor frobenius_norm(const Tensor& a) {
  const auto x = a.data();
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double norm = std::sqrt(sq);
  return OpBuilder::finish(
      OpBuilder::make({}, {norm}), {&a},
      [norm](const detail::TensorNode& o, std::span<detail::TensorNode* const> in) {
        if (!in[0]->requires_grad || norm == 0.0) return;
        const double g = o.grad[0] / norm;
        for (std::size_t i = 0; i < in[0]->grad.size(); ++i) in[0]->grad[i] += g * in[0]->data[i];
      });
}

double finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  for (Tensor& p : params) {
    if (!p.requires_grad()) p.set_requires_grad(true);
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor loss;
    {
      auto scope = tape.record();
      loss = f();
    }
    if (loss.is_leaf()) {
      // Loss independent of every parameter.
      for (Tensor& p : params) p.zero_grad();
    } else {
      tape.backward(loss);
    }
    for (const Tensor& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = f().item();
      values[i] = saved - step;
      const double down = f().item();
      values[i] = saved;
      const double central = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[t][i] - central) / std::max(1.0, std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace openadapt
