#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors with a
// fixed operation vocabulary. A Graph is built once (shapes are checked at
// construction) and is immutable afterwards; every evaluate/gradient call
// uses its own scratch storage, so one graph may be evaluated concurrently.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sae::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Non-owning view used to bind inputs without copying.
struct TensorView {
  std::size_t rows = 0;
  std::size_t cols = 0;
  const double* data = nullptr;

  TensorView() = default;
  TensorView(std::size_t r, std::size_t c, const double* d) : rows(r), cols(c), data(d) {}
  TensorView(const Tensor& t) : rows(t.rows()), cols(t.cols()), data(t.data()) {}  // NOLINT
};

class Bindings {
 public:
  Bindings& bind(const std::string& name, TensorView view) {
    views_[name] = view;
    return *this;
  }
  const TensorView* find(const std::string& name) const {
    auto it = views_.find(name);
    return it == views_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<std::string, TensorView> views_;
};

enum class OpKind : std::uint8_t {
  Input,
  Constant,
  MatMul,
  Add,
  Subtract,
  Multiply,
  Scale,
  Elu,
  Exp,
  Log,
  Square,
  Sum,
  RowBroadcastAdd,
  Clamp,
};

struct Expr {
  std::uint32_t id = 0;
};

struct GradientResult {
  double value = 0.0;
  std::map<std::string, Tensor> grads;  // per input, same shape as the input
};

struct VjpResult {
  Tensor value;
  std::map<std::string, Tensor> grads;
};

struct GradientCheck {
  double max_relative_error = 0.0;  // |ad - fd| / max(1, |ad|, |fd|)
  std::size_t checked = 0;
  std::size_t excluded_near_kink = 0;
};

class Graph {
 public:
  Expr input(const std::string& name, std::size_t rows, std::size_t cols);
  Expr constant(Tensor value);
  Expr matmul(Expr a, Expr b);
  Expr add(Expr a, Expr b);
  Expr subtract(Expr a, Expr b);
  Expr multiply(Expr a, Expr b);
  Expr scale(Expr a, double factor);
  Expr elu(Expr a);
  Expr exp(Expr a);
  Expr log(Expr a);
  Expr square(Expr a);
  Expr sum(Expr a);
  /// a (m x n) plus the 1 x n row vector b added to every row.
  Expr row_broadcast_add(Expr a, Expr b);
  /// Elementwise clamp to [lo, hi]; the gradient is zero outside the range.
  Expr clamp(Expr a, double lo, double hi);

  std::size_t rows(Expr e) const { return nodes_.at(e.id).rows; }
  std::size_t cols(Expr e) const { return nodes_.at(e.id).cols; }
  OpKind kind(Expr e) const { return nodes_.at(e.id).kind; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::vector<std::string> input_names() const;

  /// Forward value of `out`. Throws Error{UnboundInput|ShapeMismatch}.
  Tensor evaluate(Expr out, const Bindings& bindings) const;

  /// Value and gradient of a 1 x 1 expression w.r.t. every input.
  /// Throws Error{NonScalarLoss} for other shapes.
  GradientResult gradient(Expr loss, const Bindings& bindings) const;

  /// Vector-Jacobian product: value of `out` and seed^T d out / d input for
  /// the named inputs only.
  VjpResult vjp(Expr out, const Bindings& bindings, const Tensor& seed,
                std::span<const std::string> wrt) const;

  /// Forward pass kept for a later pullback; lets callers inspect the output
  /// before choosing the seed. Views inside point at the bound inputs, which
  /// must outlive the tape.
  class Tape;
  Tape record(Expr out, const Bindings& bindings) const;
  std::map<std::string, Tensor> pullback(const Tape& tape, const Tensor& seed,
                                         std::span<const std::string> wrt) const;

  /// Forward values of several outputs from a single pass.
  std::vector<Tensor> evaluate_many(std::span<const Expr> outs, const Bindings& bindings) const;

  /// Central-difference comparison over every input coordinate (a random
  /// subset of max_coordinates when there are more). Coordinates whose
  /// perturbation moves any ELU input across zero are excluded.
  GradientCheck check_gradient(Expr loss, const Bindings& bindings, double eps,
                               std::size_t max_coordinates = 1000,
                               std::uint64_t seed = 0) const;

 private:
  struct Node {
    OpKind kind;
    std::size_t rows;
    std::size_t cols;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double p0 = 0.0;
    double p1 = 0.0;
    std::string name{};  // Input
    Tensor value{};      // Constant
  };

  struct Evaluation {
    std::vector<Tensor> owned;     // computed node values
    std::vector<TensorView> view;  // every live node: inputs/constants point at their storage
    std::vector<bool> live;        // ancestors of the requested output
  };

  Expr push(Node node);
  const Node& node(Expr e) const { return nodes_.at(e.id); }
  Evaluation forward(Expr out, const Bindings& bindings) const;
  std::map<std::string, Tensor> backward(Expr out, const Evaluation& eval, const Tensor& seed,
                                         const std::vector<bool>& wanted_inputs) const;

  std::vector<Node> nodes_;
};

class Graph::Tape {
 public:
  TensorView value() const { return eval_.view[out_.id]; }

 private:
  friend class Graph;
  Expr out_;
  Evaluation eval_;
};

}  // namespace sae::ad
