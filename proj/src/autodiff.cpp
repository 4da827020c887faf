#include "sae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sae/error.hpp"
#include "sae/kernels/kernels.hpp"

namespace sae::ad {
namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return "(" + std::to_string(r) + ", " + std::to_string(c) + ")";
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorKind::ShapeMismatch, "tensor data does not match shape " + shape_str(rows, cols));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw Error(ErrorKind::NonScalarLoss, "tensor is not 1 x 1");
  return data_[0];
}

Expr Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Expr{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Expr Graph::input(const std::string& name, std::size_t rows, std::size_t cols) {
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Input && n.name == name) {
      throw Error(ErrorKind::InvalidConfig, "duplicate input name '" + name + "'");
    }
  }
  Node n{OpKind::Input, rows, cols};
  n.name = name;
  return push(std::move(n));
}

Expr Graph::constant(Tensor value) {
  Node n{OpKind::Constant, value.rows(), value.cols()};
  n.value = std::move(value);
  return push(std::move(n));
}

Expr Graph::matmul(Expr a, Expr b) {
  const Node &na = node(a), &nb = node(b);
  if (na.cols != nb.rows) {
    throw Error(ErrorKind::ShapeMismatch, "matmul " + shape_str(na.rows, na.cols) + " x " +
                                              shape_str(nb.rows, nb.cols));
  }
  return push(Node{OpKind::MatMul, na.rows, nb.cols, a.id, b.id});
}

#define SAE_ELEMENTWISE_BINARY(fn, KIND)                                                       \
  Expr Graph::fn(Expr a, Expr b) {                                                             \
    const Node &na = node(a), &nb = node(b);                                                   \
    if (na.rows != nb.rows || na.cols != nb.cols) {                                            \
      throw Error(ErrorKind::ShapeMismatch, #fn " " + shape_str(na.rows, na.cols) + " vs " +   \
                                                shape_str(nb.rows, nb.cols));                  \
    }                                                                                          \
    return push(Node{OpKind::KIND, na.rows, na.cols, a.id, b.id});                             \
  }

SAE_ELEMENTWISE_BINARY(add, Add)
SAE_ELEMENTWISE_BINARY(subtract, Subtract)
SAE_ELEMENTWISE_BINARY(multiply, Multiply)
#undef SAE_ELEMENTWISE_BINARY

Expr Graph::scale(Expr a, double factor) {
  Node n{OpKind::Scale, node(a).rows, node(a).cols, a.id};
  n.p0 = factor;
  return push(std::move(n));
}

Expr Graph::elu(Expr a) { return push(Node{OpKind::Elu, node(a).rows, node(a).cols, a.id}); }
Expr Graph::exp(Expr a) { return push(Node{OpKind::Exp, node(a).rows, node(a).cols, a.id}); }
Expr Graph::log(Expr a) { return push(Node{OpKind::Log, node(a).rows, node(a).cols, a.id}); }
Expr Graph::square(Expr a) { return push(Node{OpKind::Square, node(a).rows, node(a).cols, a.id}); }
Expr Graph::sum(Expr a) { return push(Node{OpKind::Sum, 1, 1, a.id}); }

Expr Graph::row_broadcast_add(Expr a, Expr b) {
  const Node &na = node(a), &nb = node(b);
  if (nb.rows != 1 || nb.cols != na.cols) {
    throw Error(ErrorKind::ShapeMismatch, "row broadcast of " + shape_str(nb.rows, nb.cols) +
                                              " onto " + shape_str(na.rows, na.cols));
  }
  return push(Node{OpKind::RowBroadcastAdd, na.rows, na.cols, a.id, b.id});
}

Expr Graph::clamp(Expr a, double lo, double hi) {
  if (!(lo <= hi)) throw Error(ErrorKind::InvalidConfig, "clamp bounds inverted");
  Node n{OpKind::Clamp, node(a).rows, node(a).cols, a.id};
  n.p0 = lo;
  n.p1 = hi;
  return push(std::move(n));
}

std::vector<std::string> Graph::input_names() const {
  std::vector<std::string> names;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Input) names.push_back(n.name);
  }
  return names;
}

Graph::Evaluation Graph::forward(Expr out, const Bindings& bindings) const {
  const auto& k = kernels::active();
  const std::size_t count = out.id + 1;
  Evaluation ev;
  ev.owned.resize(count);
  ev.view.resize(count);
  ev.live.assign(count, false);
  ev.live[out.id] = true;
  for (std::size_t i = count; i-- > 0;) {
    if (!ev.live[i]) continue;
    const Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::Input:
      case OpKind::Constant:
        break;
      case OpKind::MatMul:
      case OpKind::Add:
      case OpKind::Subtract:
      case OpKind::Multiply:
      case OpKind::RowBroadcastAdd:
        ev.live[n.a] = true;
        ev.live[n.b] = true;
        break;
      default:
        ev.live[n.a] = true;
    }
  }

  for (std::size_t i = 0; i < count; ++i) {
    if (!ev.live[i]) continue;
    const Node& n = nodes_[i];
    if (n.kind == OpKind::Input) {
      const TensorView* v = bindings.find(n.name);
      if (v == nullptr) throw Error(ErrorKind::UnboundInput, "input '" + n.name + "' is not bound");
      if (v->rows != n.rows || v->cols != n.cols) {
        throw Error(ErrorKind::ShapeMismatch, "input '" + n.name + "' declared " +
                                                  shape_str(n.rows, n.cols) + ", bound " +
                                                  shape_str(v->rows, v->cols));
      }
      ev.view[i] = *v;
      continue;
    }
    if (n.kind == OpKind::Constant) {
      ev.view[i] = TensorView(n.value);
      continue;
    }
    Tensor t(n.rows, n.cols);
    const TensorView& a = ev.view[n.a];
    const std::size_t sz = t.size();
    double* y = t.data();
    switch (n.kind) {
      case OpKind::MatMul: {
        const TensorView& b = ev.view[n.b];
        k.gemm_nn(a.rows, b.cols, a.cols, a.data, b.data, y, false);
        break;
      }
      case OpKind::Add: {
        const double* b = ev.view[n.b].data;
        for (std::size_t j = 0; j < sz; ++j) y[j] = a.data[j] + b[j];
        break;
      }
      case OpKind::Subtract: {
        const double* b = ev.view[n.b].data;
        for (std::size_t j = 0; j < sz; ++j) y[j] = a.data[j] - b[j];
        break;
      }
      case OpKind::Multiply:
        k.mul(sz, a.data, ev.view[n.b].data, y);
        break;
      case OpKind::Scale:
        for (std::size_t j = 0; j < sz; ++j) y[j] = n.p0 * a.data[j];
        break;
      case OpKind::Elu:
        k.elu_forward(sz, a.data, y);
        break;
      case OpKind::Exp:
        for (std::size_t j = 0; j < sz; ++j) y[j] = std::exp(a.data[j]);
        break;
      case OpKind::Log:
        for (std::size_t j = 0; j < sz; ++j) y[j] = std::log(a.data[j]);
        break;
      case OpKind::Square:
        k.mul(sz, a.data, a.data, y);
        break;
      case OpKind::Sum: {
        double s = 0.0;
        for (std::size_t j = 0; j < a.rows * a.cols; ++j) s += a.data[j];
        y[0] = s;
        break;
      }
      case OpKind::RowBroadcastAdd: {
        const double* b = ev.view[n.b].data;
        for (std::size_t r = 0; r < n.rows; ++r) {
          for (std::size_t c = 0; c < n.cols; ++c) y[r * n.cols + c] = a.data[r * n.cols + c] + b[c];
        }
        break;
      }
      case OpKind::Clamp:
        for (std::size_t j = 0; j < sz; ++j) y[j] = std::clamp(a.data[j], n.p0, n.p1);
        break;
      case OpKind::Input:
      case OpKind::Constant:
        break;
    }
    ev.owned[i] = std::move(t);
    ev.view[i] = TensorView(ev.owned[i]);
  }
  return ev;
}

std::map<std::string, Tensor> Graph::backward(Expr out, const Evaluation& ev, const Tensor& seed,
                                              const std::vector<bool>& wanted_inputs) const {
  const auto& k = kernels::active();
  const std::size_t count = out.id + 1;

  // needs[i]: node i is live and some wanted input lies beneath it
  std::vector<bool> needs(count, false);
  for (std::size_t i = 0; i < count; ++i) {
    if (!ev.live[i]) continue;
    const Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::Input:
        needs[i] = wanted_inputs[i];
        break;
      case OpKind::Constant:
        break;
      case OpKind::MatMul:
      case OpKind::Add:
      case OpKind::Subtract:
      case OpKind::Multiply:
      case OpKind::RowBroadcastAdd:
        needs[i] = needs[n.a] || needs[n.b];
        break;
      default:
        needs[i] = needs[n.a];
    }
  }

  std::vector<Tensor> grad(count);
  std::vector<bool> has(count, false);
  auto acc = [&](std::uint32_t id) -> Tensor& {
    if (!has[id]) {
      grad[id] = Tensor(nodes_[id].rows, nodes_[id].cols);
      has[id] = true;
    }
    return grad[id];
  };
  if (needs[out.id]) {
    grad[out.id] = seed;
    has[out.id] = true;
  }

  for (std::size_t i = count; i-- > 0;) {
    if (!needs[i] || !has[i]) continue;
    const Node& n = nodes_[i];
    if (n.kind == OpKind::Input) continue;
    const Tensor& g = grad[i];
    const std::size_t sz = g.size();
    const TensorView& a = ev.view[n.a];
    switch (n.kind) {
      case OpKind::MatMul: {
        const TensorView& b = ev.view[n.b];
        if (needs[n.a]) k.gemm_nt(a.rows, a.cols, b.cols, g.data(), b.data, acc(n.a).data(), true);
        if (needs[n.b]) k.gemm_tn(b.rows, b.cols, a.rows, a.data, g.data(), acc(n.b).data(), true);
        break;
      }
      case OpKind::Add:
        if (needs[n.a]) k.axpy(sz, 1.0, g.data(), acc(n.a).data());
        if (needs[n.b]) k.axpy(sz, 1.0, g.data(), acc(n.b).data());
        break;
      case OpKind::Subtract:
        if (needs[n.a]) k.axpy(sz, 1.0, g.data(), acc(n.a).data());
        if (needs[n.b]) k.axpy(sz, -1.0, g.data(), acc(n.b).data());
        break;
      case OpKind::Multiply: {
        const TensorView& b = ev.view[n.b];
        if (needs[n.a]) {
          double* ga = acc(n.a).data();
          for (std::size_t j = 0; j < sz; ++j) ga[j] += g.data()[j] * b.data[j];
        }
        if (needs[n.b]) {
          double* gb = acc(n.b).data();
          for (std::size_t j = 0; j < sz; ++j) gb[j] += g.data()[j] * a.data[j];
        }
        break;
      }
      case OpKind::Scale:
        k.axpy(sz, n.p0, g.data(), acc(n.a).data());
        break;
      case OpKind::Elu:
        k.elu_backward(sz, a.data, g.data(), acc(n.a).data(), true);
        break;
      case OpKind::Exp: {
        const double* y = ev.view[i].data;
        double* ga = acc(n.a).data();
        for (std::size_t j = 0; j < sz; ++j) ga[j] += g.data()[j] * y[j];
        break;
      }
      case OpKind::Log: {
        double* ga = acc(n.a).data();
        for (std::size_t j = 0; j < sz; ++j) ga[j] += g.data()[j] / a.data[j];
        break;
      }
      case OpKind::Square: {
        double* ga = acc(n.a).data();
        for (std::size_t j = 0; j < sz; ++j) ga[j] += 2.0 * a.data[j] * g.data()[j];
        break;
      }
      case OpKind::Sum: {
        double* ga = acc(n.a).data();
        const double g0 = g.data()[0];
        for (std::size_t j = 0; j < a.rows * a.cols; ++j) ga[j] += g0;
        break;
      }
      case OpKind::RowBroadcastAdd: {
        if (needs[n.a]) k.axpy(sz, 1.0, g.data(), acc(n.a).data());
        if (needs[n.b]) {
          double* gb = acc(n.b).data();
          for (std::size_t r = 0; r < n.rows; ++r) {
            for (std::size_t c = 0; c < n.cols; ++c) gb[c] += g.data()[r * n.cols + c];
          }
        }
        break;
      }
      case OpKind::Clamp: {
        double* ga = acc(n.a).data();
        for (std::size_t j = 0; j < sz; ++j) {
          if (a.data[j] >= n.p0 && a.data[j] <= n.p1) ga[j] += g.data()[j];
        }
        break;
      }
      case OpKind::Input:
      case OpKind::Constant:
        break;
    }
  }

  std::map<std::string, Tensor> result;
  for (std::size_t i = 0; i < count; ++i) {
    if (nodes_[i].kind != OpKind::Input || !wanted_inputs[i]) continue;
    result[nodes_[i].name] = has[i] ? std::move(grad[i]) : Tensor(nodes_[i].rows, nodes_[i].cols);
  }
  // wanted inputs that do not feed `out` still get zero gradients
  for (std::size_t i = count; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Input && i < wanted_inputs.size() && wanted_inputs[i]) {
      result[nodes_[i].name] = Tensor(nodes_[i].rows, nodes_[i].cols);
    }
  }
  return result;
}

Tensor Graph::evaluate(Expr out, const Bindings& bindings) const {
  const Evaluation ev = forward(out, bindings);
  const TensorView& v = ev.view[out.id];
  return Tensor(v.rows, v.cols, std::vector<double>(v.data, v.data + v.rows * v.cols));
}

GradientResult Graph::gradient(Expr loss, const Bindings& bindings) const {
  const Node& n = node(loss);
  if (n.rows != 1 || n.cols != 1) {
    throw Error(ErrorKind::NonScalarLoss, "loss has shape " + shape_str(n.rows, n.cols));
  }
  const Evaluation ev = forward(loss, bindings);
  std::vector<bool> wanted(nodes_.size(), false);
  for (std::size_t i = 0; i < nodes_.size(); ++i) wanted[i] = nodes_[i].kind == OpKind::Input;
  GradientResult result;
  result.value = ev.view[loss.id].data[0];
  result.grads = backward(loss, ev, Tensor::scalar(1.0), wanted);
  return result;
}

VjpResult Graph::vjp(Expr out, const Bindings& bindings, const Tensor& seed,
                     std::span<const std::string> wrt) const {
  const Node& n = node(out);
  if (seed.rows() != n.rows || seed.cols() != n.cols) {
    throw Error(ErrorKind::ShapeMismatch, "vjp seed " + shape_str(seed.rows(), seed.cols()) +
                                              " for output " + shape_str(n.rows, n.cols));
  }
  std::vector<bool> wanted(nodes_.size(), false);
  for (const std::string& name : wrt) {
    bool found = false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].kind == OpKind::Input && nodes_[i].name == name) {
        wanted[i] = true;
        found = true;
      }
    }
    if (!found) throw Error(ErrorKind::UnboundInput, "no input named '" + name + "'");
  }
  const Evaluation ev = forward(out, bindings);
  VjpResult result;
  const TensorView& v = ev.view[out.id];
  result.value = Tensor(v.rows, v.cols, std::vector<double>(v.data, v.data + v.rows * v.cols));
  result.grads = backward(out, ev, seed, wanted);
  return result;
}

Graph::Tape Graph::record(Expr out, const Bindings& bindings) const {
  Tape tape;
  tape.out_ = out;
  tape.eval_ = forward(out, bindings);
  return tape;
}

std::map<std::string, Tensor> Graph::pullback(const Tape& tape, const Tensor& seed,
                                              std::span<const std::string> wrt) const {
  const Node& n = node(tape.out_);
  if (seed.rows() != n.rows || seed.cols() != n.cols) {
    throw Error(ErrorKind::ShapeMismatch, "pullback seed " + shape_str(seed.rows(), seed.cols()) +
                                              " for output " + shape_str(n.rows, n.cols));
  }
  std::vector<bool> wanted(nodes_.size(), false);
  for (const std::string& name : wrt) {
    bool found = false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].kind == OpKind::Input && nodes_[i].name == name) {
        wanted[i] = true;
        found = true;
      }
    }
    if (!found) throw Error(ErrorKind::UnboundInput, "no input named '" + name + "'");
  }
  return backward(tape.out_, tape.eval_, seed, wanted);
}

std::vector<Tensor> Graph::evaluate_many(std::span<const Expr> outs, const Bindings& bindings) const {
  if (outs.empty()) return {};
  // one pass for the latest output; anything not beneath it is evaluated on its own
  Expr top = outs[0];
  for (Expr e : outs) top = e.id > top.id ? e : top;
  Evaluation ev = forward(top, bindings);
  for (Expr e : outs) {
    if (!ev.live[e.id]) {
      // not an ancestor of `top`; evaluate separately
      Evaluation extra = forward(e, bindings);
      ev.owned[e.id] = Tensor(extra.view[e.id].rows, extra.view[e.id].cols,
                              std::vector<double>(extra.view[e.id].data,
                                                  extra.view[e.id].data +
                                                      extra.view[e.id].rows * extra.view[e.id].cols));
      ev.view[e.id] = TensorView(ev.owned[e.id]);
      ev.live[e.id] = true;
    }
  }
  std::vector<Tensor> out;
  for (Expr e : outs) {
    const TensorView& v = ev.view[e.id];
    out.emplace_back(v.rows, v.cols, std::vector<double>(v.data, v.data + v.rows * v.cols));
  }
  return out;
}

GradientCheck Graph::check_gradient(Expr loss, const Bindings& bindings, double eps,
                                    std::size_t max_coordinates, std::uint64_t seed) const {
  const GradientResult analytic = gradient(loss, bindings);

  // private copies of every bound input so they can be perturbed
  std::map<std::string, Tensor> copies;
  Bindings local;
  for (const Node& n : nodes_) {
    if (n.kind != OpKind::Input) continue;
    const TensorView* v = bindings.find(n.name);
    if (v == nullptr) throw Error(ErrorKind::UnboundInput, "input '" + n.name + "' is not bound");
    copies[n.name] = Tensor(v->rows, v->cols, std::vector<double>(v->data, v->data + v->rows * v->cols));
  }
  for (auto& [name, t] : copies) local.bind(name, t);

  struct Coord {
    std::string name;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (const auto& [name, t] : copies) {
    for (std::size_t j = 0; j < t.size(); ++j) coords.push_back({name, j});
  }
  if (coords.size() > max_coordinates) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coordinates);
  }

  std::vector<std::uint32_t> elu_inputs;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Elu) elu_inputs.push_back(n.a);
  }
  // Input views alias the perturbed storage, so signs are read right after each pass.
  auto elu_signs = [&](const Evaluation& ev) {
    std::vector<bool> signs;
    for (std::uint32_t id : elu_inputs) {
      if (id > loss.id || !ev.live[id]) continue;
      const TensorView& v = ev.view[id];
      for (std::size_t j = 0; j < v.rows * v.cols; ++j) signs.push_back(v.data[j] >= 0.0);
    }
    return signs;
  };

  GradientCheck result;
  for (const Coord& c : coords) {
    double& x = copies[c.name].data()[c.index];
    const double x0 = x;
    x = x0 + eps;
    const Evaluation plus = forward(loss, local);
    const double fp = plus.view[loss.id].data[0];
    const std::vector<bool> plus_signs = elu_signs(plus);
    x = x0 - eps;
    const Evaluation minus = forward(loss, local);
    const double fm = minus.view[loss.id].data[0];
    const bool crossed = plus_signs != elu_signs(minus);
    x = x0;
    if (crossed) {
      ++result.excluded_near_kink;
      continue;
    }
    const double fd = (fp - fm) / (2.0 * eps);
    const double ad = analytic.grads.at(c.name).data()[c.index];
    const double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
    result.max_relative_error = std::max(result.max_relative_error, err);
    ++result.checked;
  }
  return result;
}

}  // namespace sae::ad
