#include "nwqm/autodiff.hpp"

#include <cmath>

#include "nwqm/error.hpp"

namespace nwqm {

namespace {

void require_same_size(const Vector& a, const Vector& b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": operand sizes " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
}

// exp(x - max x) through libm: Eigen's packet exp clamps near -708 and returns
// denormals where the true value underflows to 0.
Vector shifted_exp(const Vector& x) {
  const double top = x.maxCoeff();
  return x.unaryExpr([top](double v) { return std::exp(v - top); });
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterSet

TensorId ParameterSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  if (by_name_.contains(name)) throw Error("duplicate tensor name: " + name);
  const TensorId id{static_cast<std::uint32_t>(tensors_.size())};
  by_name_.emplace(name, id);
  tensors_.push_back(Tensor{std::move(name), Matrix::Zero(rows, cols)});
  return id;
}

std::optional<TensorId> ParameterSet::find(std::string_view name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

TensorId ParameterSet::id(std::string_view name) const {
  if (auto found = find(name)) return *found;
  throw Error("unknown tensor: " + std::string(name));
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

// ---------------------------------------------------------------------------
// Gradients

Gradients::Gradients(const ParameterSet& params, std::span<const TensorId> trainable) : grads_(params.size()) {
  for (TensorId id : trainable) {
    const auto& value = params[id].value;
    grads_[id.index] = Matrix::Zero(value.rows(), value.cols());
  }
}

Matrix& Gradients::operator[](TensorId id) {
  if (!has(id)) throw Error("no gradient buffer for tensor #" + std::to_string(id.index));
  return *grads_[id.index];
}

const Matrix& Gradients::operator[](TensorId id) const {
  if (!has(id)) throw Error("no gradient buffer for tensor #" + std::to_string(id.index));
  return *grads_[id.index];
}

std::vector<TensorId> Gradients::ids() const {
  std::vector<TensorId> out;
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (grads_[i]) out.push_back(TensorId{static_cast<std::uint32_t>(i)});
  }
  return out;
}

void Gradients::zero() {
  for (auto& g : grads_) {
    if (g) g->setZero();
  }
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) {
    if (g) *g *= factor;
  }
}

void Gradients::accumulate(const Gradients& other) {
  if (other.grads_.size() != grads_.size()) throw Error("gradient sets belong to different parameter sets");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (grads_[i] && other.grads_[i]) *grads_[i] += *other.grads_[i];
  }
}

std::optional<std::string> Gradients::first_non_finite(const ParameterSet& params) const {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (grads_[i] && !grads_[i]->allFinite()) return params[TensorId{static_cast<std::uint32_t>(i)}].name;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(const ParameterSet& params) : params_(&params) {}

Tape::Tape(const ParameterSet& params, std::span<const TensorId> trainable)
    : params_(&params), trainable_(params.size(), false) {
  for (TensorId id : trainable) trainable_[id.index] = true;
}

Var Tape::push(Vector value, bool needs_grad, Adjoint adjoint) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) node.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Vector& g) {
  Node& node = nodes_[v.index];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

Var Tape::constant(Vector value) { return push(std::move(value), false, nullptr); }

Var Tape::parameter(TensorId id) {
  const Matrix& t = tensor(id);
  if (t.cols() != 1) throw DimensionError("tensor " + (*params_)[id].name + " is not a column vector");
  return push(t.col(0), trainable(id),
              [id](Tape&, Gradients& grads, const Vector& g) { grads[id].col(0) += g; });
}

Var Tape::matvec(TensorId weight, Var x) {
  const Matrix& w = tensor(weight);
  const Vector& xv = value(x);
  if (w.cols() != xv.size()) {
    throw DimensionError("tensor " + (*params_)[weight].name + " expects input of size " +
                         std::to_string(w.cols()) + ", got " + std::to_string(xv.size()));
  }
  const bool wt = trainable(weight);
  return push(w * xv, wt || needs_grad(x), [weight, x, wt](Tape& tape, Gradients& grads, const Vector& g) {
    if (wt) grads[weight].noalias() += g * tape.value(x).transpose();
    if (tape.needs_grad(x)) tape.accumulate(x, tape.tensor(weight).transpose() * g);
  });
}

Var Tape::affine(TensorId weight, TensorId bias, Var x) { return add(matvec(weight, x), parameter(bias)); }

Var Tape::embedding_mean(TensorId table, std::span<const std::int32_t> rows) {
  const Matrix& e = tensor(table);
  Vector out = Vector::Zero(e.cols());
  for (std::int32_t r : rows) {
    if (r < 0 || r >= e.rows()) throw DimensionError("embedding row " + std::to_string(r) + " out of range");
    out += e.row(r).transpose();
  }
  if (!rows.empty()) out /= static_cast<double>(rows.size());
  std::vector<std::int32_t> ids(rows.begin(), rows.end());
  const bool needs = trainable(table) && !ids.empty();
  return push(std::move(out), needs,
              [table, ids = std::move(ids)](Tape&, Gradients& grads, const Vector& g) {
                const double share = 1.0 / static_cast<double>(ids.size());
                Matrix& dst = grads[table];
                for (std::int32_t r : ids) dst.row(r) += share * g.transpose();
              });
}

Var Tape::add(Var a, Var b) {
  require_same_size(value(a), value(b), "add");
  return push(value(a) + value(b), needs_grad(a) || needs_grad(b),
              [a, b](Tape& tape, Gradients&, const Vector& g) {
                tape.accumulate(a, g);
                tape.accumulate(b, g);
              });
}

Var Tape::sub(Var a, Var b) {
  require_same_size(value(a), value(b), "sub");
  return push(value(a) - value(b), needs_grad(a) || needs_grad(b),
              [a, b](Tape& tape, Gradients&, const Vector& g) {
                tape.accumulate(a, g);
                if (tape.needs_grad(b)) tape.accumulate(b, -g);
              });
}

Var Tape::mul(Var a, Var b) {
  require_same_size(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), needs_grad(a) || needs_grad(b),
              [a, b](Tape& tape, Gradients&, const Vector& g) {
                if (tape.needs_grad(a)) tape.accumulate(a, g.cwiseProduct(tape.value(b)));
                if (tape.needs_grad(b)) tape.accumulate(b, g.cwiseProduct(tape.value(a)));
              });
}

Var Tape::abs(Var a) {
  return push(value(a).cwiseAbs(), needs_grad(a), [a](Tape& tape, Gradients&, const Vector& g) {
    const Vector& x = tape.value(a);
    Vector sign = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    tape.accumulate(a, g.cwiseProduct(sign));
  });
}

Var Tape::sigmoid(Var a) {
  Vector y = value(a).unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(y), needs_grad(a), [a, self](Tape& tape, Gradients&, const Vector& g) {
    const Vector& s = tape.nodes_[self].value;
    tape.accumulate(a, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var Tape::tanh(Var a) {
  Vector y = value(a).array().tanh().matrix();
  const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(y), needs_grad(a), [a, self](Tape& tape, Gradients&, const Vector& g) {
    const Vector& t = tape.nodes_[self].value;
    tape.accumulate(a, g.cwiseProduct((1.0 - t.array().square()).matrix()));
  });
}

Var Tape::one_minus(Var a) {
  return push((1.0 - value(a).array()).matrix(), needs_grad(a),
              [a](Tape& tape, Gradients&, const Vector& g) { tape.accumulate(a, -g); });
}

Var Tape::scale(Var a, Vector factors) {
  require_same_size(value(a), factors, "scale");
  Vector y = value(a).cwiseProduct(factors);
  return push(std::move(y), needs_grad(a), [a, factors = std::move(factors)](Tape& tape, Gradients&, const Vector& g) {
    tape.accumulate(a, g.cwiseProduct(factors));
  });
}

Var Tape::concat(std::span<const Var> parts) {
  Eigen::Index total = 0;
  bool grad = false;
  for (Var p : parts) {
    total += value(p).size();
    grad = grad || needs_grad(p);
  }
  Vector out(total);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    out.segment(offset, value(p).size()) = value(p);
    offset += value(p).size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), grad, [inputs = std::move(inputs)](Tape& tape, Gradients&, const Vector& g) {
    Eigen::Index off = 0;
    for (Var p : inputs) {
      const Eigen::Index n = tape.value(p).size();
      if (tape.needs_grad(p)) tape.accumulate(p, g.segment(off, n));
      off += n;
    }
  });
}

Var Tape::mean(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("mean of an empty list");
  Vector out = value(parts.front());
  bool grad = needs_grad(parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_same_size(out, value(parts[i]), "mean");
    out += value(parts[i]);
    grad = grad || needs_grad(parts[i]);
  }
  out /= static_cast<double>(parts.size());
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), grad, [inputs = std::move(inputs)](Tape& tape, Gradients&, const Vector& g) {
    const Vector share = g / static_cast<double>(inputs.size());
    for (Var p : inputs) tape.accumulate(p, share);
  });
}

Var Tape::dot(Var a, Var b) {
  require_same_size(value(a), value(b), "dot");
  Vector out(1);
  out(0) = value(a).dot(value(b));
  return push(std::move(out), needs_grad(a) || needs_grad(b), [a, b](Tape& tape, Gradients&, const Vector& g) {
    if (tape.needs_grad(a)) tape.accumulate(a, g(0) * tape.value(b));
    if (tape.needs_grad(b)) tape.accumulate(b, g(0) * tape.value(a));
  });
}

Var Tape::softmax(Var a) {
  const Vector& x = value(a);
  if (x.size() == 0) throw DimensionError("softmax of an empty vector");
  Vector e = shifted_exp(x);
  e /= e.sum();
  const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(e), needs_grad(a), [a, self](Tape& tape, Gradients&, const Vector& g) {
    const Vector& p = tape.nodes_[self].value;
    tape.accumulate(a, p.cwiseProduct((g.array() - g.dot(p)).matrix()));
  });
}

Var Tape::weighted_sum(Var weights, std::span<const Var> items) {
  const Vector& w = value(weights);
  if (items.empty() || static_cast<std::size_t>(w.size()) != items.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(w.size()) + " weights for " +
                         std::to_string(items.size()) + " items");
  }
  Vector out = w(0) * value(items.front());
  bool grad = needs_grad(weights) || needs_grad(items.front());
  for (std::size_t i = 1; i < items.size(); ++i) {
    require_same_size(out, value(items[i]), "weighted_sum");
    out += w(static_cast<Eigen::Index>(i)) * value(items[i]);
    grad = grad || needs_grad(items[i]);
  }
  std::vector<Var> inputs(items.begin(), items.end());
  return push(std::move(out), grad,
              [weights, inputs = std::move(inputs)](Tape& tape, Gradients&, const Vector& g) {
                const Vector& wv = tape.value(weights);
                Vector gw(wv.size());
                for (std::size_t i = 0; i < inputs.size(); ++i) {
                  const auto k = static_cast<Eigen::Index>(i);
                  gw(k) = g.dot(tape.value(inputs[i]));
                  if (tape.needs_grad(inputs[i])) tape.accumulate(inputs[i], wv(k) * g);
                }
                tape.accumulate(weights, gw);
              });
}

Var Tape::softmax_cross_entropy(Var logits, int label) {
  const Vector& z = value(logits);
  if (label < 0 || label >= z.size()) throw DimensionError("label outside logits");
  Vector p = shifted_exp(z);
  p /= p.sum();
  const double p_label = p(label);
  if (p_label < 1e-12) ++clamped_;
  Vector out(1);
  out(0) = -std::log(std::max(p_label, 1e-12));
  return push(std::move(out), needs_grad(logits),
              [logits, label, p = std::move(p)](Tape& tape, Gradients&, const Vector& g) {
                Vector d = p;
                d(label) -= 1.0;
                tape.accumulate(logits, g(0) * d);
              });
}

void Tape::backward(Var root, Gradients& grads) {
  if (value(root).size() != 1) throw DimensionError("backward root must be a scalar");
  for (auto& node : nodes_) node.grad.resize(0);
  if (!needs_grad(root)) return;
  nodes_[root.index].grad = Vector::Ones(1);
  for (std::size_t i = root.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad || node.grad.size() == 0 || !node.adjoint) continue;
    const Vector upstream = std::move(node.grad);
    node.grad.resize(0);
    node.adjoint(*this, grads, upstream);
  }
}

}  // namespace nwqm
