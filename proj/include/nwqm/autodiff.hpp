#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nwqm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct TensorId {
  std::uint32_t index = 0;
  friend bool operator==(TensorId, TensorId) = default;
};

struct Tensor {
  std::string name;
  Matrix value;
};

/// Named, ordered collection of trainable tensors. Vectors are stored as n x 1 matrices.
class ParameterSet {
 public:
  TensorId add(std::string name, Eigen::Index rows, Eigen::Index cols = 1);

  Tensor& operator[](TensorId id) { return tensors_[id.index]; }
  const Tensor& operator[](TensorId id) const { return tensors_[id.index]; }

  std::optional<TensorId> find(std::string_view name) const;
  TensorId id(std::string_view name) const;

  std::size_t size() const { return tensors_.size(); }
  std::span<Tensor> tensors() { return tensors_; }
  std::span<const Tensor> tensors() const { return tensors_; }

  std::size_t scalar_count() const;

 private:
  std::vector<Tensor> tensors_;
  std::map<std::string, TensorId, std::less<>> by_name_;
};

/// Gradient buffers for a chosen subset of a ParameterSet. Frozen tensors have no buffer.
class Gradients {
 public:
  Gradients(const ParameterSet& params, std::span<const TensorId> trainable);

  bool has(TensorId id) const { return id.index < grads_.size() && grads_[id.index].has_value(); }
  Matrix& operator[](TensorId id);
  const Matrix& operator[](TensorId id) const;

  std::vector<TensorId> ids() const;

  void zero();
  void scale(double factor);
  /// this += other, visiting tensors in index order.
  void accumulate(const Gradients& other);

  /// Name of the first tensor holding a non-finite entry, if any.
  std::optional<std::string> first_non_finite(const ParameterSet& params) const;

 private:
  std::vector<std::optional<Matrix>> grads_;
};

struct Var {
  std::uint32_t index = 0;
};

/// Reverse-mode tape over a fixed operation set. Every op records its value and,
/// when any input needs a gradient, the adjoint that pushes its output gradient
/// back to those inputs. Parameters read through the tape accumulate into a
/// Gradients object on backward().
class Tape {
 public:
  /// Inference tape: nothing records adjoints.
  explicit Tape(const ParameterSet& params);
  /// Training tape: only tensors in `trainable` receive gradients.
  Tape(const ParameterSet& params, std::span<const TensorId> trainable);

  Var constant(Vector value);
  Var zeros(Eigen::Index n) { return constant(Vector::Zero(n)); }
  /// A column tensor read as a vector (biases, context vectors).
  Var parameter(TensorId id);

  Var matvec(TensorId weight, Var x);
  Var affine(TensorId weight, TensorId bias, Var x);
  /// Mean of the listed rows of an embedding table (zero vector when `rows` is empty).
  Var embedding_mean(TensorId table, std::span<const std::int32_t> rows);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// Elementwise |a|; the subgradient at exactly zero is 0.
  Var abs(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var one_minus(Var a);
  /// Elementwise product with a constant vector (dropout masks).
  Var scale(Var a, Vector factors);

  Var concat(std::span<const Var> parts);
  Var mean(std::span<const Var> parts);
  Var dot(Var a, Var b);
  Var softmax(Var a);
  /// sum_i weights[i] * items[i]
  Var weighted_sum(Var weights, std::span<const Var> items);

  /// Scalar -log(max(p_label, 1e-12)) with p = softmax(logits); clamped cases are counted.
  Var softmax_cross_entropy(Var logits, int label);

  const Vector& value(Var v) const { return nodes_[v.index].value; }
  double scalar(Var v) const { return nodes_[v.index].value(0); }
  bool needs_grad(Var v) const { return nodes_[v.index].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t clamped() const { return clamped_; }

  /// Propagates d(root)/d(.) into `grads`. `root` must be a scalar node.
  void backward(Var root, Gradients& grads);

 private:
  using Adjoint = std::function<void(Tape&, Gradients&, const Vector& upstream)>;

  struct Node {
    Vector value;
    Vector grad;
    bool needs_grad = false;
    Adjoint adjoint;
  };

  Var push(Vector value, bool needs_grad, Adjoint adjoint);
  void accumulate(Var v, const Vector& g);
  bool trainable(TensorId id) const { return id.index < trainable_.size() && trainable_[id.index]; }
  const Matrix& tensor(TensorId id) const { return (*params_)[id].value; }

  const ParameterSet* params_;
  std::vector<bool> trainable_;
  std::vector<Node> nodes_;
  std::size_t clamped_ = 0;
};

}  // namespace nwqm
