#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lsd/tensor.hpp"

/// Reverse-mode differentiation over a per-step tape.
///
/// A `Tape` owns every value produced during a forward pass. Operations are
/// free functions that take `Var` handles and append one node each, so
/// parents always precede children and `backward` is a reverse sweep.
namespace lsd::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  /// Called during the reverse sweep with the node's accumulated gradient
  /// and its forward value.
  using Backward = std::function<void(Tape&, const Tensor& upstream, const Tensor& output)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Tensor value);
  /// Leaf excluded from differentiation.
  Var constant(Tensor value);
  /// Appends an op node. `fn` runs only if some parent needs a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward fn);
  Var record(const char* op, Tensor value, const std::vector<Var>& parents, Backward fn);

  /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  /// Gradient of a node after `backward`; zeros if nothing flowed into it.
  const Tensor& grad(Var v);
  bool needs_grad(Var v) const { return nodes_[v.id_].needs_grad; }

  /// Gradient buffer of `v` for in-place accumulation, or nullptr when `v`
  /// does not participate in differentiation.
  double* grad_data(Var v);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  const char* op_name(Var v) const { return nodes_[v.id_].op; }
  std::span<const std::uint32_t> parents(Var v) const { return nodes_[v.id_].parents; }

 private:
  struct Node {
    const char* op;
    Tensor value;
    Tensor grad;
    std::vector<std::uint32_t> parents;
    Backward backward;
    bool needs_grad = false;
  };
  Var push(Node node);
  std::vector<Node> nodes_;
};

// ---- Operations. Shape errors throw ValidationError naming op and shapes.

/// [m x k] * [k x n]
Var matmul(Var a, Var b);
Var transpose(Var a);
/// Elementwise with equal shapes, or `b` 1-D matching the last axis of `a`
/// (broadcast over leading axes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var abs(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var reshape(Var a, Shape shape);
/// Concatenation along `axis`.
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Reduction over one axis, which is removed.
Var sum(Var a, std::size_t axis);
Var sum_all(Var a);
Var mean_all(Var a);
/// Softmax over the last axis.
Var softmax(Var a);
/// Mean negative log-likelihood of `labels` under softmax(logits); logits [N x C].
Var cross_entropy(Var logits, std::span<const int> labels);
/// Mean negative log of probs[i, labels[i]]; probs [N x C].
Var nll_of_probs(Var probs, std::span<const int> labels);
/// Sum of squared entries.
Var frobenius_sq(Var a);

/// rows[i] = a[indices[i]]; a [N x F].
Var gather_rows(Var a, std::span<const std::int32_t> indices);
/// Sums consecutive groups of `group` rows: [(G*group) x F] -> [G x F].
Var group_sum(Var a, std::size_t group);
/// Max over consecutive groups of rows, per column.
Var group_max(Var a, std::size_t group);
/// Per-row matrix-vector product: y[r, o] = sum_d w[r, d*out + o] * x[r, d],
/// with w [R x (D*out)], x [R x D].
Var row_bilinear(Var w, Var x, std::size_t out);
/// Inverse of a square matrix.
Var inverse(Var a);

enum class BnMode { Train, Eval };

/// Per-feature running statistics owned by the model, updated in train mode.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;

  explicit BatchNormStats(std::size_t features = 0)
      : running_mean({features}, 0.0), running_var({features}, 1.0) {}
};

/// Batch normalisation over rows of x [N x F] with affine gamma, beta [F].
/// Train mode normalises with batch statistics and updates `stats`.
Var batchnorm(Var x, Var gamma, Var beta, BatchNormStats& stats, BnMode mode);

}  // namespace lsd::ad
