#include "lsd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "lsd/error.hpp"

namespace lsd::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ValidationError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                        shape_string(b));
}
[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& need) {
  throw ValidationError(std::string(op) + ": shape " + shape_string(a) + " " + need);
}

Tape& tape_of(const char* op, Var a) {
  if (!a.valid()) throw ValidationError(std::string(op) + ": unbound variable");
  return *a.tape();
}
Tape& tape_of(const char* op, Var a, Var b) {
  Tape& t = tape_of(op, a);
  if (b.tape() != &t) throw ValidationError(std::string(op) + ": operands live on different tapes");
  return t;
}

void require_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2) shape_fail(op, t.shape(), "is not a matrix");
}

enum class Broadcast { Same, Trailing };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape().back()) return Broadcast::Trailing;
  shape_fail(op, a.shape(), b.shape());
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(*this); }
const Tensor& Var::grad() const { return tape_->grad(*this); }

Var Tape::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max())
    throw NumericalError("tape exhausted");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::variable(Tensor value) {
  return push(Node{"variable", std::move(value), {}, {}, {}, true});
}

Var Tape::constant(Tensor value) {
  return push(Node{"constant", std::move(value), {}, {}, {}, false});
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward fn) {
  return record(op, std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& parents, Backward fn) {
  Node n{op, std::move(value), {}, {}, {}, false};
  bool parents_finite = true;
  for (Var p : parents) {
    if (p.tape_ != this) throw ValidationError(std::string(op) + ": parent from another tape");
    n.parents.push_back(p.id_);
    n.needs_grad = n.needs_grad || nodes_[p.id_].needs_grad;
#ifndef NDEBUG
    parents_finite = parents_finite && nodes_[p.id_].value.all_finite();
#endif
  }
#ifndef NDEBUG
  if (parents_finite && !n.value.all_finite())
    throw NumericalError(std::string(op) + " produced a non-finite value from finite inputs");
#else
  (void)parents_finite;
#endif
  if (n.needs_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Tape::grad(Var v) {
  Node& n = nodes_[v.id_];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

double* Tape::grad_data(Var v) {
  Node& n = nodes_[v.id_];
  if (!n.needs_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad.data();
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw ValidationError("backward: root from another tape");
  if (nodes_[root.id_].value.size() != 1)
    throw ValidationError("backward: root must be a scalar, got " +
                          shape_string(nodes_[root.id_].value.shape()));
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[root.id_].needs_grad) return;
  nodes_[root.id_].grad = Tensor(nodes_[root.id_].value.shape(), 1.0);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad, n.value);
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) shape_fail("matmul", av.shape(), bv.shape());
  Tensor out({m, n});
  Map(out.data(), m, n).noalias() = MapC(av.data(), m, k) * MapC(bv.data(), k, n);
  return t.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, const Tensor& g, const Tensor&) {
    MapC gm(g.data(), m, n);
    if (double* ga = tp.grad_data(a))
      Map(ga, m, k).noalias() += gm * MapC(tp.value(b).data(), k, n).transpose();
    if (double* gb = tp.grad_data(b))
      Map(gb, k, n).noalias() += MapC(tp.value(a).data(), m, k).transpose() * gm;
  });
}

Var transpose(Var a) {
  Tape& t = tape_of("transpose", a);
  const Tensor& av = a.value();
  require_matrix("transpose", av);
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  Map(out.data(), n, m) = MapC(av.data(), m, n).transpose();
  return t.record("transpose", std::move(out), {a}, [a, m, n](Tape& tp, const Tensor& g, const Tensor&) {
    if (double* ga = tp.grad_data(a)) Map(ga, m, n) += MapC(g.data(), n, m).transpose();
  });
}

namespace {

template <typename Fwd, typename Da, typename Db>
Var binary(const char* op, Var a, Var b, Fwd fwd, Da da, Db db) {
  Tape& t = tape_of(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(op, av, bv);
  const std::size_t n = av.size(), w = kind == Broadcast::Same ? n : bv.size();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % w]);
  return t.record(op, std::move(out), {a, b}, [a, b, n, w, da, db](Tape& tp, const Tensor& g, const Tensor&) {
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    if (double* ga = tp.grad_data(a))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * da(av[i], bv[i % w]);
    if (double* gb = tp.grad_data(b))
      for (std::size_t i = 0; i < n; ++i) gb[i % w] += g[i] * db(av[i], bv[i % w]);
  });
}

template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(op, a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return t.record(op, std::move(out), {a}, [a, deriv](Tape& tp, const Tensor& g, const Tensor&) {
    if (double* ga = tp.grad_data(a)) {
      const Tensor& av = tp.value(a);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += g[i] * deriv(av[i]);
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs(Var a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of("reshape", a);
  Tensor out = a.value().reshaped(std::move(shape));
  return t.record("reshape", std::move(out), {a}, [a](Tape& tp, const Tensor& g, const Tensor&) {
    if (double* ga = tp.grad_data(a))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ValidationError("concat: no operands");
  Tape& t = tape_of("concat", parts.front());
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) shape_fail("concat", s0, "has no axis " + std::to_string(axis));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> chunk;  // per-part contiguous run per outer index
  std::size_t total_axis = 0;
  for (Var p : parts) {
    tape_of("concat", parts.front(), p);
    const Shape& s = p.shape();
    if (s.size() != s0.size()) shape_fail("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) shape_fail("concat", s0, s);
    chunk.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total_axis;
  Tensor out(out_shape);
  const std::size_t row = total_axis * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const double* src = parts[p].value().data() + o * chunk[p];
      std::copy(src, src + chunk[p], out.data() + o * row + off);
      off += chunk[p];
    }
  }
  return t.record("concat", std::move(out), parts,
                  [parts, chunk, outer, row](Tape& tp, const Tensor& g, const Tensor&) {
                    std::size_t off = 0;
                    for (std::size_t p = 0; p < parts.size(); ++p) {
                      if (double* gp = tp.grad_data(parts[p]))
                        for (std::size_t o = 0; o < outer; ++o) {
                          const double* src = g.data() + o * row + off;
                          double* dst = gp + o * chunk[p];
                          for (std::size_t i = 0; i < chunk[p]; ++i) dst[i] += src[i];
                        }
                      off += chunk[p];
                    }
                  });
}

Var sum(Var a, std::size_t axis) {
  Tape& t = tape_of("sum", a);
  const Shape& s = a.shape();
  if (axis >= s.size()) shape_fail("sum", s, "has no axis " + std::to_string(axis));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape, 0.0);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * len + k) * inner + i];
  return t.record("sum", std::move(out), {a}, [a, outer, inner, len](Tape& tp, const Tensor& g, const Tensor&) {
    if (double* ga = tp.grad_data(a))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < len; ++k)
          for (std::size_t i = 0; i < inner; ++i) ga[(o * len + k) * inner + i] += g[o * inner + i];
  });
}

Var sum_all(Var a) {
  Tape& t = tape_of("sum_all", a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return t.record("sum_all", Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor& g, const Tensor&) {
    if (double* ga = tp.grad_data(a)) {
      const std::size_t n = tp.value(a).size();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    }
  });
}

Var mean_all(Var a) {
  const auto n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

Var softmax(Var a) {
  Tape& t = tape_of("softmax", a);
  const Tensor& av = a.value();
  if (av.rank() == 0) shape_fail("softmax", av.shape(), "has no last axis");
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return t.record("softmax", std::move(out), {a},
                  [a, rows, cols](Tape& tp, const Tensor& g, const Tensor& y) {
                    double* ga = tp.grad_data(a);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* yr = y.data() + r * cols;
                      const double* gr = g.data() + r * cols;
                      double dot = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
                      for (std::size_t c = 0; c < cols; ++c)
                        ga[r * cols + c] += yr[c] * (gr[c] - dot);
                    }
                  });
}

namespace {

void check_labels(const char* op, const Tensor& x, std::span<const int> labels) {
  require_matrix(op, x);
  if (labels.size() != x.dim(0))
    throw ValidationError(std::string(op) + ": " + std::to_string(labels.size()) +
                          " labels for " + shape_string(x.shape()));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= x.dim(1))
      throw ValidationError(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                            std::to_string(x.dim(1)) + ")");
}

}  // namespace

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of("cross_entropy", logits);
  const Tensor& x = logits.value();
  check_labels("cross_entropy", x, labels);
  const std::size_t n = x.dim(0), c = x.dim(1);
  Tensor probs({n, c});
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += (probs.at(r, k) = std::exp(xr[k] - mx));
    for (std::size_t k = 0; k < c; ++k) probs.at(r, k) /= z;
    loss -= xr[labels[r]] - mx - std::log(z);
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record("cross_entropy", Tensor::scalar(loss), {logits},
                  [logits, probs = std::move(probs), lab = std::move(lab), n, c](
                      Tape& tp, const Tensor& g, const Tensor&) {
                    double* gx = tp.grad_data(logits);
                    const double s = g[0] / static_cast<double>(n);
                    for (std::size_t r = 0; r < n; ++r)
                      for (std::size_t k = 0; k < c; ++k)
                        gx[r * c + k] += s * (probs.at(r, k) - (static_cast<int>(k) == lab[r]));
                  });
}

Var nll_of_probs(Var probs, std::span<const int> labels) {
  Tape& t = tape_of("nll_of_probs", probs);
  const Tensor& p = probs.value();
  check_labels("nll_of_probs", p, labels);
  const std::size_t n = p.dim(0);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r)
    loss -= std::log(std::max(p.at(r, labels[r]), std::numeric_limits<double>::min()));
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record("nll_of_probs", Tensor::scalar(loss), {probs},
                  [probs, lab = std::move(lab), n](Tape& tp, const Tensor& g, const Tensor&) {
                    double* gp = tp.grad_data(probs);
                    const Tensor& p = tp.value(probs);
                    const std::size_t c = p.dim(1);
                    for (std::size_t r = 0; r < n; ++r) {
                      const double v = std::max(p.at(r, lab[r]), std::numeric_limits<double>::min());
                      gp[r * c + lab[r]] -= g[0] / (static_cast<double>(n) * v);
                    }
                  });
}

Var frobenius_sq(Var a) {
  Tape& t = tape_of("frobenius_sq", a);
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return t.record("frobenius_sq", Tensor::scalar(s), {a},
                  [a](Tape& tp, const Tensor& g, const Tensor&) {
                    double* ga = tp.grad_data(a);
                    const Tensor& av = tp.value(a);
                    for (std::size_t i = 0; i < av.size(); ++i) ga[i] += 2.0 * g[0] * av[i];
                  });
}

Var gather_rows(Var a, std::span<const std::int32_t> indices) {
  Tape& t = tape_of("gather_rows", a);
  const Tensor& av = a.value();
  require_matrix("gather_rows", av);
  const std::size_t n = av.dim(0), f = av.dim(1);
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), f});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= n)
      throw ValidationError("gather_rows: index " + std::to_string(idx[r]) + " outside " +
                            shape_string(av.shape()));
    std::copy_n(av.data() + idx[r] * f, f, out.data() + r * f);
  }
  return t.record("gather_rows", std::move(out), {a},
                  [a, idx = std::move(idx), f](Tape& tp, const Tensor& g, const Tensor&) {
                    double* ga = tp.grad_data(a);
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                      double* dst = ga + idx[r] * f;
                      const double* src = g.data() + r * f;
                      for (std::size_t c = 0; c < f; ++c) dst[c] += src[c];
                    }
                  });
}

Var group_sum(Var a, std::size_t group) {
  Tape& t = tape_of("group_sum", a);
  const Tensor& av = a.value();
  require_matrix("group_sum", av);
  if (group == 0 || av.dim(0) % group != 0)
    shape_fail("group_sum", av.shape(), "rows not divisible by group " + std::to_string(group));
  const std::size_t groups = av.dim(0) / group, f = av.dim(1);
  Tensor out({groups, f}, 0.0);
  for (std::size_t r = 0; r < av.dim(0); ++r) {
    double* dst = out.data() + (r / group) * f;
    const double* src = av.data() + r * f;
    for (std::size_t c = 0; c < f; ++c) dst[c] += src[c];
  }
  return t.record("group_sum", std::move(out), {a},
                  [a, group, f](Tape& tp, const Tensor& g, const Tensor&) {
                    double* ga = tp.grad_data(a);
                    const std::size_t rows = tp.value(a).dim(0);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* src = g.data() + (r / group) * f;
                      for (std::size_t c = 0; c < f; ++c) ga[r * f + c] += src[c];
                    }
                  });
}

Var group_max(Var a, std::size_t group) {
  Tape& t = tape_of("group_max", a);
  const Tensor& av = a.value();
  require_matrix("group_max", av);
  if (group == 0 || av.dim(0) % group != 0)
    shape_fail("group_max", av.shape(), "rows not divisible by group " + std::to_string(group));
  const std::size_t groups = av.dim(0) / group, f = av.dim(1);
  Tensor out({groups, f});
  std::vector<std::size_t> arg(groups * f);
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t c = 0; c < f; ++c) {
      std::size_t best = gi * group;
      for (std::size_t r = best + 1; r < (gi + 1) * group; ++r)
        if (av.at(r, c) > av.at(best, c)) best = r;
      arg[gi * f + c] = best;
      out.at(gi, c) = av.at(best, c);
    }
  return t.record("group_max", std::move(out), {a},
                  [a, arg = std::move(arg), f](Tape& tp, const Tensor& g, const Tensor&) {
                    double* ga = tp.grad_data(a);
                    for (std::size_t i = 0; i < arg.size(); ++i) ga[arg[i] * f + i % f] += g[i];
                  });
}

Var row_bilinear(Var w, Var x, std::size_t out) {
  Tape& t = tape_of("row_bilinear", w, x);
  const Tensor& wv = w.value();
  const Tensor& xv = x.value();
  require_matrix("row_bilinear", wv);
  require_matrix("row_bilinear", xv);
  const std::size_t rows = xv.dim(0), d = xv.dim(1);
  if (wv.dim(0) != rows || wv.dim(1) != d * out) shape_fail("row_bilinear", wv.shape(), xv.shape());
  Tensor y({rows, out}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = wv.data() + r * d * out;
    const double* xr = xv.data() + r * d;
    double* yr = y.data() + r * out;
    for (std::size_t k = 0; k < d; ++k) {
      const double xk = xr[k];
      const double* wk = wr + k * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += wk[o] * xk;
    }
  }
  return t.record("row_bilinear", std::move(y), {w, x},
                  [w, x, rows, d, out](Tape& tp, const Tensor& g, const Tensor&) {
                    const Tensor& wv = tp.value(w);
                    const Tensor& xv = tp.value(x);
                    double* gw = tp.grad_data(w);
                    double* gx = tp.grad_data(x);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* gr = g.data() + r * out;
                      const double* wr = wv.data() + r * d * out;
                      const double* xr = xv.data() + r * d;
                      for (std::size_t k = 0; k < d; ++k) {
                        if (gw) {
                          double* gwk = gw + (r * d + k) * out;
                          for (std::size_t o = 0; o < out; ++o) gwk[o] += gr[o] * xr[k];
                        }
                        if (gx) {
                          const double* wk = wr + k * out;
                          double acc = 0.0;
                          for (std::size_t o = 0; o < out; ++o) acc += gr[o] * wk[o];
                          gx[r * d + k] += acc;
                        }
                      }
                    }
                  });
}

Var inverse(Var a) {
  Tape& t = tape_of("inverse", a);
  const Tensor& av = a.value();
  require_matrix("inverse", av);
  const std::size_t n = av.dim(0);
  if (av.dim(1) != n) shape_fail("inverse", av.shape(), "is not square");
  Eigen::PartialPivLU<RowMat> lu(MapC(av.data(), n, n));
  Tensor out({n, n});
  Map(out.data(), n, n) = lu.inverse();
  if (!out.all_finite()) throw NumericalError("inverse: matrix is singular");
  return t.record("inverse", std::move(out), {a},
                  [a, n](Tape& tp, const Tensor& g, const Tensor& inv) {
                    MapC im(inv.data(), n, n);
                    Map(tp.grad_data(a), n, n).noalias() -=
                        im.transpose() * MapC(g.data(), n, n) * im.transpose();
                  });
}

Var batchnorm(Var x, Var gamma, Var beta, BatchNormStats& stats, BnMode mode) {
  Tape& t = tape_of("batchnorm", x, gamma);
  tape_of("batchnorm", x, beta);
  const Tensor& xv = x.value();
  require_matrix("batchnorm", xv);
  const std::size_t n = xv.dim(0), f = xv.dim(1);
  if (gamma.value().shape() != Shape{f} || beta.value().shape() != Shape{f})
    shape_fail("batchnorm", xv.shape(), gamma.value().shape());
  if (stats.running_mean.size() != f)
    shape_fail("batchnorm", xv.shape(), "does not match running statistics");
  if (n == 0) shape_fail("batchnorm", xv.shape(), "is empty");

  std::vector<double> mean(f, 0.0), inv_std(f, 0.0);
  if (mode == BnMode::Train) {
    std::vector<double> var(f, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) mean[c] += xv.at(r, c);
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < f; ++c) {
        const double d = xv.at(r, c) - mean[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < f; ++c) {
      var[c] /= static_cast<double>(n);
      inv_std[c] = 1.0 / std::sqrt(var[c] + stats.epsilon);
      const double unbiased = n > 1 ? var[c] * static_cast<double>(n) / (n - 1.0) : var[c];
      stats.running_mean[c] = stats.momentum * stats.running_mean[c] + (1 - stats.momentum) * mean[c];
      stats.running_var[c] = stats.momentum * stats.running_var[c] + (1 - stats.momentum) * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < f; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.epsilon);
    }
  }

  Tensor xhat({n, f});
  Tensor out({n, f});
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      xhat.at(r, c) = (xv.at(r, c) - mean[c]) * inv_std[c];
      out.at(r, c) = gv[c] * xhat.at(r, c) + bv[c];
    }
  const bool train = mode == BnMode::Train;
  return t.record(
      "batchnorm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n, f, train](
          Tape& tp, const Tensor& g, const Tensor&) {
        const Tensor& gv = tp.value(gamma);
        if (double* gg = tp.grad_data(gamma))
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) gg[c] += g.at(r, c) * xhat.at(r, c);
        if (double* gb = tp.grad_data(beta))
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) gb[c] += g.at(r, c);
        double* gx = tp.grad_data(x);
        if (!gx) return;
        if (!train) {
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < f; ++c) gx[r * f + c] += g.at(r, c) * gv[c] * inv_std[c];
          return;
        }
        std::vector<double> mg(f, 0.0), mgx(f, 0.0);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < f; ++c) {
            mg[c] += g.at(r, c);
            mgx[c] += g.at(r, c) * xhat.at(r, c);
          }
        for (std::size_t c = 0; c < f; ++c) {
          mg[c] /= static_cast<double>(n);
          mgx[c] /= static_cast<double>(n);
        }
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < f; ++c)
            gx[r * f + c] +=
                gv[c] * inv_std[c] * (g.at(r, c) - mg[c] - xhat.at(r, c) * mgx[c]);
      });
}

}  // namespace lsd::ad
