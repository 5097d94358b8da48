#include "exost/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

namespace exost {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

DTensor::DTensor(Shape s, double fill)
    : shape(std::move(s)), values(numel(shape), fill), grad(values.size(), 0.0) {}

DTensor::DTensor(Shape s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)), grad(values.size(), 0.0) {
  if (values.size() != numel(shape)) {
    throw ShapeError("DTensor: " + std::to_string(values.size()) +
                     " values for shape " + to_string(shape));
  }
}

void DTensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

namespace ad {

namespace {

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r) {
    throw std::out_of_range("axis " + std::to_string(axis) +
                            " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

struct AxisSplit {
  std::size_t outer, dim, inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands live on different tapes");
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                     " vs " + to_string(b.shape()));
  }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// C[m×n] += A[m×k] · B[k×n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, k, n);
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  MutMap(c, m, n).noalias() += ConstMap(a, m, k) * ConstMap(b, n, k).transpose();
}

// C[k×n] += A[m×k]ᵀ · B[m×n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  MutMap(c, k, n).noalias() += ConstMap(a, m, k).transpose() * ConstMap(b, m, n);
}

template <class F, class DF>
Var unary(Var x, F f, DF df) {
  const auto in = x.value();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const std::size_t xi = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [xi, df](Tape& t, std::size_t self) {
                           auto& src = t.node(xi);
                           const auto& o = t.node(self);
                           for (std::size_t i = 0; i < o.grad.size(); ++i) {
                             src.grad[i] += o.grad[i] * df(src.value[i], o.value[i]);
                           }
                         });
}

}  // namespace

Tape& Var::tape() const {
  if (!tape_) throw std::logic_error("Var is not bound to a tape");
  return *tape_;
}
const Shape& Var::shape() const { return tape().node(id_).shape; }
std::size_t Var::dim(int axis) const { return shape()[normalize_axis(axis, rank())]; }
std::span<const double> Var::value() const { return tape().node(id_).value; }
std::span<const double> Var::grad() const { return tape().node(id_).grad; }
bool Var::tracked() const { return tape().node(id_).tracked; }

Var Tape::param(DTensor& p) {
  if (p.grad.size() != p.values.size()) p.grad.assign(p.values.size(), 0.0);
  Node n;
  n.shape = p.shape;
  n.value = p.values;
  n.tracked = true;
  n.sink = &p;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(const DTensor& t) { return constant(t.shape, t.values); }

Var Tape::constant(Shape shape, std::vector<double> values) {
  if (values.size() != numel(shape)) {
    throw ShapeError("constant: " + std::to_string(values.size()) +
                     " values for shape " + to_string(shape));
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::fill(Shape shape, double value) {
  const std::size_t count = numel(shape);
  return constant(std::move(shape), std::vector<double>(count, value));
}

Var Tape::record(Shape shape, std::vector<double> value,
                 std::initializer_list<Var> inputs, Backprop backprop) {
  return record(std::move(shape), std::move(value),
                std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backprop));
}

Var Tape::record(Shape shape, std::vector<double> value, std::span<const Var> inputs,
                 Backprop backprop) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.tracked = std::any_of(inputs.begin(), inputs.end(),
                          [this](Var v) { return nodes_[v.id()].tracked; });
  if (n.tracked) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (&root.tape() != this) throw std::logic_error("backward: root from another tape");
  if (numel(root.shape()) != 1) {
    throw ShapeError("backward: root must be scalar, got " + to_string(root.shape()));
  }
  // Gradient buffers exist only once a backward pass needs them.
  for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[root.id()].grad[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.tracked) continue;
    if (n.backprop) n.backprop(*this, i);
    if (n.sink) {
      for (std::size_t j = 0; j < n.grad.size(); ++j) n.sink->grad[j] += n.grad[j];
    }
  }
}

Var matmul(Var a, Var b, bool transpose_b) {
  require_same_tape(a, b);
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + to_string(sa) + " and " +
                     to_string(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t kb = transpose_b ? sb.back() : sb[sb.size() - 2];
  const std::size_t n = transpose_b ? sb[sb.size() - 2] : sb.back();
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(sa) + " x " +
                     to_string(sb) + (transpose_b ? "^T" : ""));
  }
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch;
  if (batch_a == batch_b || batch_b.empty()) {
    batch = batch_a;
  } else if (batch_a.empty()) {
    batch = batch_b;
  } else {
    throw ShapeError("matmul: batch dimensions differ " + to_string(sa) + " x " +
                     to_string(sb));
  }
  const bool a_batched = !batch_a.empty();
  const bool b_batched = !batch_b.empty();
  const std::size_t count = numel(batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<double> out(count * m * n, 0.0);
  const auto av = a.value();
  const auto bv = b.value();
  // A matrix right operand folds the batch into the row dimension.
  const std::size_t rows = b_batched ? m : m * count;
  const std::size_t loops = b_batched ? count : 1;
  for (std::size_t bi = 0; bi < loops; ++bi) {
    const double* pa = av.data() + (a_batched ? bi * m * k : 0);
    const double* pb = bv.data() + bi * k * n;
    double* pc = out.data() + bi * m * n;
    if (transpose_b) {
      gemm_nt(pa, pb, pc, rows, k, n);
    } else {
      gemm_nn(pa, pb, pc, rows, k, n);
    }
  }

  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(
      std::move(out_shape), std::move(out), {a, b},
      [=](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        auto& na = t.node(ia);
        auto& nb = t.node(ib);
        for (std::size_t bi = 0; bi < loops; ++bi) {
          const double* gc = g.data() + bi * m * n;
          const std::size_t ao = a_batched ? bi * m * k : 0;
          const std::size_t bo = bi * k * n;
          if (na.tracked) {
            double* ga = na.grad.data() + ao;
            if (transpose_b) {
              gemm_nn(gc, nb.value.data() + bo, ga, rows, n, k);
            } else {
              gemm_nt(gc, nb.value.data() + bo, ga, rows, n, k);
            }
          }
          if (nb.tracked) {
            double* gb = nb.grad.data() + bo;
            if (transpose_b) {
              gemm_tn(gc, na.value.data() + ao, gb, rows, n, k);
            } else {
              gemm_tn(na.value.data() + ao, gc, gb, rows, k, n);
            }
          }
        }
      });
}

namespace {

template <class Op, class DA, class DB>
Var binary(const char* name, Var a, Var b, Op op, DA da, DB db) {
  require_same_tape(a, b);
  require_same_shape(name, a, b);
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(av[i], bv[i]);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(a.shape(), std::move(out), {a, b},
                         [=](Tape& t, std::size_t self) {
                           const auto& g = t.node(self).grad;
                           auto& na = t.node(ia);
                           auto& nb = t.node(ib);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             if (na.tracked) na.grad[i] += g[i] * da(na.value[i], nb.value[i]);
                             if (nb.tracked) nb.grad[i] += g[i] * db(na.value[i], nb.value[i]);
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Var x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double shift) {
  return unary(
      x, [shift](double v) { return v + shift; }, [](double, double) { return 1.0; });
}

Var broadcast_to(Var x, const Shape& shape) {
  const Shape in = x.shape();
  if (in == shape) return x;
  if (in.size() > shape.size()) {
    throw ShapeError("broadcast: cannot shrink " + to_string(in) + " to " +
                     to_string(shape));
  }
  const std::size_t offset = shape.size() - in.size();
  const std::size_t total = numel(shape);
  const std::size_t count = numel(in);
  const std::size_t xi = x.id();
  const auto xv = x.value();

  // Fast path: x is repeated whole across leading axes (bias-style).
  std::size_t lead = 0;
  while (lead < in.size() && in[lead] == 1) ++lead;
  if (std::equal(in.begin() + lead, in.end(), shape.end() - (in.size() - lead))) {
    std::vector<double> out(total);
    for (std::size_t r = 0; r < total; r += count) {
      std::copy(xv.begin(), xv.end(), out.begin() + r);
    }
    return x.tape().record(shape, std::move(out), {x},
                           [xi, count](Tape& t, std::size_t self) {
                             const auto& g = t.node(self).grad;
                             auto& gx = t.node(xi).grad;
                             for (std::size_t r = 0; r < g.size(); r += count) {
                               for (std::size_t i = 0; i < count; ++i) gx[i] += g[r + i];
                             }
                           });
  }
  // Fast path: every element spreads over trailing unit axes.
  std::size_t tail = in.size();
  while (tail > 0 && in[tail - 1] == 1) --tail;
  if (offset == 0 && std::equal(in.begin(), in.begin() + tail, shape.begin())) {
    const std::size_t spread = total / count;
    std::vector<double> out(total);
    for (std::size_t i = 0; i < count; ++i) {
      std::fill_n(out.begin() + i * spread, spread, xv[i]);
    }
    return x.tape().record(shape, std::move(out), {x},
                           [xi, spread](Tape& t, std::size_t self) {
                             const auto& g = t.node(self).grad;
                             auto& gx = t.node(xi).grad;
                             for (std::size_t i = 0; i < gx.size(); ++i) {
                               double acc = 0.0;
                               for (std::size_t j = 0; j < spread; ++j) acc += g[i * spread + j];
                               gx[i] += acc;
                             }
                           });
  }

  // Input stride per output axis; zero where the axis is broadcast.
  std::vector<std::size_t> stride(shape.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t o = i + offset;
    if (in[i] == shape[o]) {
      stride[o] = in[i] == 1 ? 0 : s;
    } else if (in[i] != 1) {
      throw ShapeError("broadcast: " + to_string(in) + " is not compatible with " +
                       to_string(shape));
    }
    s *= in[i];
  }
  std::vector<std::size_t> index(total);
  std::vector<std::size_t> counter(shape.size(), 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    index[flat] = src;
    for (std::size_t ax = shape.size(); ax-- > 0;) {
      ++counter[ax];
      src += stride[ax];
      if (counter[ax] < shape[ax]) break;
      src -= stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[index[i]];
  return x.tape().record(shape, std::move(out), {x},
                         [xi, index = std::move(index)](Tape& t, std::size_t self) {
                           const auto& g = t.node(self).grad;
                           auto& gx = t.node(xi).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) gx[index[i]] += g[i];
                         });
}

Var reshape(Var x, const Shape& shape) {
  if (numel(shape) != numel(x.shape())) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
  }
  const auto xv = x.value();
  const std::size_t xi = x.id();
  return x.tape().record(shape, std::vector<double>(xv.begin(), xv.end()), {x},
                         [xi](Tape& t, std::size_t self) {
                           const auto& g = t.node(self).grad;
                           auto& gx = t.node(xi).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                         });
}

Var slice(Var x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  if (start + length > sp.dim) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds axis of size " +
                     std::to_string(sp.dim));
  }
  Shape shape = x.shape();
  shape[ax] = length;
  const auto xv = x.value();
  std::vector<double> out(sp.outer * length * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.begin() + (o * sp.dim + start) * sp.inner, length * sp.inner,
                out.begin() + o * length * sp.inner);
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(shape), std::move(out), {x},
                         [=](Tape& t, std::size_t self) {
                           const auto& g = t.node(self).grad;
                           auto& gx = t.node(xi).grad;
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                             const std::size_t src = o * length * sp.inner;
                             const std::size_t dst = (o * sp.dim + start) * sp.inner;
                             for (std::size_t i = 0; i < length * sp.inner; ++i) {
                               gx[dst + i] += g[src + i];
                             }
                           }
                         });
}

Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape first = parts[0].shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  std::vector<std::size_t> dims;
  std::size_t total_dim = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p);
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != first[i]) {
        throw ShapeError("concat: " + to_string(s) + " vs " + to_string(first));
      }
    }
    dims.push_back(s[ax]);
    total_dim += s[ax];
  }
  Shape shape = first;
  shape[ax] = total_dim;
  const AxisSplit sp = split_at(shape, ax);
  std::vector<double> out(numel(shape));
  std::size_t offset = 0;
  std::vector<std::size_t> ids;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto v = parts[pi].value();
    const std::size_t chunk = dims[pi] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(v.begin() + o * chunk, chunk,
                  out.begin() + (o * total_dim + offset) * sp.inner);
    }
    offset += dims[pi];
    ids.push_back(parts[pi].id());
  }
  return parts[0].tape().record(
      std::move(shape), std::move(out), parts,
      [=](Tape& t, std::size_t self) {
        const auto& g = t.node(self).grad;
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
          auto& n = t.node(ids[pi]);
          const std::size_t chunk = dims[pi] * sp.inner;
          if (n.tracked) {
            for (std::size_t o = 0; o < sp.outer; ++o) {
              const std::size_t src = (o * total_dim + off) * sp.inner;
              for (std::size_t i = 0; i < chunk; ++i) n.grad[o * chunk + i] += g[src + i];
            }
          }
          off += dims[pi];
        }
      });
}

Var sum(Var x, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  Shape shape = x.shape();
  if (keepdim) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(ax));
  }
  const auto xv = x.value();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t d = 0; d < sp.dim; ++d) {
      const double* row = xv.data() + (o * sp.dim + d) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += row[i];
    }
  }
  const std::size_t xi = x.id();
  return x.tape().record(std::move(shape), std::move(out), {x},
                         [=](Tape& t, std::size_t self) {
                           const auto& g = t.node(self).grad;
                           auto& gx = t.node(xi).grad;
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                             for (std::size_t d = 0; d < sp.dim; ++d) {
                               double* dst = gx.data() + (o * sp.dim + d) * sp.inner;
                               const double* src = g.data() + o * sp.inner;
                               for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
                             }
                           }
                         });
}

Var mean(Var x, int axis, bool keepdim) {
  const std::size_t n = x.dim(axis);
  return scale(sum(x, axis, keepdim), 1.0 / static_cast<double>(n));
}

Var mean_all(Var x) {
  const std::size_t n = numel(x.shape());
  return mean(reshape(x, {n}), 0);
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var abs(Var x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var softmax(Var x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisSplit sp = split_at(x.shape(), ax);
  const auto xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.dim * sp.inner + i;
      double peak = xv[base];
      for (std::size_t d = 1; d < sp.dim; ++d) peak = std::max(peak, xv[base + d * sp.inner]);
      double total = 0.0;
      for (std::size_t d = 0; d < sp.dim; ++d) {
        const double e = std::exp(xv[base + d * sp.inner] - peak);
        out[base + d * sp.inner] = e;
        total += e;
      }
      for (std::size_t d = 0; d < sp.dim; ++d) out[base + d * sp.inner] /= total;
    }
  }
  const std::size_t xi = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [=](Tape& t, std::size_t self) {
                           const auto& node = t.node(self);
                           const auto& y = node.value;
                           const auto& g = node.grad;
                           auto& gx = t.node(xi).grad;
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                             for (std::size_t i = 0; i < sp.inner; ++i) {
                               const std::size_t base = o * sp.dim * sp.inner + i;
                               double dot = 0.0;
                               for (std::size_t d = 0; d < sp.dim; ++d) {
                                 dot += g[base + d * sp.inner] * y[base + d * sp.inner];
                               }
                               for (std::size_t d = 0; d < sp.dim; ++d) {
                                 const std::size_t j = base + d * sp.inner;
                                 gx[j] += y[j] * (g[j] - dot);
                               }
                             }
                           }
                         });
}

Var dropout(Var x, double keep_prob, bool train, std::mt19937_64& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw std::invalid_argument("dropout: keep probability must lie in (0, 1]");
  }
  if (!train || keep_prob == 1.0) return x;
  const auto xv = x.value();
  std::vector<double> mask(xv.size());
  std::bernoulli_distribution keep(keep_prob);
  for (auto& m : mask) m = keep(rng) ? 1.0 / keep_prob : 0.0;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  const std::size_t xi = x.id();
  return x.tape().record(x.shape(), std::move(out), {x},
                         [xi, mask = std::move(mask)](Tape& t, std::size_t self) {
                           const auto& g = t.node(self).grad;
                           auto& gx = t.node(xi).grad;
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                         });
}

Var linear(Var x, Var weight) {
  if (x.rank() == 1) {
    Var y = matmul(reshape(x, {1, x.dim(0)}), weight, true);
    return reshape(y, {y.dim(1)});
  }
  return matmul(x, weight, /*transpose_b=*/true);
}

Var linear(Var x, Var weight, Var bias) {
  Var y = linear(x, weight);
  return add(y, broadcast_to(bias, y.shape()));
}

namespace {

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1.0, std::fabs(numeric));
}

double eval_scalar(const std::function<Var(Tape&)>& f) {
  Tape tape;
  Var out = f(tape);
  if (numel(out.shape()) != 1) throw ShapeError("grad_check: function is not scalar");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const std::function<Var(Tape&, Var)>& f, const DTensor& point,
                  double step) {
  DTensor x(point.shape, point.values);
  std::vector<DTensor*> params{&x};
  return grad_check_params([&](Tape& t) { return f(t, t.param(x)); }, params, step);
}

double grad_check_params(const std::function<Var(Tape&)>& f,
                         std::span<DTensor* const> params, double step) {
  for (DTensor* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    if (!std::isfinite(out.value()[0])) {
      throw std::domain_error("grad_check: non-finite function value");
    }
    tape.backward(out);
  }
  double worst = 0.0;
  for (DTensor* p : params) {
    const std::vector<double> analytic = p->grad;
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      const double saved = p->values[i];
      p->values[i] = saved + step;
      const double up = eval_scalar(f);
      p->values[i] = saved - step;
      const double down = eval_scalar(f);
      p->values[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

}  // namespace ad
}  // namespace exost
