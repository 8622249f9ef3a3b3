#include "vtp/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <utility>

namespace vtp::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;
const char* g_corrupt_op = nullptr;

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

bool tape_wants(const Tensor& t) { return g_active_tape != nullptr && t.requires_grad(); }

Tensor make_result(Shape shape, Array values, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

void record(const char* op, std::vector<std::shared_ptr<TensorData>> inputs,
            const Tensor& output, std::function<void()> backward) {
  g_active_tape->record(TapeNode{op, std::move(inputs), output.data(), std::move(backward)});
}

// Decomposes a shape around one axis: flat index = (o * extent + k) * inner + i.
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, Index axis) {
  AxisSplit s;
  s.extent = shape[static_cast<size_t>(axis)];
  for (Index d = 0; d < axis; ++d) s.outer *= shape[static_cast<size_t>(d)];
  for (size_t d = static_cast<size_t>(axis) + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

void check_axis(const char* op, const Tensor& a, Index axis) {
  if (axis < 0 || axis >= a.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for rank " +
                     std::to_string(a.rank()));
  }
}

}  // namespace

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Index n = shape_numel(shape);
  return make_result(std::move(shape), Array::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Index n = shape_numel(shape);
  return make_result(std::move(shape), Array::Constant(n, value), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<Index>(values.size())) {
    throw ShapeError("from_values: " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  Array a(values.size());
  std::memcpy(a.data(), values.data(), values.size() * sizeof(double));
  return make_result(std::move(shape), std::move(a), requires_grad);
}

Tensor Tensor::from_array(Shape shape, Array values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_array: " + shape_str(shape) + " incompatible with " +
                     std::to_string(values.size()) + " values");
  }
  return make_result(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return make_result({}, Array::Constant(1, value), false); }

double Tensor::value() const {
  if (numel() != 1) throw ShapeError("value(): tensor has " + std::to_string(numel()) + " elements");
  return data_->values(0);
}

ConstMatMap Tensor::matrix() const {
  if (rank() != 2) throw ShapeError("matrix(): rank-2 required, got " + shape_str(shape()));
  return ConstMatMap(data_->values.data(), shape()[0], shape()[1]);
}

MatMap Tensor::mutable_matrix() {
  if (rank() != 2) throw ShapeError("matrix(): rank-2 required, got " + shape_str(shape()));
  return MatMap(data_->values.data(), shape()[0], shape()[1]);
}

Tape::Tape() {
  if (g_active_tape != nullptr) throw NumericError("Tape: nested tapes are not supported");
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = nullptr; }

Tape* Tape::active() { return g_active_tape; }

void Tape::corrupt_backward(const char* op_name) { g_corrupt_op = op_name; }

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  loss.data()->ensure_grad();
  loss.data()->grad(0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    TensorData& out = *it->output;
    if (out.grad.size() != out.values.size()) continue;  // nothing flowed here
    if (g_corrupt_op != nullptr && std::strcmp(it->op, g_corrupt_op) == 0) out.grad *= 1.01;
    it->backward();
  }
  nodes_.clear();
}

void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (t == nullptr) throw NumericError("backward: no active tape");
  t->backward(loss);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

// Binary tensor-tensor op. dfa/dfb produce the local partials from (a, b, y).
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b,
                 const std::function<Array(const Array&, const Array&)>& fwd,
                 const std::function<Array(const Array&, const Array&, const Array&)>& dfa,
                 const std::function<Array(const Array&, const Array&, const Array&)>& dfb) {
  check_same_shape(op, a, b);
  bool rg = tape_wants(a) || tape_wants(b);
  Tensor y = make_result(a.shape(), fwd(a.values(), b.values()), rg);
  if (rg) {
    auto ad = a.data(), bd = b.data(), yd = y.data();
    record(op, {ad, bd}, y, [ad, bd, yd, dfa, dfb]() {
      if (ad->requires_grad) {
        ad->ensure_grad();
        ad->grad += yd->grad * dfa(ad->values, bd->values, yd->values);
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        bd->grad += yd->grad * dfb(ad->values, bd->values, yd->values);
      }
    });
  }
  return y;
}

Tensor unary_op(const char* op, const Tensor& a, Array fwd_values,
                const std::function<Array(const Array&, const Array&)>& dfa) {
  bool rg = tape_wants(a);
  Tensor y = make_result(a.shape(), std::move(fwd_values), rg);
  if (rg) {
    auto ad = a.data(), yd = y.data();
    record(op, {ad}, y, [ad, yd, dfa]() {
      ad->ensure_grad();
      ad->grad += yd->grad * dfa(ad->values, yd->values);
    });
  }
  return y;
}

void check_positive(const char* op, const Array& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!(v(i) > 0.0)) {
      throw DomainError(std::string(op) + ": non-positive value " + std::to_string(v(i)) +
                        " at flat index " + std::to_string(i));
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](const Array& x, const Array& y) { return Array(x + y); },
      [](const Array&, const Array&, const Array& y) { return Array::Ones(y.size()); },
      [](const Array&, const Array&, const Array& y) { return Array::Ones(y.size()); });
}

Tensor add(const Tensor& a, double b) {
  return unary_op("add_s", a, Array(a.values() + b),
                  [](const Array&, const Array& y) { return Array::Ones(y.size()); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](const Array& x, const Array& y) { return Array(x - y); },
      [](const Array&, const Array&, const Array& y) { return Array::Ones(y.size()); },
      [](const Array&, const Array&, const Array& y) { return Array(-Array::Ones(y.size())); });
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](const Array& x, const Array& y) { return Array(x * y); },
      [](const Array&, const Array& y, const Array&) { return y; },
      [](const Array& x, const Array&, const Array&) { return x; });
}

Tensor mul(const Tensor& a, double b) {
  return unary_op("mul_s", a, Array(a.values() * b),
                  [b](const Array&, const Array& y) { return Array::Constant(y.size(), b); });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](const Array& x, const Array& y) { return Array(x / y); },
      [](const Array&, const Array& y, const Array&) { return Array(y.inverse()); },
      [](const Array& x, const Array& y, const Array&) { return Array(-x / (y * y)); });
}

Tensor div(const Tensor& a, double b) { return mul(a, 1.0 / b); }

Tensor neg(const Tensor& a) {
  return unary_op("neg", a, Array(-a.values()),
                  [](const Array&, const Array& y) { return Array(-Array::Ones(y.size())); });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, Array(a.values().exp()),
                  [](const Array&, const Array& y) { return y; });
}

Tensor ln(const Tensor& a) {
  check_positive("ln", a.values());
  return unary_op("ln", a, Array(a.values().log()),
                  [](const Array& x, const Array&) { return Array(x.inverse()); });
}

Tensor tanh(const Tensor& a) {
  return unary_op("tanh", a, Array(a.values().tanh()),
                  [](const Array&, const Array& y) { return Array(1.0 - y * y); });
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a, Array(a.values().max(0.0)), [](const Array& x, const Array&) {
    return Array((x > 0.0).cast<double>());
  });
}

Tensor gelu(const Tensor& a) {
  const Array& x = a.values();
  Array u = kGeluC * (x + kGeluA * x.cube());
  Array t = u.tanh();
  Array y = 0.5 * x * (1.0 + t);
  return unary_op("gelu", a, std::move(y), [](const Array& x, const Array&) {
    Array u = kGeluC * (x + kGeluA * x.cube());
    Array t = u.tanh();
    Array du = kGeluC * (1.0 + 3.0 * kGeluA * x.square());
    return Array(0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
  });
}

Tensor abs(const Tensor& a) {
  return unary_op("abs", a, Array(a.values().abs()), [](const Array& x, const Array&) {
    return Array(x.sign());
  });
}

Tensor square(const Tensor& a) {
  return unary_op("square", a, Array(a.values().square()),
                  [](const Array& x, const Array&) { return Array(2.0 * x); });
}

Tensor sqrt(const Tensor& a) {
  check_positive("sqrt", a.values());
  return unary_op("sqrt", a, Array(a.values().sqrt()),
                  [](const Array&, const Array& y) { return Array(0.5 * y.inverse()); });
}

Tensor sin(const Tensor& a) {
  return unary_op("sin", a, Array(a.values().sin()),
                  [](const Array& x, const Array&) { return Array(x.cos()); });
}

Tensor cos(const Tensor& a) {
  return unary_op("cos", a, Array(a.values().cos()),
                  [](const Array& x, const Array&) { return Array(-x.sin()); });
}

Tensor add_rows(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || x.extent(1) != bias.extent(0)) {
    throw ShapeError("add_rows: want [r,c]+[c], got " + shape_str(x.shape()) + " + " +
                     shape_str(bias.shape()));
  }
  Index rows = x.extent(0), cols = x.extent(1);
  Array out = x.values();
  for (Index r = 0; r < rows; ++r) out.segment(r * cols, cols) += bias.values();
  bool rg = tape_wants(x) || tape_wants(bias);
  Tensor y = make_result(x.shape(), std::move(out), rg);
  if (rg) {
    auto xd = x.data(), bd = bias.data(), yd = y.data();
    record("add_rows", {xd, bd}, y, [xd, bd, yd, rows, cols]() {
      if (xd->requires_grad) {
        xd->ensure_grad();
        xd->grad += yd->grad;
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (Index r = 0; r < rows; ++r) bd->grad += yd->grad.segment(r * cols, cols);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Index ra = a.rank(), rb = b.rank();
  if (ra < 2 || ra > 3 || rb < 2 || rb > 3) {
    throw ShapeError("matmul: ranks 2 or 3 required, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Index batch_a = ra == 3 ? a.extent(0) : 1;
  Index batch_b = rb == 3 ? b.extent(0) : 1;
  if (ra == 3 && rb == 3 && batch_a != batch_b) {
    throw ShapeError("matmul: batch extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Index m = a.extent(ra - 2), k = a.extent(ra - 1);
  Index kb = b.extent(rb - 2), n = b.extent(rb - 1);
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Index batch = std::max(batch_a, batch_b);

  Shape out_shape = (ra == 3 || rb == 3) ? Shape{batch, m, n} : Shape{m, n};
  Array out(batch * m * n);
  for (Index p = 0; p < batch; ++p) {
    ConstMatMap ma(a.values().data() + (ra == 3 ? p * m * k : 0), m, k);
    ConstMatMap mb(b.values().data() + (rb == 3 ? p * k * n : 0), k, n);
    MatMap mc(out.data() + p * m * n, m, n);
    mc.noalias() = ma * mb;
  }

  bool rg = tape_wants(a) || tape_wants(b);
  Tensor y = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    auto ad = a.data(), bd = b.data(), yd = y.data();
    record("matmul", {ad, bd}, y, [ad, bd, yd, batch, m, k, n, ra, rb]() {
      for (Index p = 0; p < batch; ++p) {
        ConstMatMap gc(yd->grad.data() + p * m * n, m, n);
        ConstMatMap ma(ad->values.data() + (ra == 3 ? p * m * k : 0), m, k);
        ConstMatMap mb(bd->values.data() + (rb == 3 ? p * k * n : 0), k, n);
        if (ad->requires_grad) {
          ad->ensure_grad();
          MatMap ga(ad->grad.data() + (ra == 3 ? p * m * k : 0), m, k);
          ga.noalias() += gc * mb.transpose();
        }
        if (bd->requires_grad) {
          bd->ensure_grad();
          MatMap gb(bd->grad.data() + (rb == 3 ? p * k * n : 0), k, n);
          gb.noalias() += ma.transpose() * gc;
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor reduce_all(Reduce kind, const Tensor& a) {
  Index n = a.numel();
  double v = 0.0;
  Index arg = 0;
  switch (kind) {
    case Reduce::Sum: v = a.values().sum(); break;
    case Reduce::Mean: v = a.values().mean(); break;
    case Reduce::Max: v = a.values().maxCoeff(&arg); break;
  }
  bool rg = tape_wants(a);
  Tensor y = make_result({}, Array::Constant(1, v), rg);
  if (rg) {
    auto ad = a.data(), yd = y.data();
    record("reduce_all", {ad}, y, [ad, yd, kind, n, arg]() {
      ad->ensure_grad();
      double g = yd->grad(0);
      switch (kind) {
        case Reduce::Sum: ad->grad += g; break;
        case Reduce::Mean: ad->grad += g / static_cast<double>(n); break;
        case Reduce::Max: ad->grad(arg) += g; break;
      }
    });
  }
  return y;
}

Tensor reduce_axis(Reduce kind, const Tensor& a, Index axis) {
  check_axis("reduce", a, axis);
  AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape;
  for (Index d = 0; d < a.rank(); ++d) {
    if (d != axis) out_shape.push_back(a.extent(d));
  }
  Index out_n = s.outer * s.inner;
  Array out = Array::Zero(out_n);
  std::vector<Index> argmax;
  if (kind == Reduce::Max) {
    argmax.assign(static_cast<size_t>(out_n), 0);
    out = Array::Constant(out_n, -std::numeric_limits<double>::infinity());
  }
  const Array& v = a.values();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index kk = 0; kk < s.extent; ++kk) {
      for (Index i = 0; i < s.inner; ++i) {
        Index src = (o * s.extent + kk) * s.inner + i;
        Index dst = o * s.inner + i;
        if (kind == Reduce::Max) {
          if (v(src) > out(dst)) {
            out(dst) = v(src);
            argmax[static_cast<size_t>(dst)] = kk;
          }
        } else {
          out(dst) += v(src);
        }
      }
    }
  }
  if (kind == Reduce::Mean) out /= static_cast<double>(s.extent);

  bool rg = tape_wants(a);
  Tensor y = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    auto ad = a.data(), yd = y.data();
    record("reduce_axis", {ad}, y, [ad, yd, kind, s, argmax = std::move(argmax)]() {
      ad->ensure_grad();
      double scale = kind == Reduce::Mean ? 1.0 / static_cast<double>(s.extent) : 1.0;
      for (Index o = 0; o < s.outer; ++o) {
        for (Index i = 0; i < s.inner; ++i) {
          Index dst = o * s.inner + i;
          double g = yd->grad(dst);
          if (kind == Reduce::Max) {
            Index kk = argmax[static_cast<size_t>(dst)];
            ad->grad((o * s.extent + kk) * s.inner + i) += g;
          } else {
            for (Index kk = 0; kk < s.extent; ++kk) {
              ad->grad((o * s.extent + kk) * s.inner + i) += g * scale;
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& a) { return reduce_all(Reduce::Sum, a); }
Tensor mean(const Tensor& a) { return reduce_all(Reduce::Mean, a); }

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
  }
  bool rg = tape_wants(a);
  Tensor y = make_result(std::move(new_shape), a.values(), rg);
  if (rg) {
    auto ad = a.data(), yd = y.data();
    record("reshape", {ad}, y, [ad, yd]() {
      ad->ensure_grad();
      ad->grad += yd->grad;
    });
  }
  return y;
}

Tensor transpose2(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose2: rank >= 2 required");
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Index r = a.extent(a.rank() - 2), c = a.extent(a.rank() - 1);
  Index batch = a.numel() / (r * c);
  Array out(a.numel());
  for (Index p = 0; p < batch; ++p) {
    ConstMatMap src(a.values().data() + p * r * c, r, c);
    MatMap dst(out.data() + p * r * c, c, r);
    dst = src.transpose();
  }
  bool rg = tape_wants(a);
  Tensor y = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    auto ad = a.data(), yd = y.data();
    record("transpose2", {ad}, y, [ad, yd, batch, r, c]() {
      ad->ensure_grad();
      for (Index p = 0; p < batch; ++p) {
        ConstMatMap g(yd->grad.data() + p * r * c, c, r);
        MatMap dst(ad->grad.data() + p * r * c, r, c);
        dst += g.transpose();
      }
    });
  }
  return y;
}

Tensor concat(Index axis, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& base = parts[0].shape();
  check_axis("concat", parts[0], axis);
  Index total_extent = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != parts[0].rank()) throw ShapeError("concat: rank mismatch");
    for (Index d = 0; d < p.rank(); ++d) {
      if (d != axis && p.extent(d) != base[static_cast<size_t>(d)]) {
        throw ShapeError("concat: incompatible shapes " + shape_str(base) + " vs " +
                         shape_str(p.shape()));
      }
    }
    total_extent += p.extent(axis);
  }
  Shape out_shape = base;
  out_shape[static_cast<size_t>(axis)] = total_extent;

  AxisSplit so = split_axis(out_shape, axis);
  Array out(shape_numel(out_shape));
  Index offset = 0;
  for (const Tensor& p : parts) {
    AxisSplit sp = split_axis(p.shape(), axis);
    for (Index o = 0; o < sp.outer; ++o) {
      for (Index kk = 0; kk < sp.extent; ++kk) {
        out.segment(((o * so.extent) + offset + kk) * so.inner, sp.inner) =
            p.values().segment((o * sp.extent + kk) * sp.inner, sp.inner);
      }
    }
    offset += p.extent(axis);
  }

  bool rg = false;
  for (const Tensor& p : parts) rg = rg || tape_wants(p);
  Tensor y = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    std::vector<std::shared_ptr<TensorData>> ins;
    std::vector<Shape> shapes;
    for (const Tensor& p : parts) {
      ins.push_back(p.data());
      shapes.push_back(p.shape());
    }
    auto yd = y.data();
    record("concat", ins, y, [ins, shapes, yd, axis, so]() {
      Index offset = 0;
      for (size_t pi = 0; pi < ins.size(); ++pi) {
        AxisSplit sp = split_axis(shapes[pi], axis);
        if (ins[pi]->requires_grad) {
          ins[pi]->ensure_grad();
          for (Index o = 0; o < sp.outer; ++o) {
            for (Index kk = 0; kk < sp.extent; ++kk) {
              ins[pi]->grad.segment((o * sp.extent + kk) * sp.inner, sp.inner) +=
                  yd->grad.segment(((o * so.extent) + offset + kk) * so.inner, sp.inner);
            }
          }
        }
        offset += sp.extent;
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& a, Index axis, Index lo, Index hi) {
  check_axis("slice", a, axis);
  if (lo < 0 || hi > a.extent(axis) || lo >= hi) {
    throw ShapeError("slice: range [" + std::to_string(lo) + "," + std::to_string(hi) +
                     ") out of bounds for extent " + std::to_string(a.extent(axis)));
  }
  AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = hi - lo;
  Array out((hi - lo) * s.outer * s.inner);
  for (Index o = 0; o < s.outer; ++o) {
    for (Index kk = lo; kk < hi; ++kk) {
      out.segment((o * (hi - lo) + (kk - lo)) * s.inner, s.inner) =
          a.values().segment((o * s.extent + kk) * s.inner, s.inner);
    }
  }
  bool rg = tape_wants(a);
  Tensor y = make_result(std::move(out_shape), std::move(out), rg);
  if (rg) {
    auto ad = a.data(), yd = y.data();
    record("slice", {ad}, y, [ad, yd, s, lo, hi]() {
      ad->ensure_grad();
      for (Index o = 0; o < s.outer; ++o) {
        for (Index kk = lo; kk < hi; ++kk) {
          ad->grad.segment((o * s.extent + kk) * s.inner, s.inner) +=
              yd->grad.segment((o * (hi - lo) + (kk - lo)) * s.inner, s.inner);
        }
      }
    });
  }
  return y;
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack: no operands");
  std::vector<Tensor> reshaped;
  reshaped.reserve(parts.size());
  for (const Tensor& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ShapeError("stack: all operands must share shape, got " + shape_str(p.shape()) +
                       " vs " + shape_str(parts[0].shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    reshaped.push_back(reshape(p, std::move(s)));
  }
  return concat(0, reshaped);
}

// ---------------------------------------------------------------------------
// softmax / layer_norm
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& a, Index axis) {
  check_axis("softmax", a, axis);
  if (a.values().hasNaN()) throw DomainError("softmax: NaN input");
  AxisSplit s = split_axis(a.shape(), axis);
  Array out(a.numel());
  const Array& v = a.values();
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index kk = 0; kk < s.extent; ++kk) mx = std::max(mx, v((o * s.extent + kk) * s.inner + i));
      double z = 0.0;
      for (Index kk = 0; kk < s.extent; ++kk) {
        double e = std::exp(v((o * s.extent + kk) * s.inner + i) - mx);
        out((o * s.extent + kk) * s.inner + i) = e;
        z += e;
      }
      for (Index kk = 0; kk < s.extent; ++kk) out((o * s.extent + kk) * s.inner + i) /= z;
    }
  }
  bool rg = tape_wants(a);
  Tensor y = make_result(a.shape(), std::move(out), rg);
  if (rg) {
    auto ad = a.data(), yd = y.data();
    record("softmax", {ad}, y, [ad, yd, s]() {
      ad->ensure_grad();
      for (Index o = 0; o < s.outer; ++o) {
        for (Index i = 0; i < s.inner; ++i) {
          double dot = 0.0;
          for (Index kk = 0; kk < s.extent; ++kk) {
            Index idx = (o * s.extent + kk) * s.inner + i;
            dot += yd->grad(idx) * yd->values(idx);
          }
          for (Index kk = 0; kk < s.extent; ++kk) {
            Index idx = (o * s.extent + kk) * s.inner + i;
            ad->grad(idx) += yd->values(idx) * (yd->grad(idx) - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: rank >= 1 required");
  if (eps <= 0.0) throw DomainError("layer_norm: eps must be positive");
  Index d = x.extent(x.rank() - 1);
  if (gain.rank() != 1 || bias.rank() != 1 || gain.extent(0) != d || bias.extent(0) != d) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
  }
  Index rows = x.numel() / d;
  Array xhat(x.numel());
  Array inv_sd(rows);
  Array out(x.numel());
  for (Index r = 0; r < rows; ++r) {
    auto seg = x.values().segment(r * d, d);
    double mu = seg.mean();
    double var = (seg - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sd(r) = is;
    xhat.segment(r * d, d) = (seg - mu) * is;
    out.segment(r * d, d) = xhat.segment(r * d, d) * gain.values() + bias.values();
  }
  bool rg = tape_wants(x) || tape_wants(gain) || tape_wants(bias);
  Tensor y = make_result(x.shape(), std::move(out), rg);
  if (rg) {
    auto xd = x.data(), gd = gain.data(), bd = bias.data(), yd = y.data();
    record("layer_norm", {xd, gd, bd}, y,
           [xd, gd, bd, yd, rows, d, xhat = std::move(xhat), inv_sd = std::move(inv_sd)]() {
             for (Index r = 0; r < rows; ++r) {
               auto gy = yd->grad.segment(r * d, d);
               auto xh = xhat.segment(r * d, d);
               if (gd->requires_grad) {
                 gd->ensure_grad();
                 gd->grad += gy * xh;
               }
               if (bd->requires_grad) {
                 bd->ensure_grad();
                 bd->grad += gy;
               }
               if (xd->requires_grad) {
                 xd->ensure_grad();
                 Array dxhat = gy * gd->values;
                 double m1 = dxhat.mean();
                 double m2 = (dxhat * xh).mean();
                 xd->grad.segment(r * d, d) += inv_sd(r) * (dxhat - m1 - xh * m2);
               }
             }
           });
  }
  return y;
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

namespace {

double fd_check_impl(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                     const std::vector<Index>* coords, double eps) {
  Tensor probe = Tensor::from_array(x.shape(), x.values(), true);
  Array analytic;
  {
    Tape tape;
    Tensor loss = f(probe);
    if (loss.numel() != 1) throw ShapeError("finite_diff_check: f must return a scalar");
    tape.backward(loss);
    probe.data()->ensure_grad();
    analytic = probe.data()->grad;
  }
  auto eval_at = [&](const Array& vals) {
    Tensor t = Tensor::from_array(x.shape(), vals, false);
    return f(t).value();
  };
  double worst = 0.0;
  auto check_coord = [&](Index i) {
    Array v = x.values();
    v(i) += eps;
    double fp = eval_at(v);
    v(i) -= 2.0 * eps;
    double fm = eval_at(v);
    double fd = (fp - fm) / (2.0 * eps);
    double err = std::abs(analytic(i) - fd) / std::max(1.0, std::abs(analytic(i)));
    worst = std::max(worst, err);
  };
  if (coords != nullptr) {
    for (Index i : *coords) check_coord(i);
  } else {
    for (Index i = 0; i < x.numel(); ++i) check_coord(i);
  }
  return worst;
}

}  // namespace

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps) {
  return fd_check_impl(f, x, nullptr, eps);
}

double finite_diff_check_coords(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                const std::vector<Index>& coords, double eps) {
  return fd_check_impl(f, x, &coords, eps);
}

}  // namespace vtp::ad
