#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dman {

size_t shape_size(const Shape& shape) {
  size_t n = 1;
  for (size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data.assign(shape_size(node->shape), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  const size_t n = shape_size(node->shape);
  if (data.empty() && n > 0) data.assign(n, 0.0);
  if (data.size() != n) {
    throw DimensionError("Tensor: data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(node->shape));
  }
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

double Tensor::at(size_t row, size_t col) const {
  if (rank() != 2) throw DimensionError("Tensor::at(r,c) needs rank 2, got " + shape_str(shape()));
  return node_->data[row * node_->shape[1] + col];
}

double Tensor::value() const {
  if (size() != 1) throw DimensionError("Tensor::value: tensor is not scalar, shape " + shape_str(shape()));
  return node_->data[0];
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) throw StateError("Tensor::grad: no gradient present; run backward first");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) throw StateError("Tensor::grad: no gradient present; run backward first");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

bool Tensor::all_finite() const {
  for (double v : node_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

bool out_grad_ready(const std::shared_ptr<TensorNode>& out) { return !out->grad.empty(); }

struct BinaryPlan {
  Shape out_shape;
  size_t total = 0;
  size_t last = 1;   // extent of the output's final axis
  bool a_bcast = false;
  bool b_bcast = false;
};

BinaryPlan plan_binary(const Shape& a, const Shape& b, const char* op) {
  if (a == b) {
    BinaryPlan p;
    p.out_shape = a;
    p.total = shape_size(a);
    p.last = a.empty() ? 1 : a.back();
    return p;
  }
  if (a.size() == b.size() && !a.empty()) {
    bool lead_equal = true;
    for (size_t i = 0; i + 1 < a.size(); ++i) lead_equal = lead_equal && a[i] == b[i];
    if (lead_equal && (a.back() == 1 || b.back() == 1)) {
      BinaryPlan p;
      p.a_bcast = a.back() == 1;
      p.b_bcast = b.back() == 1;
      p.out_shape = p.a_bcast ? b : a;
      p.total = shape_size(p.out_shape);
      p.last = p.out_shape.back();
      return p;
    }
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b) +
                       " (equal shapes or a trailing-1 axis required)");
}

}  // namespace

Tensor Tape::make_result(Shape shape, std::vector<double> data, bool any_input_grad) {
  return Tensor::from(std::move(shape), std::move(data), recording(any_input_grad));
}

// kind: 0 add, 1 sub, 2 mul, 3 div
Tensor Tape::binary_op(const Tensor& a, const Tensor& b, int kind) {
  static const char* names[] = {"add", "sub", "mul", "div"};
  const BinaryPlan p = plan_binary(a.shape(), b.shape(), names[kind]);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(p.total);
  for (size_t i = 0; i < p.total; ++i) {
    const double x = av[p.a_bcast ? i / p.last : i];
    const double y = bv[p.b_bcast ? i / p.last : i];
    switch (kind) {
      case 0: out[i] = x + y; break;
      case 1: out[i] = x - y; break;
      case 2: out[i] = x * y; break;
      default:
        if (y == 0.0) throw DomainError("div: division by zero");
        out[i] = x / y;
    }
  }
  const bool any = a.requires_grad() || b.requires_grad();
  Tensor result = make_result(p.out_shape, std::move(out), any);
  if (result.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = result.node();
    record([an, bn, on, p, kind] {
      if (!out_grad_ready(on)) return;
      if (an->requires_grad) an->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      for (size_t i = 0; i < p.total; ++i) {
        const double g = on->grad[i];
        const size_t ia = p.a_bcast ? i / p.last : i;
        const size_t ib = p.b_bcast ? i / p.last : i;
        switch (kind) {
          case 0:
            if (an->requires_grad) an->grad[ia] += g;
            if (bn->requires_grad) bn->grad[ib] += g;
            break;
          case 1:
            if (an->requires_grad) an->grad[ia] += g;
            if (bn->requires_grad) bn->grad[ib] -= g;
            break;
          case 2:
            if (an->requires_grad) an->grad[ia] += g * bn->data[ib];
            if (bn->requires_grad) bn->grad[ib] += g * an->data[ia];
            break;
          default: {
            const double y = bn->data[ib];
            if (an->requires_grad) an->grad[ia] += g / y;
            if (bn->requires_grad) bn->grad[ib] -= g * an->data[ia] / (y * y);
          }
        }
      }
    });
  }
  return result;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return binary_op(a, b, 0); }
Tensor Tape::sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, 1); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, 2); }
Tensor Tape::div(const Tensor& a, const Tensor& b) { return binary_op(a, b, 3); }

Tensor Tape::affine(const Tensor& x, double scale, double shift) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = scale * x.at(i) + shift;
  Tensor result = make_result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on, scale] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += scale * on->grad[i];
    });
  }
  return result;
}

Tensor Tape::tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
  Tensor result = make_result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->data[i];
        xn->grad[i] += on->grad[i] * (1.0 - y * y);
      }
    });
  }
  return result;
}

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.at(i)));
  Tensor result = make_result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        const double y = on->data[i];
        xn->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    });
  }
  return result;
}

Tensor Tape::log(const Tensor& x) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) {
    if (x.at(i) <= 0.0) throw DomainError("log: non-positive input; callers must clip first");
    out[i] = std::log(x.at(i));
  }
  Tensor result = make_result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] / xn->data[i];
    });
  }
  return result;
}

Tensor Tape::max0(const Tensor& x) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) > 0.0 ? x.at(i) : 0.0;
  Tensor result = make_result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        if (xn->data[i] > 0.0) xn->grad[i] += on->grad[i];
    });
  }
  return result;
}

Tensor Tape::clip(const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) throw InputError("clip: lo must be < hi");
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(x.at(i), lo), hi);
  Tensor result = make_result(x.shape(), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on, lo, hi] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) {
        const double v = xn->data[i];
        if (v > lo && v < hi) xn->grad[i] += on->grad[i];
      }
    });
  }
  return result;
}

Tensor Tape::transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: rank-2 tensor required, got " + shape_str(x.shape()));
  const size_t m = x.extent(0), n = x.extent(1);
  std::vector<double> out(m * n);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j * m + i] = x.at(i * n + j);
  Tensor result = make_result({n, m}, std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on, m, n] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) xn->grad[i * n + j] += on->grad[j * m + i];
    });
  }
  return result;
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: size mismatch, " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  Tensor result = make_result(std::move(shape), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return result;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < m; ++i)
    for (size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      for (size_t j = 0; j < n; ++j) out[i * n + j] += aik * bv[kk * n + j];
    }
  const bool any = a.requires_grad() || b.requires_grad();
  Tensor result = make_result({m, n}, std::move(out), any);
  if (result.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = result.node();
    record([an, bn, on, m, k, n] {
      if (!out_grad_ready(on)) return;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) {
            const double g = on->grad[i * n + j];
            for (size_t kk = 0; kk < k; ++kk) an->grad[i * k + kk] += g * bn->data[kk * n + j];
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < m; ++i)
          for (size_t kk = 0; kk < k; ++kk) {
            const double aik = an->data[i * k + kk];
            for (size_t j = 0; j < n; ++j) bn->grad[kk * n + j] += aik * on->grad[i * n + j];
          }
      }
    });
  }
  return result;
}

Tensor Tape::add_rowvec(const Tensor& matrix, const Tensor& vec) {
  if (matrix.rank() != 2 || vec.rank() != 1 || vec.extent(0) != matrix.extent(1)) {
    throw DimensionError("add_rowvec: incompatible shapes " + shape_str(matrix.shape()) + " and " +
                         shape_str(vec.shape()));
  }
  const size_t r = matrix.extent(0), c = matrix.extent(1);
  std::vector<double> out(r * c);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) out[i * c + j] = matrix.at(i * c + j) + vec.at(j);
  const bool any = matrix.requires_grad() || vec.requires_grad();
  Tensor result = make_result({r, c}, std::move(out), any);
  if (result.requires_grad()) {
    auto mn = matrix.node(), vn = vec.node(), on = result.node();
    record([mn, vn, on, r, c] {
      if (!out_grad_ready(on)) return;
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (size_t i = 0; i < r * c; ++i) mn->grad[i] += on->grad[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (size_t i = 0; i < r; ++i)
          for (size_t j = 0; j < c; ++j) vn->grad[j] += on->grad[i * c + j];
      }
    });
  }
  return result;
}

Tensor Tape::lfc_linear(const Tensor& w, const Tensor& bias, const Tensor& x) {
  if (w.rank() != 3 || bias.rank() != 2 || x.rank() != 2 || w.extent(0) != x.extent(0) ||
      bias.extent(0) != x.extent(0) || bias.extent(1) != w.extent(1) || w.extent(2) != x.extent(1)) {
    throw DimensionError("lfc_linear: incompatible shapes w=" + shape_str(w.shape()) +
                         " bias=" + shape_str(bias.shape()) + " x=" + shape_str(x.shape()));
  }
  const size_t slices = w.extent(0), dout = w.extent(1), din = w.extent(2);
  std::vector<double> out(slices * dout);
  const auto& wv = w.values();
  const auto& bv = bias.values();
  const auto& xv = x.values();
  for (size_t s = 0; s < slices; ++s)
    for (size_t o = 0; o < dout; ++o) {
      double acc = bv[s * dout + o];
      const size_t wbase = (s * dout + o) * din;
      for (size_t i = 0; i < din; ++i) acc += wv[wbase + i] * xv[s * din + i];
      out[s * dout + o] = acc;
    }
  const bool any = w.requires_grad() || bias.requires_grad() || x.requires_grad();
  Tensor result = make_result({slices, dout}, std::move(out), any);
  if (result.requires_grad()) {
    auto wn = w.node(), bn = bias.node(), xn = x.node(), on = result.node();
    record([wn, bn, xn, on, slices, dout, din] {
      if (!out_grad_ready(on)) return;
      if (wn->requires_grad) wn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      for (size_t s = 0; s < slices; ++s)
        for (size_t o = 0; o < dout; ++o) {
          const double g = on->grad[s * dout + o];
          if (g == 0.0) continue;
          const size_t wbase = (s * dout + o) * din;
          if (bn->requires_grad) bn->grad[s * dout + o] += g;
          for (size_t i = 0; i < din; ++i) {
            if (wn->requires_grad) wn->grad[wbase + i] += g * xn->data[s * din + i];
            if (xn->requires_grad) xn->grad[s * din + i] += g * wn->data[wbase + i];
          }
        }
    });
  }
  return result;
}

Tensor Tape::softmax(const Tensor& x, size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const auto& shape = x.shape();
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const size_t d = shape[axis];
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (size_t o = 0; o < outer; ++o)
    for (size_t in = 0; in < inner; ++in) {
      const size_t base = o * d * inner + in;
      double mx = xv[base];
      for (size_t k = 1; k < d; ++k) mx = std::max(mx, xv[base + k * inner]);
      double total = 0.0;
      for (size_t k = 0; k < d; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (size_t k = 0; k < d; ++k) out[base + k * inner] /= total;
    }
  Tensor result = make_result(shape, std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    record([xn, on, outer, inner, d] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
          const size_t base = o * d * inner + in;
          double dot = 0.0;
          for (size_t k = 0; k < d; ++k) dot += on->grad[base + k * inner] * on->data[base + k * inner];
          for (size_t k = 0; k < d; ++k) {
            const size_t idx = base + k * inner;
            xn->grad[idx] += on->data[idx] * (on->grad[idx] - dot);
          }
        }
    });
  }
  return result;
}

Tensor Tape::reduce(const Tensor& x, bool mean_kind) {
  const size_t n = x.size();
  if (mean_kind && n == 0) throw DomainError("mean: empty tensor");
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) total += x.at(i);
  if (mean_kind) total /= static_cast<double>(n);
  Tensor result = make_result({}, {total}, x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    const double scale = mean_kind ? 1.0 / static_cast<double>(n) : 1.0;
    record([xn, on, scale] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      const double g = on->grad[0] * scale;
      for (double& gi : xn->grad) gi += g;
    });
  }
  return result;
}

Tensor Tape::reduce_axis(const Tensor& x, size_t axis, bool mean_kind) {
  if (axis >= x.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const auto& shape = x.shape();
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const size_t d = shape[axis];
  if (mean_kind && d == 0) throw DomainError("mean: empty axis");
  Shape out_shape = shape;
  out_shape.erase(out_shape.begin() + static_cast<ptrdiff_t>(axis));
  std::vector<double> out(outer * inner, 0.0);
  const auto& xv = x.values();
  for (size_t o = 0; o < outer; ++o)
    for (size_t k = 0; k < d; ++k)
      for (size_t in = 0; in < inner; ++in) out[o * inner + in] += xv[o * d * inner + k * inner + in];
  if (mean_kind)
    for (double& v : out) v /= static_cast<double>(d);
  Tensor result = make_result(std::move(out_shape), std::move(out), x.requires_grad());
  if (result.requires_grad()) {
    auto xn = x.node(), on = result.node();
    const double scale = mean_kind ? 1.0 / static_cast<double>(d) : 1.0;
    record([xn, on, outer, inner, d, scale] {
      if (!out_grad_ready(on)) return;
      xn->ensure_grad();
      for (size_t o = 0; o < outer; ++o)
        for (size_t k = 0; k < d; ++k)
          for (size_t in = 0; in < inner; ++in)
            xn->grad[o * d * inner + k * inner + in] += on->grad[o * inner + in] * scale;
    });
  }
  return result;
}

Tensor Tape::sum(const Tensor& x) { return reduce(x, false); }
Tensor Tape::sum(const Tensor& x, size_t axis) { return reduce_axis(x, axis, false); }
Tensor Tape::mean(const Tensor& x) { return reduce(x, true); }
Tensor Tape::mean(const Tensor& x, size_t axis) { return reduce_axis(x, axis, true); }

Tape::DotNorm Tape::dot_and_norm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size() || a.size() == 0) {
    throw DimensionError("dot_and_norm: equal-length vectors of positive length required, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const size_t d = a.size();
  double dot = 0.0, sa = 0.0, sb = 0.0;
  for (size_t i = 0; i < d; ++i) {
    dot += a.at(i) * b.at(i);
    sa += a.at(i) * a.at(i);
    sb += b.at(i) * b.at(i);
  }
  const bool any = a.requires_grad() || b.requires_grad();
  DotNorm r{make_result({}, {dot}, any), make_result({}, {std::sqrt(sa)}, any), make_result({}, {std::sqrt(sb)}, any)};
  if (recording(any)) {
    auto an = a.node(), bn = b.node();
    auto dn = r.dot.node(), nan_ = r.norm_a.node(), nbn = r.norm_b.node();
    record([an, bn, dn, nan_, nbn, d] {
      const double gd = out_grad_ready(dn) ? dn->grad[0] : 0.0;
      const double gna = out_grad_ready(nan_) ? nan_->grad[0] : 0.0;
      const double gnb = out_grad_ready(nbn) ? nbn->grad[0] : 0.0;
      if (gd == 0.0 && gna == 0.0 && gnb == 0.0) return;
      const double na = nan_->data[0], nb = nbn->data[0];
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < d; ++i) {
          double g = gd * bn->data[i];
          if (gna != 0.0 && na > 0.0) g += gna * an->data[i] / na;
          an->grad[i] += g;
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < d; ++i) {
          double g = gd * an->data[i];
          if (gnb != 0.0 && nb > 0.0) g += gnb * bn->data[i] / nb;
          bn->grad[i] += g;
        }
      }
    });
  }
  return r;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw InputError("backward: undefined loss tensor");
  if (loss.size() != 1) {
    throw InputError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!grad_enabled_) throw StateError("backward: tape has gradients disabled");
  if (consumed_) throw StateError("backward: tape already consumed; rebuild the forward graph first");
  consumed_ = true;
  if (!loss.requires_grad()) return;  // constant loss: every gradient is zero
  auto ln = loss.node();
  ln->ensure_grad();
  ln->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace dman
