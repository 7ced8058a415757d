#include "bicam/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bicam/error.hpp"

namespace bicam::ad {

const Tensor& Var::value() const {
  if (!graph_) throw StateError("use of an unbound Var");
  return graph_->value(id_);
}

// ---- Graph ---------------------------------------------------------------

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{"leaf", std::make_shared<const Tensor>(std::move(value)), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  return constant(std::make_shared<const Tensor>(std::move(value)));
}

Var Graph::constant(std::shared_ptr<const Tensor> value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::vector<Var> parents,
                  BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by " + std::string(op));
  }
  Node node;
  node.op = op;
  node.value = std::make_shared<const Tensor>(std::move(value));
  node.parents.reserve(parents.size());
  for (const auto& p : parents) {
    if (&p.graph() != this) throw ContractError("operands of " + std::string(op) +
                                                " belong to different graphs");
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

namespace {

class NodeSink final : public GradSink {
 public:
  NodeSink(const std::vector<NodeId>& parents, const std::vector<bool>& wants,
           std::vector<std::optional<Tensor>>& grads, const std::vector<Shape>& shapes)
      : parents_(parents), wants_(wants), grads_(grads), shapes_(shapes) {}

  bool wants(std::size_t parent) const override { return wants_[parent]; }

  void add(std::size_t parent, const Tensor& grad) override {
    if (!wants_[parent]) return;
    auto& slot = grads_[parents_[parent]];
    if (grad.shape() != shapes_[parent]) {
      throw DimensionError("backward rule produced gradient " + shape_str(grad.shape()) +
                           " for value " + shape_str(shapes_[parent]));
    }
    if (!slot) {
      slot = grad;
      return;
    }
    auto dst = slot->data();
    auto src = grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

 private:
  const std::vector<NodeId>& parents_;
  const std::vector<bool>& wants_;
  std::vector<std::optional<Tensor>>& grads_;
  const std::vector<Shape>& shapes_;
};

}  // namespace

void Graph::backward(Var root) {
  if (&root.graph() != this) throw ContractError("backward root belongs to another graph");
  const Tensor& rv = value(root.id());
  if (rv.size() != 1) {
    throw ContractError("backward requires a scalar root, got shape " + shape_str(rv.shape()));
  }
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[root.id()] = Tensor::ones(rv.shape());

  for (std::size_t k = root.id() + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!grads_[k] || !node.backward) continue;
    std::vector<bool> wants(node.parents.size());
    std::vector<Shape> shapes(node.parents.size());
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      wants[i] = nodes_[node.parents[i]].requires_grad;
      shapes[i] = nodes_[node.parents[i]].value->shape();
    }
    NodeSink sink(node.parents, wants, grads_, shapes);
    node.backward(*grads_[k], sink);
  }
}

Tensor Graph::grad(Var var) const {
  if (var.id() < grads_.size() && grads_[var.id()]) return *grads_[var.id()];
  return Tensor(value(var.id()).shape());
}

bool Graph::has_grad(Var var) const {
  return var.id() < grads_.size() && grads_[var.id()].has_value();
}

// ---- helpers --------------------------------------------------------------

namespace {

struct AxisView {
  std::size_t outer = 1;
  std::size_t dim = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.dim = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<long>(tail.size()));
}

// c[m,n] += a[m,k] . b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += g[m,n] . b[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      const double* grow = g + i * n;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T . g[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* grow = g + i * n;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

Tensor permute_values(const Tensor& a, std::span<const std::size_t> perm) {
  const auto& in = a.shape();
  const std::size_t r = in.size();
  if (perm.size() != r) throw DimensionError("permutation rank mismatch");
  Shape out_shape(r);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[perm[i]];
    strides[i] = in_strides[perm[i]];
  }
  Tensor out(out_shape);
  auto dst = out.data();
  auto src = a.data();
  std::vector<std::size_t> idx(r, 0);
  std::size_t src_off = 0;
  for (std::size_t n = 0; n < dst.size(); ++n) {
    dst[n] = src[src_off];
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      src_off += strides[ax];
      if (idx[ax] < out_shape[ax]) break;
      src_off -= strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

Tensor softmax_values(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax temperature must be positive, got " +
                         std::to_string(temperature));
  }
  if (x.rank() == 0) throw DimensionError("softmax of a rank-0 tensor");
  const std::size_t n = x.dim(-1);
  Tensor y(x.shape());
  auto src = x.data();
  auto dst = y.data();
  for (std::size_t row = 0; row < x.size() / n; ++row) {
    const double* xi = src.data() + row * n;
    double* yi = dst.data() + row * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp((xi[j] - mx) / temperature);
      z += yi[j];
    }
    for (std::size_t j = 0; j < n; ++j) yi[j] /= z;
  }
  return y;
}

// ---- primitives -----------------------------------------------------------

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() == bv.shape()) {
    Tensor out = av;
    auto o = out.data();
    auto bd = bv.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return a.graph().record("add", std::move(out), {a, b}, [](const Tensor& g, GradSink& s) {
      s.add(0, g);
      s.add(1, g);
    });
  }
  if (!is_suffix(av.shape(), bv.shape()) || bv.size() == 0) {
    throw DimensionError("add: cannot broadcast " + shape_str(bv.shape()) + " onto " +
                         shape_str(av.shape()));
  }
  const std::size_t inner = bv.size();
  Tensor out = av;
  auto o = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i % inner];
  Shape bshape = bv.shape();
  return a.graph().record("add", std::move(out), {a, b},
                          [inner, bshape](const Tensor& g, GradSink& s) {
                            s.add(0, g);
                            if (!s.wants(1)) return;
                            Tensor gb(bshape);
                            auto gd = g.data();
                            auto dst = gb.data();
                            for (std::size_t i = 0; i < gd.size(); ++i) dst[i % inner] += gd[i];
                            s.add(1, gb);
                          });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("mul", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.graph().record("mul", std::move(out), {a, b},
                          [av, bv](const Tensor& g, GradSink& s) {
                            if (s.wants(0)) {
                              Tensor ga(g.shape());
                              for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
                              s.add(0, ga);
                            }
                            if (s.wants(1)) {
                              Tensor gb(g.shape());
                              for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
                              s.add(1, gb);
                            }
                          });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.graph().record("scale", std::move(out), {a}, [factor](const Tensor& g, GradSink& s) {
    Tensor ga = g;
    for (auto& v : ga.data()) v *= factor;
    s.add(0, ga);
  });
}

Var add_scalar(Var a, double shift) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += shift;
  return a.graph().record("add_scalar", std::move(out), {a},
                          [](const Tensor& g, GradSink& s) { s.add(0, g); });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || bv.rank() < 2) throw DimensionError("matmul needs rank >= 2 operands");
  const std::size_t m = av.dim(-2);
  const std::size_t k = av.dim(-1);
  if (bv.dim(-2) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(av.shape()) +
                         " . " + shape_str(bv.shape()));
  }
  const std::size_t n = bv.dim(-1);
  const bool shared_b = bv.rank() == 2;
  if (!shared_b) {
    if (bv.rank() != av.rank() ||
        !std::equal(av.shape().begin(), av.shape().end() - 2, bv.shape().begin())) {
      throw DimensionError("matmul: batch dimensions disagree, " + shape_str(av.shape()) +
                           " . " + shape_str(bv.shape()));
    }
  }
  const std::size_t batch = av.size() / (m * k);
  Shape out_shape(av.shape().begin(), av.shape().end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm_nn(av.data().data() + bi * m * k, bv.data().data() + (shared_b ? 0 : bi * k * n),
            out.data().data() + bi * m * n, m, k, n);
  }
  return a.graph().record(
      "matmul", std::move(out), {a, b},
      [av, bv, m, k, n, batch, shared_b](const Tensor& g, GradSink& s) {
        if (s.wants(0)) {
          Tensor ga(av.shape());
          for (std::size_t bi = 0; bi < batch; ++bi) {
            gemm_nt(g.data().data() + bi * m * n,
                    bv.data().data() + (shared_b ? 0 : bi * k * n),
                    ga.data().data() + bi * m * k, m, k, n);
          }
          s.add(0, ga);
        }
        if (s.wants(1)) {
          Tensor gb(bv.shape());
          for (std::size_t bi = 0; bi < batch; ++bi) {
            gemm_tn(av.data().data() + bi * m * k, g.data().data() + bi * m * n,
                    gb.data().data() + (shared_b ? 0 : bi * k * n), m, k, n);
          }
          s.add(1, gb);
        }
      });
}

Var transpose(Var a, int axis1, int axis2) {
  const std::size_t r = a.value().rank();
  std::vector<std::size_t> perm(r);
  for (std::size_t i = 0; i < r; ++i) perm[i] = i;
  std::swap(perm[normalize_axis(axis1, r)], perm[normalize_axis(axis2, r)]);
  return a.graph().record("transpose", permute_values(a.value(), perm), {a},
                          [perm](const Tensor& g, GradSink& s) {
                            s.add(0, permute_values(g, perm));
                          });
}

Var reshape(Var a, Shape shape) {
  Shape original = a.value().shape();
  return a.graph().record("reshape", a.value().reshaped(std::move(shape)), {a},
                          [original](const Tensor& g, GradSink& s) {
                            s.add(0, g.reshaped(original));
                          });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts[0].value().shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> dims;
  for (const auto& p : parts) {
    const Shape& s = p.value().shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != first[i]) {
        throw DimensionError("concat: shape mismatch " + shape_str(s) + " vs " +
                             shape_str(first));
      }
    }
    dims.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  const AxisView ov = axis_view(out_shape, ax);
  Tensor out(out_shape);
  std::size_t start = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    auto src = parts[pi].value().data();
    const std::size_t chunk = dims[pi] * ov.inner;
    for (std::size_t o = 0; o < ov.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk,
                  out.data().data() + o * ov.dim * ov.inner + start * ov.inner);
    }
    start += dims[pi];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.value().shape());
  return parts[0].graph().record(
      "concat", std::move(out), std::move(parents),
      [ov, dims, shapes](const Tensor& g, GradSink& s) {
        std::size_t start = 0;
        for (std::size_t pi = 0; pi < dims.size(); ++pi) {
          const std::size_t chunk = dims[pi] * ov.inner;
          if (s.wants(pi)) {
            Tensor gp(shapes[pi]);
            for (std::size_t o = 0; o < ov.outer; ++o) {
              std::copy_n(g.data().data() + o * ov.dim * ov.inner + start * ov.inner, chunk,
                          gp.data().data() + o * chunk);
            }
            s.add(pi, gp);
          }
          start += dims[pi];
        }
      });
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  const Shape& in = a.value().shape();
  const std::size_t ax = normalize_axis(axis, in.size());
  if (begin > end || end > in[ax]) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for axis of size " + std::to_string(in[ax]));
  }
  const AxisView iv = axis_view(in, ax);
  Shape out_shape = in;
  out_shape[ax] = end - begin;
  const std::size_t chunk = (end - begin) * iv.inner;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < iv.outer; ++o) {
    std::copy_n(a.value().data().data() + o * iv.dim * iv.inner + begin * iv.inner, chunk,
                out.data().data() + o * chunk);
  }
  Shape in_shape = in;
  return a.graph().record("slice", std::move(out), {a},
                          [iv, in_shape, begin, chunk](const Tensor& g, GradSink& s) {
                            Tensor ga(in_shape);
                            for (std::size_t o = 0; o < iv.outer; ++o) {
                              std::copy_n(g.data().data() + o * chunk, chunk,
                                          ga.data().data() + o * iv.dim * iv.inner +
                                              begin * iv.inner);
                            }
                            s.add(0, ga);
                          });
}

Var concat_last(std::span<const Var> parts) { return concat(parts, -1); }

Var slice_last(Var a, std::size_t begin, std::size_t end) { return slice(a, -1, begin, end); }

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  Shape shape = a.value().shape();
  return a.graph().record("sum", Tensor::scalar(total), {a},
                          [shape](const Tensor& g, GradSink& s) {
                            s.add(0, Tensor(shape, g.item()));
                          });
}

Var sum_axis(Var a, int axis) {
  const Shape& in = a.value().shape();
  const std::size_t ax = normalize_axis(axis, in.size());
  const AxisView v = axis_view(in, ax);
  Shape out_shape = in;
  out_shape.erase(out_shape.begin() + static_cast<long>(ax));
  Tensor out(out_shape);
  auto src = a.value().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t d = 0; d < v.dim; ++d)
      for (std::size_t i = 0; i < v.inner; ++i)
        out[o * v.inner + i] += src[(o * v.dim + d) * v.inner + i];
  Shape in_shape = in;
  return a.graph().record("sum_axis", std::move(out), {a},
                          [v, in_shape](const Tensor& g, GradSink& s) {
                            Tensor ga(in_shape);
                            for (std::size_t o = 0; o < v.outer; ++o)
                              for (std::size_t d = 0; d < v.dim; ++d)
                                for (std::size_t i = 0; i < v.inner; ++i)
                                  ga[(o * v.dim + d) * v.inner + i] = g[o * v.inner + i];
                            s.add(0, ga);
                          });
}

Var mean_axis(Var a, int axis) {
  const std::size_t n = a.value().dim(axis);
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(n));
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var softmax(Var x, double temperature) {
  Tensor y = softmax_values(x.value(), temperature);
  const std::size_t n = y.dim(-1);
  return x.graph().record("softmax", y, {x}, [y, n, temperature](const Tensor& g, GradSink& s) {
    Tensor gx(y.shape());
    for (std::size_t row = 0; row < y.size() / n; ++row) {
      const std::size_t base = row * n;
      double inner = 0.0;
      for (std::size_t j = 0; j < n; ++j) inner += g[base + j] * y[base + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[base + j] = y[base + j] * (g[base + j] - inner) / temperature;
      }
    }
    s.add(0, gx);
  });
}

Var layernorm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  if (xv.rank() == 0) throw DimensionError("layernorm of a rank-0 tensor");
  const std::size_t d = xv.dim(-1);
  if (gv.shape() != Shape{d} || bv.shape() != Shape{d}) {
    throw DimensionError("layernorm: gain/bias must have shape [" + std::to_string(d) + "]");
  }
  const std::size_t rows = xv.size() / d;
  Tensor xhat(xv.shape());
  std::vector<double> rstd(rows);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[base + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv[base + j] - mu) * (xv[base + j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[base + j] = (xv[base + j] - mu) * rstd[r];
      out[base + j] = xhat[base + j] * gv[j] + bv[j];
    }
  }
  return x.graph().record(
      "layernorm", std::move(out), {x, gain, bias},
      [xhat, rstd, gv, d, rows](const Tensor& g, GradSink& s) {
        if (s.wants(0)) {
          Tensor gx(xhat.shape());
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * d;
            double mean_dxhat = 0.0;
            double mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[base + j] * gv[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[base + j];
            }
            mean_dxhat *= inv_d;
            mean_dxhat_xhat *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = g[base + j] * gv[j];
              gx[base + j] = rstd[r] * (dxh - mean_dxhat - xhat[base + j] * mean_dxhat_xhat);
            }
          }
          s.add(0, gx);
        }
        if (s.wants(1) || s.wants(2)) {
          Tensor gg(Shape{d});
          Tensor gb(Shape{d});
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += g[r * d + j] * xhat[r * d + j];
              gb[j] += g[r * d + j];
            }
          }
          s.add(1, gg);
          s.add(2, gb);
        }
      });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

Var gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  }
  return x.graph().record("gelu", std::move(out), {x}, [xv](const Tensor& g, GradSink& s) {
    Tensor gx(xv.shape());
    const double inv_sqrt_2pi = std::numbers::inv_sqrtpi * kInvSqrt2;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] = g[i] * (cdf + v * pdf);
    }
    s.add(0, gx);
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw DimensionError("cross_entropy expects logits[B, C]");
  const std::size_t batch = z.dim(0);
  const std::size_t classes = z.dim(1);
  if (labels.size() != batch) throw DimensionError("cross_entropy: label count != batch");
  std::vector<std::size_t> y(labels.begin(), labels.end());
  for (auto c : y) {
    if (c >= classes) throw ParameterError("cross_entropy: label out of range");
  }
  Tensor p = softmax_values(z, 1.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    double mx = z[b * classes];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, z[b * classes + j]);
    double acc = 0.0;
    for (std::size_t j = 0; j < classes; ++j) acc += std::exp(z[b * classes + j] - mx);
    loss += mx + std::log(acc) - z[b * classes + y[b]];
  }
  loss /= static_cast<double>(batch);
  return logits.graph().record(
      "cross_entropy", Tensor::scalar(loss), {logits},
      [p, y, batch, classes](const Tensor& g, GradSink& s) {
        Tensor gz = p;
        for (std::size_t b = 0; b < batch; ++b) gz[b * classes + y[b]] -= 1.0;
        const double f = g.item() / static_cast<double>(batch);
        for (auto& v : gz.data()) v *= f;
        s.add(0, gz);
      });
}

Var patchify(Var image, std::size_t patch) {
  const Tensor& iv = image.value();
  if (iv.rank() != 4) throw DimensionError("patchify expects image[B, C, H, W]");
  const std::size_t B = iv.dim(0), C = iv.dim(1), H = iv.dim(2), W = iv.dim(3);
  if (patch == 0 || H % patch != 0 || W % patch != 0) {
    throw DimensionError("patchify: image " + shape_str(iv.shape()) +
                         " not divisible by patch size " + std::to_string(patch));
  }
  const std::size_t gh = H / patch, gw = W / patch;
  const std::size_t feat = C * patch * patch;
  // index map: output position -> input position
  std::vector<std::size_t> map(iv.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t gy = 0; gy < gh; ++gy)
      for (std::size_t gx = 0; gx < gw; ++gx)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t py = 0; py < patch; ++py)
            for (std::size_t px = 0; px < patch; ++px) {
              const std::size_t out = ((b * gh * gw + gy * gw + gx) * feat) +
                                      (c * patch + py) * patch + px;
              map[out] = ((b * C + c) * H + gy * patch + py) * W + gx * patch + px;
            }
  Tensor out(Shape{B, gh * gw, feat});
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = iv[map[i]];
  Shape in_shape = iv.shape();
  return image.graph().record("patchify", std::move(out), {image},
                              [map, in_shape](const Tensor& g, GradSink& s) {
                                Tensor gi(in_shape);
                                for (std::size_t i = 0; i < map.size(); ++i) gi[map[i]] = g[i];
                                s.add(0, gi);
                              });
}

}  // namespace bicam::ad
