#include "lgplug/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "lgplug/kernels.hpp"

namespace lgplug::ad {

namespace {

std::atomic<std::uint64_t> g_order{1};

std::shared_ptr<Node> make_node(Matrix val, std::vector<std::shared_ptr<Node>> parents,
                                std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->order = g_order.fetch_add(1);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void accum(Node& p, const Matrix& g) {
  if (!p.requires_grad) return;
  kern::add(g.data(), p.ensure_grad().data(), g.size());
}

}  // namespace

Var Var::leaf(Matrix value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->order = g_order.fetch_add(1);
  n->requires_grad = requires_grad;
  return Var(n);
}

Var constant(Matrix m) { return Var::leaf(std::move(m), false); }
Var param(Matrix m) { return Var::leaf(std::move(m), true); }

Var matmul(Var a, Var b) {
  Matrix c = lgplug::matmul(a.value(), b.value());
  return Var(make_node(std::move(c), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accum(pa, lgplug::matmul_nt(self.grad, pb.val));
    if (pb.requires_grad) accum(pb, lgplug::matmul_tn(pa.val, self.grad));
  }));
}

Var matmul_nt(Var a, Var b) {
  Matrix c = lgplug::matmul_nt(a.value(), b.value());
  return Var(make_node(std::move(c), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accum(pa, lgplug::matmul(self.grad, pb.val));
    if (pb.requires_grad) accum(pb, lgplug::matmul_tn(self.grad, pa.val));
  }));
}

Var transpose(Var a) {
  return Var(make_node(lgplug::transpose(a.value()), {a.node()}, [](Node& self) {
    accum(*self.parents[0], lgplug::transpose(self.grad));
  }));
}

Var add(Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("ad::add: shape mismatch");
  Matrix c = a.value();
  add_inplace(c, b.value());
  return Var(make_node(std::move(c), {a.node(), b.node()}, [](Node& self) {
    accum(*self.parents[0], self.grad);
    accum(*self.parents[1], self.grad);
  }));
}

Var sub(Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("ad::sub: shape mismatch");
  Matrix c = a.value();
  axpy_inplace(c, -1.0, b.value());
  return Var(make_node(std::move(c), {a.node(), b.node()}, [](Node& self) {
    accum(*self.parents[0], self.grad);
    Node& pb = *self.parents[1];
    if (pb.requires_grad) {
      kern::axpy(-1.0, self.grad.data(), pb.ensure_grad().data(), self.grad.size());
    }
  }));
}

Var hadamard(Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("ad::hadamard: shape mismatch");
  Matrix c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.value().data()[i];
  return Var(make_node(std::move(c), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= pb.val.data()[i];
      accum(pa, g);
    }
    if (pb.requires_grad) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= pa.val.data()[i];
      accum(pb, g);
    }
  }));
}

Var scale(Var a, double c) {
  Matrix out = a.value();
  scale_inplace(out, c);
  return Var(make_node(std::move(out), {a.node()}, [c](Node& self) {
    Node& pa = *self.parents[0];
    if (pa.requires_grad)
      kern::axpy(c, self.grad.data(), pa.ensure_grad().data(), self.grad.size());
  }));
}

Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) throw ShapeError("ad::scale_by: scale operand must be 1x1");
  const double sv = s.value()(0, 0);
  Matrix out = a.value();
  scale_inplace(out, sv);
  return Var(make_node(std::move(out), {a.node(), s.node()}, [sv](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    if (pa.requires_grad)
      kern::axpy(sv, self.grad.data(), pa.ensure_grad().data(), self.grad.size());
    if (ps.requires_grad)
      ps.ensure_grad()(0, 0) += kern::dot(self.grad.data(), pa.val.data(), self.grad.size());
  }));
}

Var add_row_bias(Var a, Var bias) {
  if (bias.value().rows() != 1 || bias.value().cols() != a.value().cols())
    throw ShapeError("ad::add_row_bias: bias must be 1x(cols)");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    kern::add(bias.value().row(0), out.row(i), out.cols());
  return Var(make_node(std::move(out), {a.node(), bias.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    accum(pa, self.grad);
    if (pb.requires_grad) {
      Matrix& g = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.rows(); ++i)
        kern::add(self.grad.row(i), g.row(0), g.cols());
    }
  }));
}

Var add_scalar(Var a, double c) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += c;
  return Var(make_node(std::move(out), {a.node()},
                       [](Node& self) { accum(*self.parents[0], self.grad); }));
}

Var sub_from_scalar(double c, Var a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = c - out.data()[i];
  return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (pa.requires_grad)
      kern::axpy(-1.0, self.grad.data(), pa.ensure_grad().data(), self.grad.size());
  }));
}

Var negate(Var a) { return scale(a, -1.0); }

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.data()[i] <= 0.0) out.data()[i] *= slope;
  return Var(make_node(std::move(out), {a.node()}, [slope](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (pa.val.data()[i] <= 0.0) g.data()[i] *= slope;
    accum(pa, g);
  }));
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var gelu(Var a) {
  // Exact erf form: gelu(x) = x·Φ(x), Φ via std::erf.
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = out.data()[i];
    out.data()[i] = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
  }
  return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = pa.val.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      g.data()[i] *= cdf + x * pdf;
    }
    accum(pa, g);
  }));
}

Var square(Var a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= out.data()[i];
  return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= 2.0 * pa.val.data()[i];
    accum(pa, g);
  }));
}

Var exp_elem(Var a) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::exp(out.data()[i]);
  Matrix saved = out;
  return Var(make_node(std::move(out), {a.node()}, [saved](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= saved.data()[i];
    accum(pa, g);
  }));
}

Var row_l2_normalize(Var a) {
  Matrix out = a.value();
  std::vector<double> norms(out.rows(), 0.0);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double nsq = kern::nrm2sqr(out.row(i), out.cols());
    norms[i] = std::sqrt(nsq);
    if (norms[i] > 0.0) kern::scale(1.0 / norms[i], out.row(i), out.cols());
  }
  Matrix normalized = out;
  return Var(make_node(std::move(out), {a.node()}, [normalized, norms](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix g(self.grad.rows(), self.grad.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      if (norms[i] == 0.0) continue;  // zero rows stay at zero gradient
      const double* gi = self.grad.row(i);
      const double* yi = normalized.row(i);
      const double proj = kern::dot(gi, yi, g.cols());
      double* out_i = g.row(i);
      for (std::size_t j = 0; j < g.cols(); ++j)
        out_i[j] = (gi[j] - proj * yi[j]) / norms[i];
    }
    accum(pa, g);
  }));
}

namespace {

Matrix softmax_of(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* r = out.row(i);
    const double m = kern::max(r, out.cols());
    double z = 0.0;
    for (std::size_t j = 0; j < out.cols(); ++j) {
      r[j] = std::exp(r[j] - m);
      z += r[j];
    }
    kern::scale(1.0 / z, r, out.cols());
  }
  return out;
}

}  // namespace

Var softmax_rows(Var a) {
  Matrix out = softmax_of(a.value());
  Matrix saved = out;
  return Var(make_node(std::move(out), {a.node()}, [saved](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix g(self.grad.rows(), self.grad.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const double* gi = self.grad.row(i);
      const double* yi = saved.row(i);
      const double dotgy = kern::dot(gi, yi, g.cols());
      double* out_i = g.row(i);
      for (std::size_t j = 0; j < g.cols(); ++j) out_i[j] = yi[j] * (gi[j] - dotgy);
    }
    accum(pa, g);
  }));
}

Var rows_gather(Var a, std::vector<std::size_t> idx) {
  Matrix out(idx.size(), a.value().cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.value().rows()) throw ShapeError("ad::rows_gather: index out of range");
    std::copy_n(a.value().row(idx[i]), out.cols(), out.row(i));
  }
  return Var(make_node(std::move(out), {a.node()}, [idx = std::move(idx)](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix& g = pa.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      kern::add(self.grad.row(i), g.row(idx[i]), g.cols());
  }));
}

Var spmm(const SparseMatrix& s, Var a) {
  Matrix out = lgplug::spmm(s, a.value());
  // The sparse operand is captured by value: CSR arrays are shared_ptr-free
  // and cheap at the scales this project runs at.
  SparseMatrix sc = s;
  return Var(make_node(std::move(out), {a.node()}, [sc = std::move(sc)](Node& self) {
    Node& pa = *self.parents[0];
    if (pa.requires_grad) accum(pa, lgplug::spmm_t(sc, self.grad));
  }));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("ad::concat_cols: no operands");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("ad::concat_cols: row count mismatch");
    offsets.push_back(cols);
    cols += p.value().cols();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    parents.push_back(parts[k].node());
    const Matrix& v = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.row(i), v.cols(), out.row(i) + offsets[k]);
  }
  return Var(make_node(std::move(out), std::move(parents), [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Matrix& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.rows(); ++i)
        kern::add(self.grad.row(i) + offsets[k], g.row(i), g.cols());
    }
  }));
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("ad::concat_rows: no operands");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) throw ShapeError("ad::concat_rows: column count mismatch");
    offsets.push_back(rows);
    rows += p.value().rows();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> parents;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    parents.push_back(parts[k].node());
    const Matrix& v = parts[k].value();
    std::copy_n(v.data(), v.size(), out.row(offsets[k]));
  }
  return Var(make_node(std::move(out), std::move(parents), [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Matrix& g = p.ensure_grad();
      kern::add(self.grad.row(offsets[k]), g.data(), g.size());
    }
  }));
}

Var mean_rows(Var a) {
  const std::size_t n = a.value().rows();
  if (n == 0) throw ShapeError("ad::mean_rows: empty input");
  Matrix out(1, a.value().cols());
  for (std::size_t i = 0; i < n; ++i) kern::add(a.value().row(i), out.row(0), out.cols());
  scale_inplace(out, 1.0 / static_cast<double>(n));
  return Var(make_node(std::move(out), {a.node()}, [n](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix& g = pa.ensure_grad();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < g.rows(); ++i)
      kern::axpy(inv, self.grad.row(0), g.row(i), g.cols());
  }));
}

Var mean_all(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("ad::mean_all: empty input");
  Matrix out(1, 1);
  out(0, 0) = kern::sum(a.value().data(), n) / static_cast<double>(n);
  return Var(make_node(std::move(out), {a.node()}, [n](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const double g = self.grad(0, 0) / static_cast<double>(n);
    Matrix& pg = pa.ensure_grad();
    for (std::size_t i = 0; i < pg.size(); ++i) pg.data()[i] += g;
  }));
}

Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = kern::sum(a.value().data(), a.value().size());
  return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    const double g = self.grad(0, 0);
    Matrix& pg = pa.ensure_grad();
    for (std::size_t i = 0; i < pg.size(); ++i) pg.data()[i] += g;
  }));
}

Var row_dot(Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw ShapeError("ad::row_dot: shape mismatch");
  Matrix out(a.value().rows(), 1);
  for (std::size_t i = 0; i < out.rows(); ++i)
    out(i, 0) = kern::dot(a.value().row(i), b.value().row(i), a.value().cols());
  return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Matrix& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.rows(); ++i)
        kern::axpy(self.grad(i, 0), pb.val.row(i), g.row(i), g.cols());
    }
    if (pb.requires_grad) {
      Matrix& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.rows(); ++i)
        kern::axpy(self.grad(i, 0), pa.val.row(i), g.row(i), g.cols());
    }
  }));
}

Var row_max(Var a) {
  Matrix out(a.value().rows(), 1);
  std::vector<std::size_t> arg(a.value().rows());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double* r = a.value().row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < a.value().cols(); ++j)
      if (r[j] > r[best]) best = j;
    arg[i] = best;
    out(i, 0) = r[best];
  }
  return Var(make_node(std::move(out), {a.node()}, [arg = std::move(arg)](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix& g = pa.ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) g(i, arg[i]) += self.grad(i, 0);
  }));
}

Var neg_logsumexp_rows(Var a, double temperature) {
  if (temperature <= 0.0) throw ConfigError("ad::neg_logsumexp_rows: temperature must be > 0");
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  Matrix soft(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* r = x.row(i);
    double m = r[0] / temperature;
    for (std::size_t j = 1; j < x.cols(); ++j) m = std::max(m, r[j] / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      soft(i, j) = std::exp(r[j] / temperature - m);
      z += soft(i, j);
    }
    kern::scale(1.0 / z, soft.row(i), x.cols());
    out(i, 0) = -temperature * (std::log(z) + m);
  }
  return Var(make_node(std::move(out), {a.node()}, [soft](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    Matrix& g = pa.ensure_grad();
    for (std::size_t i = 0; i < g.rows(); ++i)
      kern::axpy(-self.grad(i, 0), soft.row(i), g.row(i), g.cols());
  }));
}

Var cross_entropy_identity(Var logits) {
  const Matrix& x = logits.value();
  if (x.rows() != x.cols()) throw ShapeError("cross_entropy_identity: matrix must be square");
  std::vector<std::size_t> targets(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) targets[i] = i;
  return cross_entropy(logits, targets);
}

Var cross_entropy(Var logits, const std::vector<std::size_t>& targets) {
  const Matrix& x = logits.value();
  if (targets.size() != x.rows()) throw ShapeError("cross_entropy: one target per row required");
  if (x.rows() == 0) throw ShapeError("cross_entropy: empty input");
  Matrix soft = softmax_of(x);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (targets[i] >= x.cols()) throw ShapeError("cross_entropy: target out of range");
    loss -= std::log(std::max(soft(i, targets[i]), 1e-300));
  }
  Matrix out(1, 1);
  out(0, 0) = loss / static_cast<double>(x.rows());
  return Var(
      make_node(std::move(out), {logits.node()}, [soft, targets](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        Matrix& g = pa.ensure_grad();
        const double gs = self.grad(0, 0) / static_cast<double>(soft.rows());
        for (std::size_t i = 0; i < soft.rows(); ++i) {
          kern::axpy(gs, soft.row(i), g.row(i), g.cols());
          g(i, targets[i]) -= gs;
        }
      }));
}

Var layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  const Matrix& x = a.value();
  const std::size_t d = x.cols();
  if (gain.value().cols() != d || bias.value().cols() != d)
    throw ShapeError("layer_norm_rows: gain/bias must be 1x(cols)");
  Matrix xhat(x.rows(), d);
  std::vector<double> inv_std(x.rows());
  Matrix out(x.rows(), d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* r = x.row(i);
    const double mu = kern::sum(r, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat(i, j) = (r[j] - mu) * inv_std[i];
      out(i, j) = xhat(i, j) * gain.value()(0, j) + bias.value()(0, j);
    }
  }
  return Var(make_node(std::move(out), {a.node(), gain.node(), bias.node()},
                       [xhat, inv_std](Node& self) {
    Node& pa = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    const std::size_t d = xhat.cols();
    if (pg.requires_grad) {
      Matrix& g = pg.ensure_grad();
      for (std::size_t i = 0; i < xhat.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) g(0, j) += self.grad(i, j) * xhat(i, j);
    }
    if (pb.requires_grad) {
      Matrix& g = pb.ensure_grad();
      for (std::size_t i = 0; i < xhat.rows(); ++i)
        kern::add(self.grad.row(i), g.row(0), d);
    }
    if (pa.requires_grad) {
      Matrix& g = pa.ensure_grad();
      const Matrix& gainv = pg.val;
      for (std::size_t i = 0; i < xhat.rows(); ++i) {
        double sum_gy = 0.0, sum_gyx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double gy = self.grad(i, j) * gainv(0, j);
          sum_gy += gy;
          sum_gyx += gy * xhat(i, j);
        }
        const double m1 = sum_gy / static_cast<double>(d);
        const double m2 = sum_gyx / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double gy = self.grad(i, j) * gainv(0, j);
          g(i, j) += inv_std[i] * (gy - m1 - xhat(i, j) * m2);
        }
      }
    }
  }));
}

void backward(Var loss) {
  if (!loss.defined() || loss.value().size() != 1)
    throw ShapeError("ad::backward: loss must be a defined 1x1 node");
  if (!loss.node()->requires_grad) return;

  // Reachable subgraph, then a creation-order sweep (parents always precede
  // children, so descending order is topological).
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Node* a, const Node* b) { return a->order > b->order; });

  loss.node()->ensure_grad()(0, 0) += 1.0;
  for (Node* n : nodes) {
    if (n->backprop && n->grad.size() > 0) n->backprop(*n);
  }
}

Var ParamStore::create(const std::string& name, Matrix init) {
  Var v = Var::leaf(std::move(init), true);
  adopt(name, v);
  return v;
}

void ParamStore::adopt(const std::string& name, Var v) {
  if (has(name)) throw ConfigError("ParamStore: duplicate parameter name " + name);
  items_.emplace_back(name, std::move(v));
}

Var ParamStore::get(const std::string& name) const {
  for (const auto& [n, v] : items_)
    if (n == name) return v;
  throw ConfigError("ParamStore: unknown parameter " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, v] : items_)
    if (n == name) return true;
  return false;
}

void ParamStore::zero_grads() {
  for (auto& [n, v] : items_) v.zero_grad();
}

void Adam::step(ParamStore& params) {
  auto& items = params.items();
  if (m_.empty()) {
    for (auto& [name, v] : items) {
      m_.emplace_back(v.value().rows(), v.value().cols());
      v_.emplace_back(v.value().rows(), v.value().cols());
    }
  }
  if (m_.size() != items.size()) throw ConfigError("Adam: parameter set changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t k = 0; k < items.size(); ++k) {
    Matrix& w = items[k].second.value();
    const Matrix& g = items[k].second.grad();
    if (g.size() != w.size()) continue;  // parameter unused this step
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.data()[i] + cfg_.weight_decay * w.data()[i];
      double& m = m_[k].data()[i];
      double& v = v_[k].data()[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      w.data()[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace lgplug::ad
