#include "vld/tensor/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vld::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) + " differ");
}

void require_rank2(const char* op, const Shape& s) {
  if (s.size() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(s));
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

template <typename T>
void require_same_tape(const char* op, Var<T> a, Var<T> b) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
}

template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape("add", a, b);
  require_same_shape("add", a.shape(), b.shape());
  auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("add", a.shape(), std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    if (t.requires_grad(ia)) accumulate<T>(t.grad(ia), g);
    if (t.requires_grad(ib)) accumulate<T>(t.grad(ib), g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_tape("sub", a, b);
  require_same_shape("sub", a.shape(), b.shape());
  auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("sub", a.shape(), std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    if (t.requires_grad(ia)) accumulate<T>(t.grad(ia), g);
    if (t.requires_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape("mul", a, b);
  require_same_shape("mul", a.shape(), b.shape());
  auto av = a.value(), bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("mul", a.shape(), std::move(out), {a, b}, [ia, ib](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto av = t.value(ia), bv = t.value(ib);
    if (t.requires_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  const auto ix = x.id();
  return x.tape().record("scale", x.shape(), std::move(out), {x}, [ix, factor](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> add_row(Var<T> x, Var<T> row) {
  require_same_tape("add_row", x, row);
  const std::size_t n = last_dim(x.shape());
  if (row.size() != n) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) + " does not match " + shape_string(x.shape()));
  }
  auto xv = x.value(), rv = row.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + rv[i % n];
  const auto ix = x.id(), ir = row.id();
  return x.tape().record("add_row", x.shape(), std::move(out), {x, row}, [ix, ir, n](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    if (t.requires_grad(ix)) accumulate<T>(t.grad(ix), g);
    if (t.requires_grad(ir)) {
      auto gr = t.grad(ir);
      for (std::size_t i = 0; i < g.size(); ++i) gr[i % n] += g[i];
    }
  });
}

template <typename T>
Var<T> mul_row(Var<T> x, Var<T> row) {
  require_same_tape("mul_row", x, row);
  const std::size_t n = last_dim(x.shape());
  if (row.size() != n) {
    throw DimensionError("mul_row: row " + shape_string(row.shape()) + " does not match " + shape_string(x.shape()));
  }
  auto xv = x.value(), rv = row.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * rv[i % n];
  const auto ix = x.id(), ir = row.id();
  return x.tape().record("mul_row", x.shape(), std::move(out), {x, row}, [ix, ir, n](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto xv = t.value(ix), rv = t.value(ir);
    if (t.requires_grad(ix)) {
      auto gx = t.grad(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * rv[i % n];
    }
    if (t.requires_grad(ir)) {
      auto gr = t.grad(ir);
      for (std::size_t i = 0; i < g.size(); ++i) gr[i % n] += g[i] * xv[i];
    }
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape("matmul", a, b);
  require_rank2("matmul", a.shape());
  require_rank2("matmul", b.shape());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " . " +
                         shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  MutMap<T>(out.data(), m, n).noalias() =
      ConstMap<T>(a.value().data(), m, k) * ConstMap<T>(b.value().data(), k, n);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record("matmul", Shape{m, n}, std::move(out), {a, b},
                         [ia, ib, m, k, n](Tape<T>& t, std::uint32_t self) {
                           ConstMap<T> g(t.grad_view(self).data(), m, n);
                           if (t.requires_grad(ia)) {
                             MutMap<T>(t.grad(ia).data(), m, k).noalias() +=
                                 g * ConstMap<T>(t.value(ib).data(), k, n).transpose();
                           }
                           if (t.requires_grad(ib)) {
                             MutMap<T>(t.grad(ib).data(), k, n).noalias() +=
                                 ConstMap<T>(t.value(ia).data(), m, k).transpose() * g;
                           }
                         });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  require_rank2("transpose", x.shape());
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  const auto ix = x.id();
  return x.tape().record("transpose", Shape{c, r}, std::move(out), {x}, [ix, r, c](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto gx = t.grad(ix);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  auto xv = x.value();
  const auto ix = x.id();
  return x.tape().record("reshape", std::move(shape), std::vector<T>(xv.begin(), xv.end()), {x},
                         [ix](Tape<T>& t, std::uint32_t self) { accumulate<T>(t.grad(ix), t.grad_view(self)); });
}

template <typename T>
Var<T> relu(Var<T> x) {
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  const auto ix = x.id();
  return x.tape().record("relu", x.shape(), std::move(out), {x}, [ix](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto xv = t.value(ix);
    auto gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xv[i] > T{0}) gx[i] += g[i];
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xv[i];
    out[i] = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  }
  const auto ix = x.id();
  return x.tape().record("sigmoid", x.shape(), std::move(out), {x}, [ix](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto y = t.value(self);
    auto gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  const auto ix = x.id();
  return x.tape().record("tanh", x.shape(), std::move(out), {x}, [ix](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto y = t.value(self);
    auto gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * (T{1} - y[i] * y[i]);
  });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  const std::size_t n = last_dim(x.shape());
  if (x.size() == 0 || n == 0) throw DimensionError("softmax over an empty axis");
  const std::size_t rows = x.size() / n;
  auto xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  const auto ix = x.id();
  return x.tape().record("softmax", x.shape(), std::move(out), {x}, [ix, n, rows](Tape<T>& t, std::uint32_t self) {
    auto g = t.grad_view(self);
    auto y = t.value(self);
    auto gx = t.grad(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const std::size_t n = last_dim(x.shape());
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" + shape_string(bias.shape()) +
                         " vs input " + shape_string(x.shape()));
  }
  const std::size_t rows = x.size() / n;
  auto xv = x.value(), gv = gain.value(), bv = bias.value();
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * n;
    T mu{0};
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(n);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (in[j] - mu) * is;
      out[r * n + j] = gv[j] * xhat[r * n + j] + bv[j];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [ix, ig, ib, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, std::uint32_t self) {
        auto g = t.grad_view(self);
        auto gv = t.value(ig);
        if (t.requires_grad(ig)) {
          auto gg = t.grad(ig);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * xhat[i];
        }
        if (t.requires_grad(ib)) {
          auto gb = t.grad(ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
        }
        if (t.requires_grad(ix)) {
          auto gx = t.grad(ix);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d{0}, mean_dx{0};
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gv[j];
              mean_d += d;
              mean_dx += d * xhat[r * n + j];
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gv[j];
              gx[r * n + j] += inv_std[r] * (d - mean_d - xhat[r * n + j] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Var<T> weight_norm_linear(Var<T> x, Var<T> v, Var<T> g, Var<T> bias) {
  require_rank2("weight_norm_linear", v.shape());
  const std::size_t out_dim = v.shape()[0], in_dim = v.shape()[1];
  if (last_dim(x.shape()) != in_dim) {
    throw DimensionError("weight_norm_linear: input " + shape_string(x.shape()) + " vs direction " +
                         shape_string(v.shape()));
  }
  if (g.size() != out_dim || bias.size() != out_dim) {
    throw DimensionError("weight_norm_linear: gain/bias " + shape_string(g.shape()) + "/" +
                         shape_string(bias.shape()) + " vs " + std::to_string(out_dim) + " outputs");
  }
  auto vv = v.value(), gv = g.value(), bv = bias.value();
  std::vector<T> norms(out_dim);
  std::vector<T> weight(out_dim * in_dim);
  for (std::size_t i = 0; i < out_dim; ++i) {
    T sq{0};
    for (std::size_t j = 0; j < in_dim; ++j) sq += vv[i * in_dim + j] * vv[i * in_dim + j];
    const T nrm = std::sqrt(sq);
    if (!(nrm > T{0})) {
      throw DegenerateParameterError("weight_norm_linear: direction row " + std::to_string(i) + " has zero norm");
    }
    norms[i] = nrm;
    for (std::size_t j = 0; j < in_dim; ++j) weight[i * in_dim + j] = gv[i] * vv[i * in_dim + j] / nrm;
  }
  const std::size_t rows = x.size() / in_dim;
  Shape out_shape = x.shape();
  if (out_shape.empty()) out_shape = Shape{1};
  out_shape.back() = out_dim;
  std::vector<T> out(rows * out_dim);
  MutMap<T> y(out.data(), rows, out_dim);
  y.noalias() = ConstMap<T>(x.value().data(), rows, in_dim) * ConstMap<T>(weight.data(), out_dim, in_dim).transpose();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < out_dim; ++i) out[r * out_dim + i] += bv[i];

  const auto ix = x.id(), iv = v.id(), ig = g.id(), ib = bias.id();
  return x.tape().record(
      "weight_norm_linear", std::move(out_shape), std::move(out), {x, v, g, bias},
      [ix, iv, ig, ib, rows, in_dim, out_dim, norms = std::move(norms), weight = std::move(weight)](
          Tape<T>& t, std::uint32_t self) {
        ConstMap<T> dy(t.grad_view(self).data(), rows, out_dim);
        if (t.requires_grad(ix)) {
          MutMap<T>(t.grad(ix).data(), rows, in_dim).noalias() += dy * ConstMap<T>(weight.data(), out_dim, in_dim);
        }
        if (t.requires_grad(ib)) {
          auto gb = t.grad(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < out_dim; ++i) gb[i] += dy(r, i);
        }
        if (!t.requires_grad(iv) && !t.requires_grad(ig)) return;
        RowMat<T> dw = dy.transpose() * ConstMap<T>(t.value(ix).data(), rows, in_dim);
        auto vv = t.value(iv), gv = t.value(ig);
        for (std::size_t i = 0; i < out_dim; ++i) {
          T proj{0};
          for (std::size_t j = 0; j < in_dim; ++j) proj += dw(i, j) * vv[i * in_dim + j];
          proj /= norms[i];  // dW_i . unit(v_i)
          if (t.requires_grad(ig)) t.grad(ig)[i] += proj;
          if (t.requires_grad(iv)) {
            auto gvv = t.grad(iv);
            const T s = gv[i] / norms[i];
            for (std::size_t j = 0; j < in_dim; ++j) {
              gvv[i * in_dim + j] += s * (dw(i, j) - proj * vv[i * in_dim + j] / norms[i]);
            }
          }
        }
      });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  require_rank2("linear", weight.shape());
  const std::size_t in_dim = weight.shape()[0], out_dim = weight.shape()[1];
  if (last_dim(x.shape()) != in_dim) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  }
  if (bias.size() != out_dim) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " vs weight " + shape_string(weight.shape()));
  }
  const std::size_t rows = x.size() / in_dim;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<T> out(rows * out_dim);
  MutMap<T>(out.data(), rows, out_dim).noalias() =
      ConstMap<T>(x.value().data(), rows, in_dim) * ConstMap<T>(weight.value().data(), in_dim, out_dim);
  auto bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < out_dim; ++i) out[r * out_dim + i] += bv[i];
  const auto ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record("linear", std::move(out_shape), std::move(out), {x, weight, bias},
                         [ix, iw, ib, rows, in_dim, out_dim](Tape<T>& t, std::uint32_t self) {
                           ConstMap<T> dy(t.grad_view(self).data(), rows, out_dim);
                           if (t.requires_grad(ix)) {
                             MutMap<T>(t.grad(ix).data(), rows, in_dim).noalias() +=
                                 dy * ConstMap<T>(t.value(iw).data(), in_dim, out_dim).transpose();
                           }
                           if (t.requires_grad(iw)) {
                             MutMap<T>(t.grad(iw).data(), in_dim, out_dim).noalias() +=
                                 ConstMap<T>(t.value(ix).data(), rows, in_dim).transpose() * dy;
                           }
                           if (t.requires_grad(ib)) {
                             auto gb = t.grad(ib);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t i = 0; i < out_dim; ++i) gb[i] += dy(r, i);
                           }
                         });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::size_t> indices) {
  require_rank2("gather_rows", table.shape());
  const std::size_t rows = table.shape()[0], n = table.shape()[1];
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  auto tv = table.value();
  std::vector<T> out(indices.size() * n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[r]) + " outside table " +
                           shape_string(table.shape()));
    }
    std::copy_n(tv.data() + indices[r] * n, n, out.data() + r * n);
  }
  const auto it = table.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.tape().record("gather_rows", Shape{indices.size(), n}, std::move(out), {table},
                             [it, n, idx = std::move(idx)](Tape<T>& t, std::uint32_t self) {
                               auto g = t.grad_view(self);
                               auto gt = t.grad(it);
                               for (std::size_t r = 0; r < idx.size(); ++r)
                                 for (std::size_t j = 0; j < n; ++j) gt[idx[r] * n + j] += g[r * n + j];
                             });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t n = last_dim(parts.front().shape());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (&p.tape() != &parts.front().tape()) throw ContractError("concat_rows: operands live on different tapes");
    if (last_dim(p.shape()) != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(p.shape()) + " vs " +
                           shape_string(parts.front().shape()));
    }
    rows += p.size() / n;
  }
  std::vector<T> out;
  out.reserve(rows * n);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    auto v = p.value();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id());
    sizes.push_back(v.size());
  }
  return parts.front().tape().record("concat_rows", Shape{rows, n}, std::move(out), parts,
                                     [ids = std::move(ids), sizes = std::move(sizes)](Tape<T>& t, std::uint32_t self) {
                                       auto g = t.grad_view(self);
                                       std::size_t offset = 0;
                                       for (std::size_t p = 0; p < ids.size(); ++p) {
                                         if (t.requires_grad(ids[p])) {
                                           auto gp = t.grad(ids[p]);
                                           for (std::size_t i = 0; i < sizes[p]; ++i) gp[i] += g[offset + i];
                                         }
                                         offset += sizes[p];
                                       }
                                     });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T total{0};
  for (auto v : x.value()) total += v;
  const auto ix = x.id();
  return x.tape().record("sum", Shape{}, std::vector<T>{total}, {x}, [ix](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad_view(self)[0];
    for (auto& v : t.grad(ix)) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

template <typename T>
Var<T> dropout(Var<T> x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  auto xv = x.value();
  std::vector<T> mask(xv.size());
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? s : T{0};
    out[i] = xv[i] * mask[i];
  }
  const auto ix = x.id();
  return x.tape().record("dropout", x.shape(), std::move(out), {x},
                         [ix, mask = std::move(mask)](Tape<T>& t, std::uint32_t self) {
                           auto g = t.grad_view(self);
                           auto gx = t.grad(ix);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
                         });
}

template <typename T>
Var<T> multi_head_attention(Var<T> q, Var<T> k, Var<T> v, const AttentionOptions& options) {
  require_rank2("attention", q.shape());
  require_rank2("attention", k.shape());
  require_rank2("attention", v.shape());
  const std::size_t tq = q.shape()[0], tk = k.shape()[0], d = q.shape()[1];
  const std::size_t heads = options.heads;
  if (k.shape()[1] != d || v.shape()[1] != d || v.shape()[0] != tk) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " + shape_string(k.shape()) + ", v " +
                         shape_string(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (options.causal && tq > tk) throw DimensionError("attention: causal mask needs at least as many keys as queries");
  const std::size_t dh = d / heads;
  const T inv_scale = T{1} / std::sqrt(static_cast<T>(dh));
  auto qv = q.value(), kv = k.value(), vv = v.value();

  // probs[h][i][j]; masked entries stay exactly zero.
  std::vector<T> probs(heads * tq * tk, T{0});
  std::vector<T> out(tq * d, T{0});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < tq; ++i) {
      const std::size_t limit = options.causal ? i + 1 : tk;
      T* p = probs.data() + (h * tq + i) * tk;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < limit; ++j) {
        T s{0};
        for (std::size_t c = 0; c < dh; ++c) s += qv[i * d + c0 + c] * kv[j * d + c0 + c];
        p[j] = s * inv_scale;
        mx = std::max(mx, p[j]);
      }
      T total{0};
      for (std::size_t j = 0; j < limit; ++j) {
        p[j] = std::exp(p[j] - mx);
        total += p[j];
      }
      for (std::size_t j = 0; j < limit; ++j) p[j] /= total;
      for (std::size_t j = 0; j < limit; ++j) {
        const T w = p[j];
        for (std::size_t c = 0; c < dh; ++c) out[i * d + c0 + c] += w * vv[j * d + c0 + c];
      }
    }
  }
  if (options.trace) {
    AttentionTrace tr{heads, tq, tk, std::vector<double>(probs.begin(), probs.end())};
    options.trace->push_back(std::move(tr));
  }
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  const bool causal = options.causal;
  return q.tape().record(
      "multi_head_attention", Shape{tq, d}, std::move(out), {q, k, v},
      [iq, ik, iv, tq, tk, d, heads, dh, inv_scale, causal, probs = std::move(probs)](Tape<T>& t, std::uint32_t self) {
        auto g = t.grad_view(self);
        auto qv = t.value(iq), kv = t.value(ik), vv = t.value(iv);
        const bool gq = t.requires_grad(iq), gk = t.requires_grad(ik), gv = t.requires_grad(iv);
        std::span<T> dq, dk, dv;
        if (gq) dq = t.grad(iq);
        if (gk) dk = t.grad(ik);
        if (gv) dv = t.grad(iv);
        std::vector<T> dp(tk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < tq; ++i) {
            const std::size_t limit = causal ? i + 1 : tk;
            const T* p = probs.data() + (h * tq + i) * tk;
            T dot{0};
            for (std::size_t j = 0; j < limit; ++j) {
              T s{0};
              for (std::size_t c = 0; c < dh; ++c) s += g[i * d + c0 + c] * vv[j * d + c0 + c];
              dp[j] = s;
              dot += s * p[j];
              if (gv) {
                for (std::size_t c = 0; c < dh; ++c) dv[j * d + c0 + c] += p[j] * g[i * d + c0 + c];
              }
            }
            for (std::size_t j = 0; j < limit; ++j) {
              const T ds = p[j] * (dp[j] - dot) * inv_scale;
              if (gq) {
                for (std::size_t c = 0; c < dh; ++c) dq[i * d + c0 + c] += ds * kv[j * d + c0 + c];
              }
              if (gk) {
                for (std::size_t c = 0; c < dh; ++c) dk[j * d + c0 + c] += ds * qv[i * d + c0 + c];
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> targets, std::size_t ignore) {
  require_rank2("cross_entropy", logits.shape());
  const std::size_t rows = logits.shape()[0], n = logits.shape()[1];
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(logits.shape()) + " logits");
  }
  auto lv = logits.value();
  std::vector<T> probs(lv.size());
  T total{0};
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = lv.data() + r * n;
    T* p = probs.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T z{0};
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = std::exp(in[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) p[j] /= z;
    if (targets[r] == ignore) continue;
    if (targets[r] >= n) {
      throw DataError("cross_entropy: target " + std::to_string(targets[r]) + " outside " + std::to_string(n) +
                      " classes");
    }
    total += std::log(z) + mx - in[targets[r]];
    ++counted;
  }
  if (counted == 0) throw DataError("cross_entropy: every target is ignored");
  const T inv = T{1} / static_cast<T>(counted);
  const auto il = logits.id();
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return logits.tape().record("cross_entropy", Shape{}, std::vector<T>{total * inv}, {logits},
                              [il, rows, n, ignore, inv, tg = std::move(tg), probs = std::move(probs)](
                                  Tape<T>& t, std::uint32_t self) {
                                const T g = t.grad_view(self)[0] * inv;
                                auto gl = t.grad(il);
                                for (std::size_t r = 0; r < rows; ++r) {
                                  if (tg[r] == ignore) continue;
                                  for (std::size_t j = 0; j < n; ++j) gl[r * n + j] += g * probs[r * n + j];
                                  gl[r * n + tg[r]] -= g;
                                }
                              });
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets) {
  if (targets.size() != logits.size()) {
    throw DimensionError("bce_with_logits: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(logits.shape()) + " logits");
  }
  const std::size_t rows = logits.size() / last_dim(logits.shape());
  auto lv = logits.value();
  T total{0};
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const T x = lv[i];
    total += std::max(x, T{0}) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const T inv = T{1} / static_cast<T>(rows);
  const auto il = logits.id();
  std::vector<T> tg(targets.begin(), targets.end());
  return logits.tape().record("bce_with_logits", Shape{}, std::vector<T>{total * inv}, {logits},
                              [il, inv, tg = std::move(tg)](Tape<T>& t, std::uint32_t self) {
                                const T g = t.grad_view(self)[0] * inv;
                                auto lv = t.value(il);
                                auto gl = t.grad(il);
                                for (std::size_t i = 0; i < gl.size(); ++i) {
                                  const T x = lv[i];
                                  const T s = x >= T{0} ? T{1} / (T{1} + std::exp(-x))
                                                        : std::exp(x) / (T{1} + std::exp(x));
                                  gl[i] += g * (s - tg[i]);
                                }
                              });
}

#define VLD_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> add<T>(Var<T>, Var<T>);                                                               \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                               \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                               \
  template Var<T> scale<T>(Var<T>, T);                                                                  \
  template Var<T> add_row<T>(Var<T>, Var<T>);                                                           \
  template Var<T> mul_row<T>(Var<T>, Var<T>);                                                           \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                            \
  template Var<T> transpose<T>(Var<T>);                                                                 \
  template Var<T> reshape<T>(Var<T>, Shape);                                                            \
  template Var<T> relu<T>(Var<T>);                                                                      \
  template Var<T> sigmoid<T>(Var<T>);                                                                   \
  template Var<T> tanh<T>(Var<T>);                                                                      \
  template Var<T> softmax<T>(Var<T>);                                                                   \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                             \
  template Var<T> weight_norm_linear<T>(Var<T>, Var<T>, Var<T>, Var<T>);                                \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                                                    \
  template Var<T> gather_rows<T>(Var<T>, std::span<const std::size_t>);                                 \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                                           \
  template Var<T> sum<T>(Var<T>);                                                                       \
  template Var<T> mean<T>(Var<T>);                                                                      \
  template Var<T> dropout<T>(Var<T>, double, std::mt19937_64&);                                         \
  template Var<T> multi_head_attention<T>(Var<T>, Var<T>, Var<T>, const AttentionOptions&);             \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const std::size_t>, std::size_t);                  \
  template Var<T> bce_with_logits<T>(Var<T>, std::span<const T>);

VLD_INSTANTIATE_OPS(float)
VLD_INSTANTIATE_OPS(double)

#undef VLD_INSTANTIATE_OPS

}  // namespace vld::ops
