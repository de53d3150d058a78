#include "diffcore/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>

namespace anchorforge::diff {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

using detail::make_result;

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Out shape of a trailing-dimension broadcast, or throws.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw DiffError(op, "shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcast-compatible");
}

// Runs f(i_out, i_a, i_b) over the broadcast iteration space.
template <typename F>
void for_broadcast(std::int64_t na, std::int64_t nb, F&& f) {
  if (na == nb) {
    for (std::int64_t i = 0; i < na; ++i) f(i, i, i);
  } else if (na > nb) {
    for (std::int64_t r = 0, i = 0; r < na / nb; ++r)
      for (std::int64_t j = 0; j < nb; ++j, ++i) f(i, i, j);
  } else {
    for (std::int64_t r = 0, i = 0; r < nb / na; ++r)
      for (std::int64_t j = 0; j < na; ++j, ++i) f(i, j, i);
  }
}

template <typename T, typename Fwd, typename Da, typename Db>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Da da, Db db) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), op);
  const std::int64_t na = a.size();
  const std::int64_t nb = b.size();
  Array<T> out(out_shape);
  const T* pa = a.value().data.data();
  const T* pb = b.value().data.data();
  T* po = out.data.data();
  for_broadcast(na, nb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { po[i] = fwd(pa[ia], pb[ib]); });
  return make_result<T>(op, std::move(out), {a, b}, [na, nb, da, db](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const T* g = self.grad.data();
    const T* pa = A.value.data.data();
    const T* pb = B.value.data.data();
    if (A.requires_grad) {
      T* ga = A.grad.data();
      for_broadcast(na, nb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { ga[ia] += da(pa[ia], pb[ib], g[i]); });
    }
    if (B.requires_grad) {
      T* gb = B.grad.data();
      for_broadcast(na, nb, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) { gb[ib] += db(pa[ia], pb[ib], g[i]); });
    }
  });
}

template <typename T, typename Fwd, typename Dx>
Tensor<T> unary(const char* op, const Tensor<T>& a, Fwd fwd, Dx dx) {
  Array<T> out(a.shape());
  const auto& in = a.value().data;
  for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = fwd(in[i]);
  return make_result<T>(op, std::move(out), {a}, [dx](Node<T>& self) {
    auto& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += dx(A.value.data[i], self.value.data[i], self.grad[i]);
  });
}

std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Source index for each output element of a copy-style op; backward is the
// matching scatter-add.
template <typename T>
Tensor<T> index_copy(const char* op, const Tensor<T>& x, Shape out_shape, std::vector<std::int64_t> src) {
  Array<T> out(std::move(out_shape));
  const auto& in = x.value().data;
  for (std::size_t i = 0; i < src.size(); ++i) out.data[i] = in[static_cast<std::size_t>(src[i])];
  return make_result<T>(op, std::move(out), {x}, [src = std::move(src)](Node<T>& self) {
    auto& X = *self.parents[0];
    for (std::size_t i = 0; i < src.size(); ++i) X.grad[static_cast<std::size_t>(src[i])] += self.grad[i];
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(
      "scale", a, [factor](T x) { return x * factor; }, [factor](T, T, T g) { return g * factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary<T>(
      "add_scalar", a, [offset](T x) { return x + offset; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  return unary<T>(
      "silu", a, [](T x) { return x / (T{1} + std::exp(-x)); },
      [](T x, T, T g) {
        const T s = T{1} / (T{1} + std::exp(-x));
        return g * (s + x * s * (T{1} - s));
      });
}

template <typename T>
Tensor<T> scale_shift(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  if (gamma.shape() != beta.shape()) {
    throw DiffError("scale_shift", "gamma " + shape_str(gamma.shape()) + " and beta " + shape_str(beta.shape()) +
                                       " differ");
  }
  if (!is_suffix(gamma.shape(), x.shape())) {
    throw DiffError("scale_shift", "modulation " + shape_str(gamma.shape()) + " does not broadcast over " +
                                       shape_str(x.shape()));
  }
  const std::int64_t n = x.size();
  const std::int64_t m = gamma.size();
  Array<T> out(x.shape());
  const T* px = x.value().data.data();
  const T* pg = gamma.value().data.data();
  const T* pb = beta.value().data.data();
  for (std::int64_t r = 0, i = 0; r < n / m; ++r)
    for (std::int64_t j = 0; j < m; ++j, ++i) out.data[i] = pg[j] * px[i] + pb[j];
  return make_result<T>("scale_shift", std::move(out), {x, gamma, beta}, [n, m](Node<T>& self) {
    auto& X = *self.parents[0];
    auto& G = *self.parents[1];
    auto& B = *self.parents[2];
    const T* g = self.grad.data();
    for (std::int64_t r = 0, i = 0; r < n / m; ++r) {
      for (std::int64_t j = 0; j < m; ++j, ++i) {
        if (X.requires_grad) X.grad[i] += g[i] * G.value.data[j];
        if (G.requires_grad) G.grad[j] += g[i] * X.value.data[i];
        if (B.requires_grad) B.grad[j] += g[i];
      }
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DiffError("matmul", "cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Array<T> out({m, n});
  MapM<T>(out.data.data(), m, n).noalias() =
      CMapM<T>(a.value().data.data(), m, k) * CMapM<T>(b.value().data.data(), k, n);
  return make_result<T>("matmul", std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    CMapM<T> g(self.grad.data(), m, n);
    if (A.requires_grad) MapM<T>(A.grad.data(), m, k).noalias() += g * CMapM<T>(B.value.data.data(), k, n).transpose();
    if (B.requires_grad) MapM<T>(B.grad.data(), k, n).noalias() += CMapM<T>(A.value.data.data(), m, k).transpose() * g;
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const auto& xs = x.shape();
  if (xs.empty() || weight.value().rank() != 2 || weight.shape()[0] != xs.back() || bias.value().rank() != 1 ||
      bias.shape()[0] != weight.shape()[1]) {
    throw DiffError("linear", "input " + shape_str(xs) + ", weight " + shape_str(weight.shape()) + ", bias " +
                                  shape_str(bias.shape()) + " are inconsistent");
  }
  const std::int64_t k = xs.back();
  const std::int64_t n = weight.shape()[1];
  const std::int64_t m = x.size() / k;
  Shape out_shape = xs;
  out_shape.back() = n;
  Array<T> out(out_shape);
  MapM<T> o(out.data.data(), m, n);
  o.noalias() = CMapM<T>(x.value().data.data(), m, k) * CMapM<T>(weight.value().data.data(), k, n);
  o.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data.data(), n);
  return make_result<T>("linear", std::move(out), {x, weight, bias}, [m, k, n](Node<T>& self) {
    auto& X = *self.parents[0];
    auto& W = *self.parents[1];
    auto& B = *self.parents[2];
    CMapM<T> g(self.grad.data(), m, n);
    if (X.requires_grad) MapM<T>(X.grad.data(), m, k).noalias() += g * CMapM<T>(W.value.data.data(), k, n).transpose();
    if (W.requires_grad) MapM<T>(W.grad.data(), k, n).noalias() += CMapM<T>(X.value.data.data(), m, k).transpose() * g;
    if (B.requires_grad) Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(B.grad.data(), n) += g.colwise().sum();
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, T eps) {
  if (x.value().rank() < 1 || x.shape().back() < 1) throw DiffError("layer_norm", "needs a non-empty last axis");
  const std::int64_t d = x.shape().back();
  const std::int64_t rows = x.size() / d;
  Array<T> out(x.shape());
  std::vector<T> rstd(static_cast<std::size_t>(rows));
  const T* px = x.value().data.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mu = 0;
    for (std::int64_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::int64_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T{1} / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::int64_t j = 0; j < d; ++j) out.data[r * d + j] = (row[j] - mu) * rs;
  }
  return make_result<T>("layer_norm", std::move(out), {x}, [d, rows, rstd = std::move(rstd)](Node<T>& self) {
    auto& X = *self.parents[0];
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* g = self.grad.data() + r * d;
      const T* y = self.value.data.data() + r * d;
      T mg = 0, mgy = 0;
      for (std::int64_t j = 0; j < d; ++j) {
        mg += g[j];
        mgy += g[j] * y[j];
      }
      mg /= static_cast<T>(d);
      mgy /= static_cast<T>(d);
      T* gx = X.grad.data() + r * d;
      for (std::int64_t j = 0; j < d; ++j) gx[j] += rstd[r] * (g[j] - mg - y[j] * mgy);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  return scale_shift(layer_norm(x, eps), gamma, beta);
}

template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  const auto &qs = q.shape(), &ks = k.shape(), &vs = v.shape();
  if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3 || qs[0] != ks[0] || ks[0] != vs[0] || qs[2] != ks[2] ||
      ks[1] != vs[1]) {
    throw DiffError("softmax_attention",
                    "q " + shape_str(qs) + ", k " + shape_str(ks) + ", v " + shape_str(vs) + " are inconsistent");
  }
  const std::int64_t h = qs[0], s = qs[1], kv = ks[1], dk = qs[2], dv = vs[2];
  const T inv = T{1} / std::sqrt(static_cast<T>(dk));
  Array<T> out({h, s, dv});
  Buffer<T> probs(static_cast<std::size_t>(h * s * kv));
  for (std::int64_t i = 0; i < h; ++i) {
    CMapM<T> Q(q.value().data.data() + i * s * dk, s, dk);
    CMapM<T> K(k.value().data.data() + i * kv * dk, kv, dk);
    CMapM<T> V(v.value().data.data() + i * kv * dv, kv, dv);
    MapM<T> P(probs.data() + i * s * kv, s, kv);
    P.noalias() = (Q * K.transpose()) * inv;
    P.colwise() -= P.rowwise().maxCoeff();
    P = P.array().exp().matrix();
    P.array().colwise() /= P.array().rowwise().sum();
    MapM<T>(out.data.data() + i * s * dv, s, dv).noalias() = P * V;
  }
  return make_result<T>(
      "softmax_attention", std::move(out), {q, k, v}, [h, s, kv, dk, dv, inv, probs = std::move(probs)](Node<T>& self) {
        auto& Qn = *self.parents[0];
        auto& Kn = *self.parents[1];
        auto& Vn = *self.parents[2];
        Mat<T> dP(s, kv);
        for (std::int64_t i = 0; i < h; ++i) {
          CMapM<T> P(probs.data() + i * s * kv, s, kv);
          CMapM<T> G(self.grad.data() + i * s * dv, s, dv);
          CMapM<T> Q(Qn.value.data.data() + i * s * dk, s, dk);
          CMapM<T> K(Kn.value.data.data() + i * kv * dk, kv, dk);
          CMapM<T> V(Vn.value.data.data() + i * kv * dv, kv, dv);
          if (Vn.requires_grad) MapM<T>(Vn.grad.data() + i * kv * dv, kv, dv).noalias() += P.transpose() * G;
          if (!Qn.requires_grad && !Kn.requires_grad) continue;
          dP.noalias() = G * V.transpose();
          // dS = P * (dP - rowsum(dP * P)), folded with the 1/sqrt(dk) scale.
          Eigen::Matrix<T, Eigen::Dynamic, 1> rows = (dP.array() * P.array()).rowwise().sum();
          dP = (P.array() * (dP.array().colwise() - rows.array()) * inv).matrix();
          if (Qn.requires_grad) MapM<T>(Qn.grad.data() + i * s * dk, s, dk).noalias() += dP * K;
          if (Kn.requires_grad) MapM<T>(Kn.grad.data() + i * kv * dk, kv, dk).noalias() += dP.transpose() * Q;
        }
      });
}

template <typename T>
Array<T> attention_weights(const Array<T>& q, const Array<T>& k) {
  if (q.rank() != 3 || k.rank() != 3 || q.shape[0] != k.shape[0] || q.shape[2] != k.shape[2]) {
    throw DiffError("attention_weights", "q " + shape_str(q.shape) + " and k " + shape_str(k.shape) + " mismatch");
  }
  const std::int64_t h = q.shape[0], s = q.shape[1], kv = k.shape[1], dk = q.shape[2];
  const T inv = T{1} / std::sqrt(static_cast<T>(dk));
  Array<T> out({h, s, kv});
  for (std::int64_t i = 0; i < h; ++i) {
    MapM<T> P(out.data.data() + i * s * kv, s, kv);
    P.noalias() = (CMapM<T>(q.data.data() + i * s * dk, s, dk) * CMapM<T>(k.data.data() + i * kv * dk, kv, dk).transpose()) * inv;
    P.colwise() -= P.rowwise().maxCoeff();
    P = P.array().exp().matrix();
    P.array().colwise() /= P.array().rowwise().sum();
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DiffError("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Array<T> out(std::move(shape), x.value().data);
  return make_result<T>("reshape", std::move(out), {x}, [](Node<T>& self) {
    auto& X = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) X.grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
  const Shape& in = x.shape();
  const int r = static_cast<int>(in.size());
  if (static_cast<int>(axes.size()) != r) throw DiffError("permute", "axis count does not match rank");
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    if (axes[i] < 0 || axes[i] >= r || used[axes[i]]) throw DiffError("permute", "axes are not a permutation");
    used[axes[i]] = true;
    out_shape[i] = in[axes[i]];
  }
  const auto in_strides = strides_of(in);
  std::vector<std::int64_t> src(static_cast<std::size_t>(x.size()));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  for (std::size_t o = 0; o < src.size(); ++o) {
    std::int64_t off = 0;
    for (int i = 0; i < r; ++i) off += idx[i] * in_strides[axes[i]];
    src[o] = off;
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return index_copy<T>("permute", x, std::move(out_shape), std::move(src));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DiffError("concat", "no inputs");
  const Shape& first = parts[0].shape();
  const int r = static_cast<int>(first.size());
  if (axis < 0 || axis >= r) throw DiffError("concat", "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != r) throw DiffError("concat", "rank mismatch");
    for (int i = 0; i < r; ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DiffError("concat", "shape " + shape_str(s) + " does not match " + shape_str(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first[i];
  for (int i = axis + 1; i < r; ++i) inner *= first[i];
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::int64_t row = out_shape[axis] * inner;

  Array<T> out(out_shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    std::int64_t col = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const T* src = parts[p].value().data.data() + o * widths[p];
      std::copy(src, src + widths[p], out.data.data() + o * row + col);
      col += widths[p];
    }
  }
  return make_result<T>("concat", std::move(out), parts, [outer, row, widths](Node<T>& self) {
    for (std::int64_t o = 0; o < outer; ++o) {
      std::int64_t col = 0;
      for (std::size_t p = 0; p < widths.size(); ++p) {
        auto& P = *self.parents[p];
        if (P.requires_grad) {
          const T* g = self.grad.data() + o * row + col;
          T* dst = P.grad.data() + o * widths[p];
          for (std::int64_t j = 0; j < widths[p]; ++j) dst[j] += g[j];
        }
        col += widths[p];
      }
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
  const Shape& in = x.shape();
  const int r = static_cast<int>(in.size());
  if (axis < 0 || axis >= r || start < 0 || length < 0 || start + length > in[axis]) {
    throw DiffError("slice", "range [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                                 std::to_string(axis) + " of " + shape_str(in) + " is out of bounds");
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= in[i];
  for (int i = axis + 1; i < r; ++i) inner *= in[i];
  Shape out_shape = in;
  out_shape[axis] = length;
  std::vector<std::int64_t> src;
  src.reserve(static_cast<std::size_t>(outer * length * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < length * inner; ++j) src.push_back(o * in[axis] * inner + start * inner + j);
  return index_copy<T>("slice", x, std::move(out_shape), std::move(src));
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& ids) {
  if (table.value().rank() != 2) throw DiffError("gather_rows", "table must be 2-D, got " + shape_str(table.shape()));
  const std::int64_t rows = table.shape()[0], d = table.shape()[1];
  std::vector<std::int64_t> src;
  src.reserve(ids.size() * static_cast<std::size_t>(d));
  for (auto id : ids) {
    if (id < 0 || id >= rows) {
      throw DiffError("gather_rows", "row " + std::to_string(id) + " outside table of " + std::to_string(rows));
    }
    for (std::int64_t j = 0; j < d; ++j) src.push_back(id * d + j);
  }
  return index_copy<T>("gather_rows", table, {static_cast<std::int64_t>(ids.size()), d}, std::move(src));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto& d = x.value().data;
  Array<T> out(Shape{1}, Buffer<T>{std::accumulate(d.begin(), d.end(), T{0})});
  return make_result<T>("sum", std::move(out), {x}, [](Node<T>& self) {
    auto& X = *self.parents[0];
    const T g = self.grad[0];
    for (auto& v : X.grad) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw DiffError("mean", "empty input");
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

#define ANCHORFORGE_INSTANTIATE(T)                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                \
  template Tensor<T> silu(const Tensor<T>&);                                                         \
  template Tensor<T> scale_shift(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> layer_norm(const Tensor<T>&, T);                                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);            \
  template Tensor<T> softmax_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Array<T> attention_weights(const Array<T>&, const Array<T>&);                             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                               \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                             \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                     \
  template Tensor<T> slice(const Tensor<T>&, int, std::int64_t, std::int64_t);                       \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::int64_t>&);                \
  template Tensor<T> sum(const Tensor<T>&);                                                          \
  template Tensor<T> mean(const Tensor<T>&);

ANCHORFORGE_INSTANTIATE(float)
ANCHORFORGE_INSTANTIATE(double)

#undef ANCHORFORGE_INSTANTIATE

}  // namespace anchorforge::diff
