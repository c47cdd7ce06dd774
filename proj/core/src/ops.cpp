#include "mvkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mvkd {

namespace {

using i64 = std::int64_t;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

std::vector<i64> row_major_strides(const Shape& shape) {
  std::vector<i64> strides(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) {
    strides[d] = strides[d + 1] * shape[d + 1];
  }
  return strides;
}

// Strides of `shape` aligned to the trailing axes of an out_ndim-dim result,
// 0 where the axis is broadcast.
std::vector<i64> broadcast_strides(const Shape& shape, const Shape& out_shape) {
  auto strides = row_major_strides(shape);
  std::vector<i64> out(out_shape.size(), 0);
  const int offset = static_cast<int>(out_shape.size() - shape.size());
  for (std::size_t d = 0; d < shape.size(); ++d) {
    out[offset + d] = (shape[d] == 1 && out_shape[offset + d] != 1) ? 0 : strides[d];
  }
  return out;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const i64 da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const i64 db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      raise(ErrorKind::ShapeMismatch,
            std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Calls f(out_flat, a_off, b_off) for every element of out_shape, with the
// operand offsets following their (possibly zero) broadcast strides.
template <typename F>
void for_each_broadcast(const Shape& out_shape, const Shape& a_shape, const Shape& b_shape, F&& f) {
  const i64 total = numel(out_shape);
  const auto a_str = broadcast_strides(a_shape, out_shape);
  const auto b_str = broadcast_strides(b_shape, out_shape);
  const int nd = static_cast<int>(out_shape.size());
  std::vector<i64> idx(out_shape.size(), 0);
  i64 a_off = 0, b_off = 0;
  for (i64 i = 0; i < total; ++i) {
    f(i, a_off, b_off);
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      a_off += a_str[d];
      b_off += b_str[d];
      if (idx[d] < out_shape[d]) break;
      a_off -= a_str[d] * out_shape[d];
      b_off -= b_str[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

template <typename T>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, BinOp op, const char* name) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const Shape out_shape = broadcast_shape(sa, sb, name);
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));

  if (sa == sb) {
    switch (op) {
      case BinOp::Add:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
        break;
      case BinOp::Sub:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
        break;
      case BinOp::Mul:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
        break;
    }
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](i64 i, i64 ao, i64 bo) {
      switch (op) {
        case BinOp::Add: out[i] = da[ao] + db[bo]; break;
        case BinOp::Sub: out[i] = da[ao] - db[bo]; break;
        case BinOp::Mul: out[i] = da[ao] * db[bo]; break;
      }
    });
  }

  auto backward = [op, out_shape](detail::Node<T>& self, const std::vector<T>& og,
                                  detail::GradMap<T>& sink) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const bool need_a = pa->requires_grad;
    const bool need_b = pb->requires_grad;
    std::vector<T>* ga = need_a ? &sink.get(pa.get()) : nullptr;
    std::vector<T>* gb = need_b ? &sink.get(pb.get()) : nullptr;
    const auto& av = pa->data;
    const auto& bv = pb->data;
    if (pa->shape == pb->shape) {
      for (std::size_t i = 0; i < og.size(); ++i) {
        switch (op) {
          case BinOp::Add:
            if (need_a) (*ga)[i] += og[i];
            if (need_b) (*gb)[i] += og[i];
            break;
          case BinOp::Sub:
            if (need_a) (*ga)[i] += og[i];
            if (need_b) (*gb)[i] -= og[i];
            break;
          case BinOp::Mul:
            if (need_a) (*ga)[i] += og[i] * bv[i];
            if (need_b) (*gb)[i] += og[i] * av[i];
            break;
        }
      }
    } else {
      for_each_broadcast(out_shape, pa->shape, pb->shape, [&](i64 i, i64 ao, i64 bo) {
        switch (op) {
          case BinOp::Add:
            if (need_a) (*ga)[ao] += og[i];
            if (need_b) (*gb)[bo] += og[i];
            break;
          case BinOp::Sub:
            if (need_a) (*ga)[ao] += og[i];
            if (need_b) (*gb)[bo] -= og[i];
            break;
          case BinOp::Mul:
            if (need_a) (*ga)[ao] += og[i] * bv[bo];
            if (need_b) (*gb)[bo] += og[i] * av[ao];
            break;
        }
      });
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(
      out_shape, std::move(out), {a.node_ptr(), b.node_ptr()}, std::move(backward)));
}

// ---- GEMM kernels (accumulate into C) -------------------------------------

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, i64 m, i64 k, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (i64 p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, i64 m, i64 k, i64 n) {
  for (i64 i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (i64 j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (i64 p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, i64 m, i64 k, i64 n) {
  for (i64 p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (i64 i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + i * n;
      for (i64 j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct MatmulDims {
  i64 batch = 1;
  i64 m = 0, k = 0, n = 0;
  bool a_shared = false;  // rank-2 operand reused for every batch
  bool b_shared = false;
  Shape out_shape;
};

MatmulDims matmul_dims(const Shape& sa, const Shape& sb) {
  if (sa.size() < 2 || sb.size() < 2) {
    raise(ErrorKind::ShapeMismatch, "matmul requires rank >= 2, got " + shape_str(sa) + " and " + shape_str(sb));
  }
  MatmulDims d;
  d.m = sa[sa.size() - 2];
  d.k = sa[sa.size() - 1];
  const i64 kb = sb[sb.size() - 2];
  d.n = sb[sb.size() - 1];
  if (d.k != kb) {
    raise(ErrorKind::ShapeMismatch,
          "matmul inner dimensions differ: " + shape_str(sa) + " x " + shape_str(sb));
  }
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch;
  if (batch_a == batch_b) {
    batch = batch_a;
  } else if (batch_a.empty()) {
    batch = batch_b;
    d.a_shared = true;
  } else if (batch_b.empty()) {
    batch = batch_a;
    d.b_shared = true;
  } else {
    raise(ErrorKind::ShapeMismatch,
          "matmul batch dimensions differ: " + shape_str(sa) + " x " + shape_str(sb));
  }
  d.batch = numel(batch);
  d.out_shape = batch;
  d.out_shape.push_back(d.m);
  d.out_shape.push_back(d.n);
  return d;
}

// ---- conv2d helpers --------------------------------------------------------

struct ConvDims {
  i64 batch, cin, h, w;
  i64 cout, cg, kh, kw;
  i64 ho, wo;
  int stride, padding, groups;
  i64 og() const { return cout / groups; }
  i64 col_rows() const { return cg * kh * kw; }
};

template <typename T>
void im2col(const T* x, const ConvDims& d, i64 b, i64 g, T* col) {
  const i64 plane = d.h * d.w;
  const T* base = x + (b * d.cin + g * d.cg) * plane;
  i64 row = 0;
  for (i64 c = 0; c < d.cg; ++c) {
    const T* channel = base + c * plane;
    for (i64 ky = 0; ky < d.kh; ++ky) {
      for (i64 kx = 0; kx < d.kw; ++kx, ++row) {
        T* out_row = col + row * (d.ho * d.wo);
        for (i64 oy = 0; oy < d.ho; ++oy) {
          const i64 iy = oy * d.stride - d.padding + ky;
          T* dst = out_row + oy * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.wo, T(0));
            continue;
          }
          const T* src = channel + iy * d.w;
          for (i64 ox = 0; ox < d.wo; ++ox) {
            const i64 ix = ox * d.stride - d.padding + kx;
            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accumulate(const T* col, const ConvDims& d, i64 b, i64 g, T* gx) {
  const i64 plane = d.h * d.w;
  T* base = gx + (b * d.cin + g * d.cg) * plane;
  i64 row = 0;
  for (i64 c = 0; c < d.cg; ++c) {
    T* channel = base + c * plane;
    for (i64 ky = 0; ky < d.kh; ++ky) {
      for (i64 kx = 0; kx < d.kw; ++kx, ++row) {
        const T* src_row = col + row * (d.ho * d.wo);
        for (i64 oy = 0; oy < d.ho; ++oy) {
          const i64 iy = oy * d.stride - d.padding + ky;
          if (iy < 0 || iy >= d.h) continue;
          const T* src = src_row + oy * d.wo;
          T* dst = channel + iy * d.w;
          for (i64 ox = 0; ox < d.wo; ++ox) {
            const i64 ix = ox * d.stride - d.padding + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, BinOp::Add, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, BinOp::Sub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(a, b, BinOp::Mul, "mul");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double s) {
  const auto& da = a.data();
  std::vector<T> out(da.size());
  const T sv = static_cast<T>(s);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + sv;
  auto backward = [](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
  };
  return Tensor<T>::from_node(
      detail::make_op_node<T>(a.shape(), std::move(out), {a.node_ptr()}, std::move(backward)));
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, double s) {
  const auto& da = a.data();
  std::vector<T> out(da.size());
  const T sv = static_cast<T>(s);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * sv;
  auto backward = [sv](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i] * sv;
  };
  return Tensor<T>::from_node(
      detail::make_op_node<T>(a.shape(), std::move(out), {a.node_ptr()}, std::move(backward)));
}

// ---- matmul -----------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const MatmulDims d = matmul_dims(a.shape(), b.shape());
  const auto& da = a.data();
  const auto& db = b.data();
  std::vector<T> out(static_cast<std::size_t>(d.batch * d.m * d.n), T(0));
  for (i64 bi = 0; bi < d.batch; ++bi) {
    const T* pa = da.data() + (d.a_shared ? 0 : bi * d.m * d.k);
    const T* pb = db.data() + (d.b_shared ? 0 : bi * d.k * d.n);
    gemm_nn(pa, pb, out.data() + bi * d.m * d.n, d.m, d.k, d.n);
  }

  auto backward = [d](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const T* av = pa->data.data();
    const T* bv = pb->data.data();
    std::vector<T>* ga = pa->requires_grad ? &sink.get(pa.get()) : nullptr;
    std::vector<T>* gb = pb->requires_grad ? &sink.get(pb.get()) : nullptr;
    for (i64 bi = 0; bi < d.batch; ++bi) {
      const T* go = og.data() + bi * d.m * d.n;
      const T* a_blk = av + (d.a_shared ? 0 : bi * d.m * d.k);
      const T* b_blk = bv + (d.b_shared ? 0 : bi * d.k * d.n);
      if (ga) {
        T* dst = ga->data() + (d.a_shared ? 0 : bi * d.m * d.k);
        gemm_nt(go, b_blk, dst, d.m, d.n, d.k);  // dA = dC * B^T
      }
      if (gb) {
        T* dst = gb->data() + (d.b_shared ? 0 : bi * d.k * d.n);
        gemm_tn(a_blk, go, dst, d.k, d.m, d.n);  // dB = A^T * dC
      }
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(
      d.out_shape, std::move(out), {a.node_ptr(), b.node_ptr()}, std::move(backward)));
}

// ---- conv2d -----------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                 int padding, int groups) {
  if (x.ndim() != 4 || w.ndim() != 4) {
    raise(ErrorKind::ShapeMismatch, "conv2d expects 4-d input and weight, got " +
                                        shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (stride < 1 || padding < 0 || groups < 1) {
    raise(ErrorKind::InvalidParameter, "conv2d: stride >= 1, padding >= 0, groups >= 1 required");
  }
  ConvDims d;
  d.batch = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.cg = w.dim(1);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.padding = padding;
  d.groups = groups;
  if (d.cin % groups != 0 || d.cout % groups != 0 || d.cg != d.cin / groups) {
    raise(ErrorKind::ShapeMismatch,
          "conv2d channel/group mismatch: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()) +
              ", groups " + std::to_string(groups));
  }
  if (d.h + 2 * padding < d.kh || d.w + 2 * padding < d.kw) {
    raise(ErrorKind::ShapeMismatch, "conv2d kernel larger than padded input");
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != d.cout)) {
    raise(ErrorKind::ShapeMismatch, "conv2d bias must have shape [Cout]");
  }
  d.ho = (d.h + 2 * padding - d.kh) / stride + 1;
  d.wo = (d.w + 2 * padding - d.kw) / stride + 1;

  const i64 og_n = d.og();
  const i64 out_plane = d.ho * d.wo;
  std::vector<T> out(static_cast<std::size_t>(d.batch * d.cout * out_plane), T(0));
  std::vector<T> col(static_cast<std::size_t>(d.col_rows() * out_plane));
  const auto& xv = x.data();
  const auto& wv = w.data();
  for (i64 b = 0; b < d.batch; ++b) {
    for (i64 g = 0; g < d.groups; ++g) {
      im2col(xv.data(), d, b, g, col.data());
      const T* wg = wv.data() + g * og_n * d.col_rows();
      T* og_out = out.data() + (b * d.cout + g * og_n) * out_plane;
      gemm_nn(wg, col.data(), og_out, og_n, d.col_rows(), out_plane);
    }
  }
  if (bias.defined()) {
    const auto& bv = bias.data();
    for (i64 b = 0; b < d.batch; ++b) {
      for (i64 c = 0; c < d.cout; ++c) {
        T* plane = out.data() + (b * d.cout + c) * out_plane;
        const T add_v = bv[c];
        for (i64 i = 0; i < out_plane; ++i) plane[i] += add_v;
      }
    }
  }

  auto backward = [d](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    const bool has_bias = self.parents.size() > 2;
    const i64 og_n = d.og();
    const i64 out_plane = d.ho * d.wo;
    std::vector<T>* gx = px->requires_grad ? &sink.get(px.get()) : nullptr;
    std::vector<T>* gw = pw->requires_grad ? &sink.get(pw.get()) : nullptr;
    std::vector<T> col(static_cast<std::size_t>(d.col_rows() * out_plane));
    std::vector<T> dcol(static_cast<std::size_t>(d.col_rows() * out_plane));
    for (i64 b = 0; b < d.batch; ++b) {
      for (i64 g = 0; g < d.groups; ++g) {
        const T* go = og.data() + (b * d.cout + g * og_n) * out_plane;
        const T* wg = pw->data.data() + g * og_n * d.col_rows();
        if (gw) {
          im2col(px->data.data(), d, b, g, col.data());
          T* dwg = gw->data() + g * og_n * d.col_rows();
          gemm_nt(go, col.data(), dwg, og_n, out_plane, d.col_rows());
        }
        if (gx) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          gemm_tn(wg, go, dcol.data(), d.col_rows(), og_n, out_plane);
          col2im_accumulate(dcol.data(), d, b, g, gx->data());
        }
      }
    }
    if (has_bias && self.parents[2]->requires_grad) {
      auto& gb = sink.get(self.parents[2].get());
      for (i64 b = 0; b < d.batch; ++b) {
        for (i64 c = 0; c < d.cout; ++c) {
          const T* plane = og.data() + (b * d.cout + c) * out_plane;
          T acc = 0;
          for (i64 i = 0; i < out_plane; ++i) acc += plane[i];
          gb[c] += acc;
        }
      }
    }
  };

  std::vector<NodePtr<T>> parents{x.node_ptr(), w.node_ptr()};
  if (bias.defined()) parents.push_back(bias.node_ptr());
  return Tensor<T>::from_node(detail::make_op_node<T>(
      Shape{d.batch, d.cout, d.ho, d.wo}, std::move(out), std::move(parents), std::move(backward)));
}

// ---- softmax family ----------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& z, double temperature) {
  if (!(temperature > 0)) raise(ErrorKind::InvalidParameter, "softmax temperature must be > 0");
  if (z.ndim() < 1) raise(ErrorKind::InvalidShape, "softmax requires rank >= 1");
  const i64 d = z.dim(z.ndim() - 1);
  const i64 rows = z.size() / d;
  const auto& zv = z.data();
  std::vector<T> out(zv.size());
  const T inv_t = static_cast<T>(1.0 / temperature);
  for (i64 r = 0; r < rows; ++r) {
    const T* row = zv.data() + r * d;
    T* orow = out.data() + r * d;
    T mx = row[0];
    for (i64 i = 1; i < d; ++i) mx = std::max(mx, row[i]);
    T sum = 0;
    for (i64 i = 0; i < d; ++i) {
      orow[i] = std::exp((row[i] - mx) * inv_t);
      sum += orow[i];
    }
    const T inv_sum = T(1) / sum;
    for (i64 i = 0; i < d; ++i) orow[i] *= inv_sum;
  }

  auto backward = [d, inv_t](detail::Node<T>& self, const std::vector<T>& og,
                             detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    const i64 rows = self.size() / d;
    for (i64 r = 0; r < rows; ++r) {
      const T* y = self.data.data() + r * d;
      const T* go = og.data() + r * d;
      T* gr = g.data() + r * d;
      T dot = 0;
      for (i64 i = 0; i < d; ++i) dot += go[i] * y[i];
      for (i64 i = 0; i < d; ++i) gr[i] += y[i] * (go[i] - dot) * inv_t;
    }
  };

  return Tensor<T>::from_node(
      detail::make_op_node<T>(z.shape(), std::move(out), {z.node_ptr()}, std::move(backward)));
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& z) {
  if (z.ndim() < 1) raise(ErrorKind::InvalidShape, "log_softmax requires rank >= 1");
  const i64 d = z.dim(z.ndim() - 1);
  const i64 rows = z.size() / d;
  const auto& zv = z.data();
  std::vector<T> out(zv.size());
  for (i64 r = 0; r < rows; ++r) {
    const T* row = zv.data() + r * d;
    T* orow = out.data() + r * d;
    T mx = row[0];
    for (i64 i = 1; i < d; ++i) mx = std::max(mx, row[i]);
    T sum = 0;
    for (i64 i = 0; i < d; ++i) sum += std::exp(row[i] - mx);
    const T log_sum = std::log(sum);
    for (i64 i = 0; i < d; ++i) orow[i] = row[i] - mx - log_sum;
  }

  auto backward = [d](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    const i64 rows = self.size() / d;
    for (i64 r = 0; r < rows; ++r) {
      const T* ls = self.data.data() + r * d;
      const T* go = og.data() + r * d;
      T* gr = g.data() + r * d;
      T sum = 0;
      for (i64 i = 0; i < d; ++i) sum += go[i];
      for (i64 i = 0; i < d; ++i) gr[i] += go[i] - std::exp(ls[i]) * sum;
    }
  };

  return Tensor<T>::from_node(
      detail::make_op_node<T>(z.shape(), std::move(out), {z.node_ptr()}, std::move(backward)));
}

// ---- layer_norm ----------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  if (x.ndim() < 1) raise(ErrorKind::InvalidShape, "layer_norm requires rank >= 1");
  if (!(eps > 0)) raise(ErrorKind::InvalidParameter, "layer_norm eps must be > 0");
  const i64 d = x.dim(x.ndim() - 1);
  if (gamma.ndim() != 1 || gamma.dim(0) != d || beta.ndim() != 1 || beta.dim(0) != d) {
    raise(ErrorKind::ShapeMismatch, "layer_norm affine parameters must have shape [D]");
  }
  const i64 rows = x.size() / d;
  const auto& xv = x.data();
  const auto& gv = gamma.data();
  const auto& bv = beta.data();
  std::vector<T> out(xv.size());
  for (i64 r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T* orow = out.data() + r * d;
    T mean = 0;
    for (i64 i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (i64 i = 0; i < d; ++i) {
      const T c = row[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (i64 i = 0; i < d; ++i) orow[i] = (row[i] - mean) * inv * gv[i] + bv[i];
  }

  auto backward = [d, eps](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    const i64 rows = self.size() / d;
    const auto& xv = px->data;
    const auto& gv = pg->data;
    std::vector<T>* gx = px->requires_grad ? &sink.get(px.get()) : nullptr;
    std::vector<T>* gg = pg->requires_grad ? &sink.get(pg.get()) : nullptr;
    std::vector<T>* gb = pb->requires_grad ? &sink.get(pb.get()) : nullptr;
    std::vector<T> xhat(static_cast<std::size_t>(d));
    for (i64 r = 0; r < rows; ++r) {
      const T* row = xv.data() + r * d;
      const T* go = og.data() + r * d;
      T mean = 0;
      for (i64 i = 0; i < d; ++i) mean += row[i];
      mean /= static_cast<T>(d);
      T var = 0;
      for (i64 i = 0; i < d; ++i) {
        const T c = row[i] - mean;
        var += c * c;
      }
      var /= static_cast<T>(d);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
      for (i64 i = 0; i < d; ++i) xhat[i] = (row[i] - mean) * inv;
      if (gg || gb) {
        for (i64 i = 0; i < d; ++i) {
          if (gg) (*gg)[i] += go[i] * xhat[i];
          if (gb) (*gb)[i] += go[i];
        }
      }
      if (gx) {
        T mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (i64 i = 0; i < d; ++i) {
          const T dxh = go[i] * gv[i];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xhat[i];
        }
        mean_dxhat /= static_cast<T>(d);
        mean_dxhat_xhat /= static_cast<T>(d);
        T* gr = gx->data() + r * d;
        for (i64 i = 0; i < d; ++i) {
          const T dxh = go[i] * gv[i];
          gr[i] += inv * (dxh - mean_dxhat - xhat[i] * mean_dxhat_xhat);
        }
      }
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(
      x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      std::move(backward)));
}

// ---- activations ----------------------------------------------------------------

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

template <typename T>
T activation_forward(T x, Activation kind) {
  switch (kind) {
    case Activation::Relu:
      return x > T(0) ? x : T(0);
    case Activation::Silu:
      return x / (T(1) + std::exp(-x));
    case Activation::Gelu:
      return static_cast<T>(0.5 * static_cast<double>(x) *
                            (1.0 + std::erf(static_cast<double>(x) * kInvSqrt2)));
  }
  return T(0);
}

template <typename T>
T activation_grad(T x, Activation kind) {
  switch (kind) {
    case Activation::Relu:
      return x > T(0) ? T(1) : T(0);
    case Activation::Silu: {
      const T s = T(1) / (T(1) + std::exp(-x));
      return s * (T(1) + x * (T(1) - s));
    }
    case Activation::Gelu: {
      const double xd = static_cast<double>(x);
      const double phi = 0.5 * (1.0 + std::erf(xd * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xd * xd);
      return static_cast<T>(phi + xd * pdf);
    }
  }
  return T(0);
}

}  // namespace

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  const auto& xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = activation_forward(xv[i], kind);

  auto backward = [kind](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    const auto& xv = p->data;
    for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i] * activation_grad(xv[i], kind);
  };

  return Tensor<T>::from_node(
      detail::make_op_node<T>(x.shape(), std::move(out), {x.node_ptr()}, std::move(backward)));
}

template Tensor<float> add(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> add(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> sub(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> sub(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> mul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> add_scalar(const Tensor<float>&, double);
template Tensor<double> add_scalar(const Tensor<double>&, double);
template Tensor<float> mul_scalar(const Tensor<float>&, double);
template Tensor<double> mul_scalar(const Tensor<double>&, double);
template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, int, int, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, int, int, int);
template Tensor<float> softmax(const Tensor<float>&, double);
template Tensor<double> softmax(const Tensor<double>&, double);
template Tensor<float> log_softmax(const Tensor<float>&);
template Tensor<double> log_softmax(const Tensor<double>&);
template Tensor<float> layer_norm(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> layer_norm(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> activation(const Tensor<float>&, Activation);
template Tensor<double> activation(const Tensor<double>&, Activation);

}  // namespace mvkd
