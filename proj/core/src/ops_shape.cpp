#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvkd/ops.hpp"

namespace mvkd {

namespace {

using i64 = std::int64_t;

std::vector<i64> row_major_strides(const Shape& shape) {
  std::vector<i64> strides(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) {
    strides[d] = strides[d + 1] * shape[d + 1];
  }
  return strides;
}

std::vector<int> normalize_axes(const std::vector<int>& axes, int ndim) {
  std::vector<int> out;
  out.reserve(axes.size());
  for (int axis : axes) {
    const int a = axis < 0 ? axis + ndim : axis;
    if (a < 0 || a >= ndim) {
      raise(ErrorKind::InvalidAxis, "axis " + std::to_string(axis) + " out of range for rank " +
                                        std::to_string(ndim));
    }
    out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
    raise(ErrorKind::InvalidAxis, "duplicate reduction axis");
  }
  return out;
}

}  // namespace

// ---- unfold / fold -----------------------------------------------------------

template <typename T>
Tensor<T> unfold_patches(const Tensor<T>& x, int p) {
  if (x.ndim() != 4) raise(ErrorKind::ShapeMismatch, "unfold_patches expects [B,C,H,W]");
  if (p < 1) raise(ErrorKind::InvalidParameter, "patch size must be >= 1");
  const i64 b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % p != 0 || w % p != 0) {
    raise(ErrorKind::PatchMismatch, "spatial dims " + shape_str({h, w}) + " not divisible by patch " +
                                        std::to_string(p));
  }
  const i64 gh = h / p, gw = w / p;
  const i64 n = gh * gw;       // patches
  const i64 q = i64(p) * p;    // pixels per patch
  const auto& xv = x.data();
  std::vector<T> out(xv.size());
  // out[b, n, q, c] = x[b, c, ph*p+py, pw*p+px]
  for (i64 bi = 0; bi < b; ++bi) {
    for (i64 ci = 0; ci < c; ++ci) {
      const T* plane = xv.data() + (bi * c + ci) * h * w;
      for (i64 y = 0; y < h; ++y) {
        const i64 ph = y / p, py = y % p;
        for (i64 xw = 0; xw < w; ++xw) {
          const i64 pw = xw / p, px = xw % p;
          const i64 ni = ph * gw + pw;
          const i64 qi = py * p + px;
          out[((bi * n + ni) * q + qi) * c + ci] = plane[y * w + xw];
        }
      }
    }
  }

  auto backward = [p, h, w](detail::Node<T>& self, const std::vector<T>& og,
                            detail::GradMap<T>& sink) {
    auto& px_node = self.parents[0];
    if (!px_node->requires_grad) return;
    auto& g = sink.get(px_node.get());
    const i64 b = px_node->shape[0], c = px_node->shape[1];
    const i64 gw = w / p;
    const i64 n = (h / p) * gw;
    const i64 q = i64(p) * p;
    for (i64 bi = 0; bi < b; ++bi) {
      for (i64 ci = 0; ci < c; ++ci) {
        T* plane = g.data() + (bi * c + ci) * h * w;
        for (i64 y = 0; y < h; ++y) {
          const i64 ph = y / p, py = y % p;
          for (i64 xw = 0; xw < w; ++xw) {
            const i64 pw = xw / p, pxp = xw % p;
            const i64 ni = ph * gw + pw;
            const i64 qi = py * p + pxp;
            plane[y * w + xw] += og[((bi * n + ni) * q + qi) * c + ci];
          }
        }
      }
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(Shape{b, n, q, c}, std::move(out),
                                                      {x.node_ptr()}, std::move(backward)));
}

template <typename T>
Tensor<T> fold_patches(const Tensor<T>& t, int p, std::int64_t h, std::int64_t w) {
  if (t.ndim() != 4) raise(ErrorKind::ShapeMismatch, "fold_patches expects [B,N,p*p,C]");
  if (p < 1) raise(ErrorKind::InvalidParameter, "patch size must be >= 1");
  if (h % p != 0 || w % p != 0) {
    raise(ErrorKind::PatchMismatch, "target dims not divisible by patch " + std::to_string(p));
  }
  const i64 b = t.dim(0), n = t.dim(1), q = t.dim(2), c = t.dim(3);
  const i64 gh = h / p, gw = w / p;
  if (n != gh * gw || q != i64(p) * p) {
    raise(ErrorKind::PatchMismatch, "patch layout " + shape_str(t.shape()) +
                                        " inconsistent with target " + shape_str({h, w}));
  }
  const auto& tv = t.data();
  std::vector<T> out(static_cast<std::size_t>(b * c * h * w));
  for (i64 bi = 0; bi < b; ++bi) {
    for (i64 ci = 0; ci < c; ++ci) {
      T* plane = out.data() + (bi * c + ci) * h * w;
      for (i64 y = 0; y < h; ++y) {
        const i64 ph = y / p, py = y % p;
        for (i64 xw = 0; xw < w; ++xw) {
          const i64 pw = xw / p, px = xw % p;
          plane[y * w + xw] = tv[((bi * n + (ph * gw + pw)) * q + (py * p + px)) * c + ci];
        }
      }
    }
  }

  auto backward = [p, h, w](detail::Node<T>& self, const std::vector<T>& og,
                            detail::GradMap<T>& sink) {
    auto& pt = self.parents[0];
    if (!pt->requires_grad) return;
    auto& g = sink.get(pt.get());
    const i64 b = pt->shape[0], n = pt->shape[1], q = pt->shape[2], c = pt->shape[3];
    const i64 gw = w / p;
    for (i64 bi = 0; bi < b; ++bi) {
      for (i64 ci = 0; ci < c; ++ci) {
        const T* plane = og.data() + (bi * c + ci) * h * w;
        for (i64 y = 0; y < h; ++y) {
          const i64 ph = y / p, py = y % p;
          for (i64 xw = 0; xw < w; ++xw) {
            const i64 pw = xw / p, px = xw % p;
            g[((bi * n + (ph * gw + pw)) * q + (py * p + px)) * c + ci] += plane[y * w + xw];
          }
        }
      }
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(Shape{b, c, h, w}, std::move(out),
                                                      {t.node_ptr()}, std::move(backward)));
}

// ---- reductions ---------------------------------------------------------------

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, Reduce op, const std::vector<int>& axes, bool keepdims) {
  const int nd = x.ndim();
  const auto ax = normalize_axes(axes, nd);
  if (ax.empty()) raise(ErrorKind::InvalidAxis, "reduce requires at least one axis");

  std::vector<bool> reduced(static_cast<std::size_t>(nd), false);
  for (int a : ax) reduced[static_cast<std::size_t>(a)] = true;

  Shape out_shape;
  for (int d = 0; d < nd; ++d) {
    if (!reduced[static_cast<std::size_t>(d)]) {
      out_shape.push_back(x.dim(d));
    } else if (keepdims) {
      out_shape.push_back(1);
    }
  }
  const i64 out_n = numel(out_shape);
  i64 group = 1;
  for (int a : ax) group *= x.dim(a);

  // Per-input-axis stride into the output buffer (0 on reduced axes).
  const auto in_strides = row_major_strides(x.shape());
  std::vector<i64> out_map(static_cast<std::size_t>(nd), 0);
  {
    i64 stride = 1;
    for (int d = nd - 1; d >= 0; --d) {
      if (!reduced[static_cast<std::size_t>(d)]) {
        out_map[static_cast<std::size_t>(d)] = stride;
        stride *= x.dim(d);
      }
    }
  }

  const auto& xv = x.data();
  std::vector<T> out;
  std::vector<i64> argmax;
  const i64 total = x.size();

  auto out_index_of = [&](i64 flat) {
    i64 o = 0;
    for (int d = 0; d < nd; ++d) {
      const i64 idx = (flat / in_strides[static_cast<std::size_t>(d)]) % x.dim(d);
      o += idx * out_map[static_cast<std::size_t>(d)];
    }
    return o;
  };

  switch (op) {
    case Reduce::Sum:
    case Reduce::Mean: {
      out.assign(static_cast<std::size_t>(out_n), T(0));
      for (i64 i = 0; i < total; ++i) out[out_index_of(i)] += xv[i];
      if (op == Reduce::Mean) {
        for (auto& v : out) v /= static_cast<T>(group);
      }
      break;
    }
    case Reduce::Max: {
      out.assign(static_cast<std::size_t>(out_n), std::numeric_limits<T>::lowest());
      argmax.assign(static_cast<std::size_t>(out_n), -1);
      for (i64 i = 0; i < total; ++i) {
        const i64 o = out_index_of(i);
        // Strict > keeps the first maximal element in row-major order.
        if (argmax[o] < 0 || xv[i] > out[o]) {
          out[o] = xv[i];
          argmax[o] = i;
        }
      }
      break;
    }
  }

  auto backward = [op, group, in_strides, out_map, nd, argmax](detail::Node<T>& self,
                                                               const std::vector<T>& og,
                                                               detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    if (op == Reduce::Max) {
      for (std::size_t o = 0; o < og.size(); ++o) g[argmax[o]] += og[o];
      return;
    }
    const T scale = op == Reduce::Mean ? T(1) / static_cast<T>(group) : T(1);
    const i64 total = p->size();
    for (i64 i = 0; i < total; ++i) {
      i64 o = 0;
      for (int d = 0; d < nd; ++d) {
        const i64 idx = (i / in_strides[static_cast<std::size_t>(d)]) % p->shape[d];
        o += idx * out_map[static_cast<std::size_t>(d)];
      }
      g[i] += og[o] * scale;
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(std::move(out_shape), std::move(out),
                                                      {x.node_ptr()}, std::move(backward)));
}

template <typename T>
Tensor<T> reduce_all(const Tensor<T>& x, Reduce op) {
  std::vector<int> axes(static_cast<std::size_t>(x.ndim()));
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(x, op, axes, false);
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.ndim() != 4) raise(ErrorKind::ShapeMismatch, "global_avg_pool expects [B,C,H,W]");
  return reduce(x, Reduce::Mean, {2, 3}, false);
}

// ---- layout ops ----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  for (auto extent : shape) {
    if (extent < 1) raise(ErrorKind::InvalidShape, "reshape extents must be >= 1");
  }
  if (numel(shape) != x.size()) {
    raise(ErrorKind::InvalidShape,
          "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  }
  std::vector<T> out = x.data();
  auto backward = [](detail::Node<T>& self, const std::vector<T>& og, detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    for (std::size_t i = 0; i < og.size(); ++i) g[i] += og[i];
  };
  return Tensor<T>::from_node(
      detail::make_op_node<T>(shape, std::move(out), {x.node_ptr()}, std::move(backward)));
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
  const int nd = x.ndim();
  if (static_cast<int>(axes.size()) != nd) {
    raise(ErrorKind::InvalidAxis, "permute needs exactly one index per axis");
  }
  std::vector<bool> seen(static_cast<std::size_t>(nd), false);
  for (int a : axes) {
    if (a < 0 || a >= nd || seen[static_cast<std::size_t>(a)]) {
      raise(ErrorKind::InvalidAxis, "permute axes must be a permutation of 0..rank-1");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(nd));
  for (int d = 0; d < nd; ++d) out_shape[d] = x.dim(axes[static_cast<std::size_t>(d)]);

  const auto in_strides = row_major_strides(x.shape());
  std::vector<i64> gather(static_cast<std::size_t>(nd));  // out axis d walks in stride gather[d]
  for (int d = 0; d < nd; ++d) gather[d] = in_strides[static_cast<std::size_t>(axes[d])];

  const auto& xv = x.data();
  std::vector<T> out(xv.size());
  const i64 total = x.size();
  std::vector<i64> idx(static_cast<std::size_t>(nd), 0);
  i64 src = 0;
  for (i64 i = 0; i < total; ++i) {
    out[i] = xv[src];
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      src += gather[d];
      if (idx[d] < out_shape[d]) break;
      src -= gather[d] * out_shape[d];
      idx[d] = 0;
    }
  }

  auto backward = [out_shape, gather, nd](detail::Node<T>& self, const std::vector<T>& og,
                                          detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    const i64 total = self.size();
    std::vector<i64> idx(static_cast<std::size_t>(nd), 0);
    i64 src = 0;
    for (i64 i = 0; i < total; ++i) {
      g[src] += og[i];
      for (int d = nd - 1; d >= 0; --d) {
        ++idx[d];
        src += gather[d];
        if (idx[d] < out_shape[d]) break;
        src -= gather[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(std::move(out_shape), std::move(out),
                                                      {x.node_ptr()}, std::move(backward)));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) raise(ErrorKind::InvalidParameter, "concat needs at least one tensor");
  const int nd = parts[0].ndim();
  const int a = axis < 0 ? axis + nd : axis;
  if (a < 0 || a >= nd) raise(ErrorKind::InvalidAxis, "concat axis out of range");
  Shape out_shape = parts[0].shape();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    if (static_cast<int>(s.size()) != nd) raise(ErrorKind::ShapeMismatch, "concat rank mismatch");
    for (int d = 0; d < nd; ++d) {
      if (d != a && s[d] != out_shape[d]) {
        raise(ErrorKind::ShapeMismatch, "concat dims differ outside the concat axis");
      }
    }
    out_shape[a] += s[a];
  }

  i64 outer = 1, inner = 1;
  for (int d = 0; d < a; ++d) outer *= out_shape[d];
  for (int d = a + 1; d < nd; ++d) inner *= out_shape[d];

  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<i64> chunk(parts.size());
  for (std::size_t pi = 0; pi < parts.size(); ++pi) chunk[pi] = parts[pi].dim(a) * inner;
  const i64 out_row = out_shape[a] * inner;
  for (i64 o = 0; o < outer; ++o) {
    i64 offset = o * out_row;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const T* src = parts[pi].data().data() + o * chunk[pi];
      std::copy(src, src + chunk[pi], out.data() + offset);
      offset += chunk[pi];
    }
  }

  auto backward = [outer, inner, chunk, out_row](detail::Node<T>& self, const std::vector<T>& og,
                                                 detail::GradMap<T>& sink) {
    for (i64 o = 0; o < outer; ++o) {
      i64 offset = o * out_row;
      for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
        auto& p = self.parents[pi];
        if (p->requires_grad) {
          auto& g = sink.get(p.get());
          for (i64 i = 0; i < chunk[pi]; ++i) g[o * chunk[pi] + i] += og[offset + i];
        }
        offset += chunk[pi];
      }
    }
  };

  std::vector<std::shared_ptr<detail::Node<T>>> parent_nodes;
  parent_nodes.reserve(parts.size());
  for (const auto& t : parts) parent_nodes.push_back(t.node_ptr());
  return Tensor<T>::from_node(detail::make_op_node<T>(std::move(out_shape), std::move(out),
                                                      std::move(parent_nodes), std::move(backward)));
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t length) {
  const int nd = x.ndim();
  const int a = axis < 0 ? axis + nd : axis;
  if (a < 0 || a >= nd) raise(ErrorKind::InvalidAxis, "slice axis out of range");
  if (start < 0 || length < 1 || start + length > x.dim(a)) {
    raise(ErrorKind::InvalidParameter, "slice range [" + std::to_string(start) + ", " +
                                           std::to_string(start + length) + ") out of bounds");
  }
  Shape out_shape = x.shape();
  out_shape[a] = length;
  i64 outer = 1, inner = 1;
  for (int d = 0; d < a; ++d) outer *= x.dim(d);
  for (int d = a + 1; d < nd; ++d) inner *= x.dim(d);

  const auto& xv = x.data();
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  const i64 in_row = x.dim(a) * inner;
  const i64 out_chunk = length * inner;
  for (i64 o = 0; o < outer; ++o) {
    const T* src = xv.data() + o * in_row + start * inner;
    std::copy(src, src + out_chunk, out.data() + o * out_chunk);
  }

  auto backward = [outer, inner, in_row, out_chunk, start](detail::Node<T>& self,
                                                           const std::vector<T>& og,
                                                           detail::GradMap<T>& sink) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    auto& g = sink.get(p.get());
    for (i64 o = 0; o < outer; ++o) {
      T* dst = g.data() + o * in_row + start * inner;
      const T* src = og.data() + o * out_chunk;
      for (i64 i = 0; i < out_chunk; ++i) dst[i] += src[i];
    }
  };

  return Tensor<T>::from_node(detail::make_op_node<T>(std::move(out_shape), std::move(out),
                                                      {x.node_ptr()}, std::move(backward)));
}

template Tensor<float> unfold_patches(const Tensor<float>&, int);
template Tensor<double> unfold_patches(const Tensor<double>&, int);
template Tensor<float> fold_patches(const Tensor<float>&, int, std::int64_t, std::int64_t);
template Tensor<double> fold_patches(const Tensor<double>&, int, std::int64_t, std::int64_t);
template Tensor<float> reduce(const Tensor<float>&, Reduce, const std::vector<int>&, bool);
template Tensor<double> reduce(const Tensor<double>&, Reduce, const std::vector<int>&, bool);
template Tensor<float> reduce_all(const Tensor<float>&, Reduce);
template Tensor<double> reduce_all(const Tensor<double>&, Reduce);
template Tensor<float> global_avg_pool(const Tensor<float>&);
template Tensor<double> global_avg_pool(const Tensor<double>&);
template Tensor<float> reshape(const Tensor<float>&, const Shape&);
template Tensor<double> reshape(const Tensor<double>&, const Shape&);
template Tensor<float> permute(const Tensor<float>&, const std::vector<int>&);
template Tensor<double> permute(const Tensor<double>&, const std::vector<int>&);
template Tensor<float> concat(const std::vector<Tensor<float>>&, int);
template Tensor<double> concat(const std::vector<Tensor<double>>&, int);
template Tensor<float> slice(const Tensor<float>&, int, std::int64_t, std::int64_t);
template Tensor<double> slice(const Tensor<double>&, int, std::int64_t, std::int64_t);

}  // namespace mvkd
