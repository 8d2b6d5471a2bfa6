#include "hep/nn/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "hep/error.hpp"

namespace hep::nn {

std::string to_string(Padding p) { return p == Padding::Zero ? "zero" : "circular"; }

Padding padding_from_string(const std::string& s) {
  if (s == "zero") return Padding::Zero;
  if (s == "circular") return Padding::Circular;
  throw InvalidArgument("unknown padding '" + s + "' (expected zero|circular)");
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Tensor<T>& Graph<T>::g(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.shape);
  return n.grad;
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Graph<T>::leaf(Tensor<T> value) {
  return push(std::move(value), true);
}

template <typename T>
Var Graph<T>::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  const std::vector<double>& eff = p.effective();
  Tensor<T> t(p.shape);
  for (std::size_t i = 0; i < eff.size(); ++i) t.data[i] = static_cast<T>(eff[i]);
  const Var v = push(std::move(t), true);
  param_nodes_[&p] = v.id;
  return v;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (loss.id < 0 || nodes_[loss.id].value.size() != 1)
    throw InvalidArgument("backward: loss must be a scalar, got shape " +
                          shape_str(nodes_[loss.id].value.shape));
  g(loss).data[0] = T(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.data.empty()) n.backward();
  }
}

template <typename T>
void Graph<T>::accumulate_param_grads() {
  for (auto& [p, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.grad.data.empty()) continue;
    std::vector<double> gd(n.grad.data.begin(), n.grad.data.end());
    const std::vector<double> gp = project(p->tying, p->shape, gd);
    for (std::size_t i = 0; i < gp.size(); ++i) p->grad[i] += gp[i];
  }
}

template <typename T>
Var Graph<T>::linear(Var x, Var w, Var b) {
  const Tensor<T>& X = value(x);
  const Tensor<T>& W = value(w);
  require(X.rank() == 2 && W.rank() == 2 && X.dim(1) == W.dim(1),
          "linear: incompatible shapes x" + shape_str(X.shape) + " w" + shape_str(W.shape));
  const int n = X.dim(0), cin = X.dim(1), cout = W.dim(0);
  Tensor<T> y({n, cout});
  MapMat<T>(y.data.data(), n, cout).noalias() =
      CMapMat<T>(X.data.data(), n, cin) * CMapMat<T>(W.data.data(), cout, cin).transpose();
  if (b.id >= 0) {
    const Tensor<T>& B = value(b);
    require(B.size() == static_cast<std::size_t>(cout), "linear: bias size mismatch");
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < cout; ++c) y.data[static_cast<std::size_t>(r) * cout + c] += B.data[c];
  }
  const bool rg = needs(x) || needs(w) || needs(b);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, w, b, out, n, cin, cout] {
      const CMapMat<T> dy(nodes_[out.id].grad.data.data(), n, cout);
      if (needs(x))
        MapMat<T>(g(x).data.data(), n, cin).noalias() +=
            dy * CMapMat<T>(value(w).data.data(), cout, cin);
      if (needs(w))
        MapMat<T>(g(w).data.data(), cout, cin).noalias() +=
            dy.transpose() * CMapMat<T>(value(x).data.data(), n, cin);
      if (needs(b)) {
        T* db = g(b).data.data();
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < cout; ++c) db[c] += dy(r, c);
      }
    };
  return out;
}

template <typename T>
Var Graph<T>::silu(Var x) {
  const Tensor<T>& X = value(x);
  Tensor<T> y(X.shape);
  for (std::size_t i = 0; i < X.size(); ++i) {
    const T v = X.data[i];
    y.data[i] = v / (T(1) + std::exp(-v));
  }
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out] {
      const auto& X = value(x).data;
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (std::size_t i = 0; i < X.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-X[i]));
        dx[i] += dy[i] * s * (T(1) + X[i] * (T(1) - s));
      }
    };
  return out;
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& A = value(a);
  const Tensor<T>& B = value(b);
  require(A.shape == B.shape, "add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  Tensor<T> y(A.shape);
  for (std::size_t i = 0; i < A.size(); ++i) y.data[i] = A.data[i] + B.data[i];
  const bool rg = needs(a) || needs(b);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, a, b, out] {
      const auto& dy = nodes_[out.id].grad.data;
      for (Var v : {a, b})
        if (needs(v)) {
          auto& d = g(v).data;
          for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
        }
    };
  return out;
}

template <typename T>
Var Graph<T>::scale(Var x, double s) {
  const Tensor<T>& X = value(x);
  Tensor<T> y(X.shape);
  const T st = static_cast<T>(s);
  for (std::size_t i = 0; i < X.size(); ++i) y.data[i] = st * X.data[i];
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out, st] {
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += st * dy[i];
    };
  return out;
}

template <typename T>
Var Graph<T>::reshape(Var x, std::vector<int> shape) {
  require(Tensor<T>::numel(shape) == value(x).size(),
          "reshape: " + shape_str(value(x).shape) + " -> " + shape_str(shape));
  Tensor<T> y(std::move(shape), value(x).data);
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out] {
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    };
  return out;
}

template <typename T>
Var Graph<T>::concat0(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat0: no inputs");
  std::vector<int> shape = value(xs[0]).shape;
  shape[0] = 0;
  bool rg = false;
  for (Var v : xs) {
    const auto& s = value(v).shape;
    require(s.size() == shape.size() && std::equal(s.begin() + 1, s.end(), shape.begin() + 1),
            "concat0: trailing shapes differ");
    shape[0] += s[0];
    rg = rg || needs(v);
  }
  Tensor<T> y(shape);
  std::size_t off = 0;
  for (Var v : xs) {
    const auto& d = value(v).data;
    std::copy(d.begin(), d.end(), y.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += d.size();
  }
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, xs, out] {
      const auto& dy = nodes_[out.id].grad.data;
      std::size_t off = 0;
      for (Var v : xs) {
        const std::size_t n = value(v).size();
        if (needs(v)) {
          auto& d = g(v).data;
          for (std::size_t i = 0; i < n; ++i) d[i] += dy[off + i];
        }
        off += n;
      }
    };
  return out;
}

template <typename T>
Var Graph<T>::concat_cols(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_cols: no inputs");
  const int n = value(xs[0]).dim(0);
  int total = 0;
  bool rg = false;
  std::vector<int> widths;
  for (Var v : xs) {
    require(value(v).rank() == 2 && value(v).dim(0) == n, "concat_cols: row counts differ");
    widths.push_back(value(v).dim(1));
    total += widths.back();
    rg = rg || needs(v);
  }
  Tensor<T> y({n, total});
  int c0 = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& d = value(xs[k]).data;
    for (int r = 0; r < n; ++r)
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(r) * widths[k], widths[k],
                  y.data.begin() + static_cast<std::ptrdiff_t>(r) * total + c0);
    c0 += widths[k];
  }
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, xs, widths, out, n, total] {
      const auto& dy = nodes_[out.id].grad.data;
      int c0 = 0;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        if (needs(xs[k])) {
          auto& d = g(xs[k]).data;
          for (int r = 0; r < n; ++r)
            for (int c = 0; c < widths[k]; ++c)
              d[static_cast<std::size_t>(r) * widths[k] + c] += dy[static_cast<std::size_t>(r) * total + c0 + c];
        }
        c0 += widths[k];
      }
    };
  return out;
}

template <typename T>
Var Graph<T>::permute_cols(Var x, std::vector<int> perm) {
  const Tensor<T>& X = value(x);
  require(X.rank() == 2 && static_cast<int>(perm.size()) == X.dim(1), "permute_cols: size mismatch");
  const int n = X.dim(0), c = X.dim(1);
  Tensor<T> y(X.shape);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < c; ++j)
      y.data[static_cast<std::size_t>(r) * c + j] = X.data[static_cast<std::size_t>(r) * c + perm[j]];
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out, perm = std::move(perm), n, c] {
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < c; ++j)
          dx[static_cast<std::size_t>(r) * c + perm[j]] += dy[static_cast<std::size_t>(r) * c + j];
    };
  return out;
}

template <typename T>
Var Graph<T>::segment_max(Var x, std::vector<int> offsets) {
  const Tensor<T>& X = value(x);
  require(X.rank() == 2 && offsets.size() >= 1 && offsets.back() == X.dim(0),
          "segment_max: offsets do not cover the rows");
  const int s = static_cast<int>(offsets.size()) - 1, c = X.dim(1);
  Tensor<T> y({s, c});
  std::vector<int> arg(static_cast<std::size_t>(s) * c);
  for (int k = 0; k < s; ++k) {
    require(offsets[k + 1] > offsets[k], "segment_max: empty segment");
    for (int j = 0; j < c; ++j) {
      int best = offsets[k];
      for (int r = offsets[k] + 1; r < offsets[k + 1]; ++r)
        if (X.data[static_cast<std::size_t>(r) * c + j] > X.data[static_cast<std::size_t>(best) * c + j]) best = r;
      arg[static_cast<std::size_t>(k) * c + j] = best;
      y.data[static_cast<std::size_t>(k) * c + j] = X.data[static_cast<std::size_t>(best) * c + j];
    }
  }
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out, arg = std::move(arg), c] {
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (std::size_t i = 0; i < arg.size(); ++i)
        dx[static_cast<std::size_t>(arg[i]) * c + i % c] += dy[i];
    };
  return out;
}

template <typename T>
Var Graph<T>::scatter_rows(Var x, std::vector<int> cells, std::array<int, 3> zyx) {
  const Tensor<T>& X = value(x);
  require(X.rank() == 2 && static_cast<int>(cells.size()) == X.dim(0), "scatter_rows: row count mismatch");
  const int c = X.dim(1);
  const std::size_t nv = static_cast<std::size_t>(zyx[0]) * zyx[1] * zyx[2];
  Tensor<T> y({c, zyx[0], zyx[1], zyx[2]});
  for (std::size_t s = 0; s < cells.size(); ++s) {
    require(cells[s] >= 0 && static_cast<std::size_t>(cells[s]) < nv, "scatter_rows: cell out of range");
    for (int j = 0; j < c; ++j) y.data[j * nv + cells[s]] = X.data[s * c + j];
  }
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out, cells = std::move(cells), c, nv] {
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (std::size_t s = 0; s < cells.size(); ++s)
        for (int j = 0; j < c; ++j) dx[s * c + j] += dy[j * nv + cells[s]];
    };
  return out;
}

namespace {

// Column matrix [nvox, cin * k^3] for cross-correlation; entry (v, i*taps+p)
// is input channel i at voxel v + offset(p), or 0 outside a zero-padded grid.
template <typename T>
void im2col(const T* x, int cin, int nz, int ny, int nx, int k, Padding pad, T* cols) {
  const int r = k / 2, taps = k * k * k;
  const std::size_t nv = static_cast<std::size_t>(nz) * ny * nx;
  const std::size_t width = static_cast<std::size_t>(cin) * taps;
  auto wrap = [](int a, int n) { return ((a % n) + n) % n; };
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int xx = 0; xx < nx; ++xx) {
        T* row = cols + ((static_cast<std::size_t>(z) * ny + y) * nx + xx) * width;
        int p = 0;
        for (int dz = -r; dz <= r; ++dz)
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx, ++p) {
              int sz = z + dz, sy = y + dy, sx = xx + dx;
              bool inside = sz >= 0 && sz < nz && sy >= 0 && sy < ny && sx >= 0 && sx < nx;
              if (!inside && pad == Padding::Circular) {
                sz = wrap(sz, nz);
                sy = wrap(sy, ny);
                sx = wrap(sx, nx);
                inside = true;
              }
              const std::size_t src = (static_cast<std::size_t>(sz) * ny + sy) * nx + sx;
              for (int i = 0; i < cin; ++i) row[i * taps + p] = inside ? x[i * nv + src] : T(0);
            }
      }
}

template <typename T>
void col2im(const T* cols, int cin, int nz, int ny, int nx, int k, Padding pad, T* dx) {
  const int r = k / 2, taps = k * k * k;
  const std::size_t nv = static_cast<std::size_t>(nz) * ny * nx;
  const std::size_t width = static_cast<std::size_t>(cin) * taps;
  auto wrap = [](int a, int n) { return ((a % n) + n) % n; };
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int xx = 0; xx < nx; ++xx) {
        const T* row = cols + ((static_cast<std::size_t>(z) * ny + y) * nx + xx) * width;
        int p = 0;
        for (int dz = -r; dz <= r; ++dz)
          for (int dy = -r; dy <= r; ++dy)
            for (int ddx = -r; ddx <= r; ++ddx, ++p) {
              int sz = z + dz, sy = y + dy, sx = xx + ddx;
              const bool inside = sz >= 0 && sz < nz && sy >= 0 && sy < ny && sx >= 0 && sx < nx;
              if (!inside) {
                if (pad == Padding::Zero) continue;
                sz = wrap(sz, nz);
                sy = wrap(sy, ny);
                sx = wrap(sx, nx);
              }
              const std::size_t src = (static_cast<std::size_t>(sz) * ny + sy) * nx + sx;
              for (int i = 0; i < cin; ++i) dx[i * nv + src] += row[i * taps + p];
            }
      }
}

}  // namespace

template <typename T>
Var Graph<T>::conv3d(Var x, Var w, Var b, Padding pad) {
  const Tensor<T>& X = value(x);
  const Tensor<T>& W = value(w);
  require(X.rank() == 4 && W.rank() == 5 && W.dim(1) == X.dim(0),
          "conv3d: incompatible shapes x" + shape_str(X.shape) + " w" + shape_str(W.shape));
  const int k = W.dim(2);
  require(k % 2 == 1 && W.dim(3) == k && W.dim(4) == k, "conv3d: kernel must be odd and cubic");
  const int cin = X.dim(0), nz = X.dim(1), ny = X.dim(2), nx = X.dim(3), cout = W.dim(0);
  const int taps = k * k * k;
  const int width = cin * taps;
  const int nv = nz * ny * nx;

  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(nv) * width);
  im2col(X.data.data(), cin, nz, ny, nx, k, pad, cols->data());
  Tensor<T> y({cout, nz, ny, nx});
  MapMat<T>(y.data.data(), cout, nv).noalias() =
      CMapMat<T>(W.data.data(), cout, width) * CMapMat<T>(cols->data(), nv, width).transpose();
  if (b.id >= 0) {
    const Tensor<T>& B = value(b);
    require(B.size() == static_cast<std::size_t>(cout), "conv3d: bias size mismatch");
    for (int c = 0; c < cout; ++c)
      for (int v = 0; v < nv; ++v) y.data[static_cast<std::size_t>(c) * nv + v] += B.data[c];
  }
  const bool rg = needs(x) || needs(w) || needs(b);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, w, b, out, cols, cin, nz, ny, nx, k, pad, cout, width, nv] {
      const CMapMat<T> dy(nodes_[out.id].grad.data.data(), cout, nv);
      if (needs(w))
        MapMat<T>(g(w).data.data(), cout, width).noalias() += dy * CMapMat<T>(cols->data(), nv, width);
      if (needs(b)) {
        T* db = g(b).data.data();
        for (int c = 0; c < cout; ++c) db[c] += dy.row(c).sum();
      }
      if (needs(x)) {
        RowMat<T> dcols = dy.transpose() * CMapMat<T>(value(w).data.data(), cout, width);
        col2im(dcols.data(), cin, nz, ny, nx, k, pad, g(x).data.data());
      }
    };
  return out;
}

template <typename T>
Var Graph<T>::avgpool2(Var x) {
  const Tensor<T>& X = value(x);
  require(X.rank() == 4 && X.dim(1) % 2 == 0 && X.dim(2) % 2 == 0 && X.dim(3) % 2 == 0,
          "avgpool2: spatial dims must be even, got " + shape_str(X.shape));
  const int c = X.dim(0), nz = X.dim(1), ny = X.dim(2), nx = X.dim(3);
  const int mz = nz / 2, my = ny / 2, mx = nx / 2;
  Tensor<T> y({c, mz, my, mx});
  auto in_at = [&](int ch, int z, int yy, int xx) {
    return ((static_cast<std::size_t>(ch) * nz + z) * ny + yy) * nx + xx;
  };
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < mz; ++z)
      for (int yy = 0; yy < my; ++yy)
        for (int xx = 0; xx < mx; ++xx) {
          T s = 0;
          for (int a = 0; a < 2; ++a)
            for (int bb = 0; bb < 2; ++bb)
              for (int cc = 0; cc < 2; ++cc) s += X.data[in_at(ch, 2 * z + a, 2 * yy + bb, 2 * xx + cc)];
          y.data[((static_cast<std::size_t>(ch) * mz + z) * my + yy) * mx + xx] = s / T(8);
        }
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out, c, nz, ny, nx, mz, my, mx] {
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (int ch = 0; ch < c; ++ch)
        for (int z = 0; z < nz; ++z)
          for (int yy = 0; yy < ny; ++yy)
            for (int xx = 0; xx < nx; ++xx)
              dx[((static_cast<std::size_t>(ch) * nz + z) * ny + yy) * nx + xx] +=
                  dy[((static_cast<std::size_t>(ch) * mz + z / 2) * my + yy / 2) * mx + xx / 2] / T(8);
    };
  return out;
}

template <typename T>
Var Graph<T>::upsample2(Var x) {
  const Tensor<T>& X = value(x);
  require(X.rank() == 4, "upsample2: expected a [C, Z, Y, X] grid");
  const int c = X.dim(0), mz = X.dim(1), my = X.dim(2), mx = X.dim(3);
  const int nz = 2 * mz, ny = 2 * my, nx = 2 * mx;
  Tensor<T> y({c, nz, ny, nx});
  for (int ch = 0; ch < c; ++ch)
    for (int z = 0; z < nz; ++z)
      for (int yy = 0; yy < ny; ++yy)
        for (int xx = 0; xx < nx; ++xx)
          y.data[((static_cast<std::size_t>(ch) * nz + z) * ny + yy) * nx + xx] =
              X.data[((static_cast<std::size_t>(ch) * mz + z / 2) * my + yy / 2) * mx + xx / 2];
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out, c, nz, ny, nx, mz, my, mx] {
      const auto& dy = nodes_[out.id].grad.data;
      auto& dx = g(x).data;
      for (int ch = 0; ch < c; ++ch)
        for (int z = 0; z < nz; ++z)
          for (int yy = 0; yy < ny; ++yy)
            for (int xx = 0; xx < nx; ++xx)
              dx[((static_cast<std::size_t>(ch) * mz + z / 2) * my + yy / 2) * mx + xx / 2] +=
                  dy[((static_cast<std::size_t>(ch) * nz + z) * ny + yy) * nx + xx];
    };
  return out;
}

template <typename T>
Var Graph<T>::cross_entropy(Var logits, std::size_t target) {
  const Tensor<T>& L = value(logits);
  require(target < L.size(), "cross_entropy: target out of range");
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : L.data) mx = std::max(mx, v);
  T se = 0;
  for (T v : L.data) se += std::exp(v - mx);
  const T lse = mx + std::log(se);
  Tensor<T> y({1});
  y.data[0] = lse - L.data[target];
  const bool rg = needs(logits);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, logits, out, target, lse] {
      const T d = nodes_[out.id].grad.data[0];
      const auto& L = value(logits).data;
      auto& dl = g(logits).data;
      for (std::size_t i = 0; i < L.size(); ++i) dl[i] += d * std::exp(L[i] - lse);
      dl[target] -= d;
    };
  return out;
}

template <typename T>
Var Graph<T>::mse(Var x, const Tensor<T>& target) {
  const Tensor<T>& X = value(x);
  require(X.size() == target.size() && X.size() > 0, "mse: size mismatch");
  T s = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const T d = X.data[i] - target.data[i];
    s += d * d;
  }
  const T inv = T(1) / static_cast<T>(X.size());
  Tensor<T> y({1});
  y.data[0] = s * inv;
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out, t = target.data, inv] {
      const T d = nodes_[out.id].grad.data[0];
      const auto& X = value(x).data;
      auto& dx = g(x).data;
      for (std::size_t i = 0; i < X.size(); ++i) dx[i] += d * T(2) * (X[i] - t[i]) * inv;
    };
  return out;
}

template <typename T>
Var Graph<T>::sum_squares(Var x) {
  const Tensor<T>& X = value(x);
  T s = 0;
  for (T v : X.data) s += v * v;
  Tensor<T> y({1});
  y.data[0] = s;
  const bool rg = needs(x);
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, x, out] {
      const T d = nodes_[out.id].grad.data[0];
      const auto& X = value(x).data;
      auto& dx = g(x).data;
      for (std::size_t i = 0; i < X.size(); ++i) dx[i] += d * T(2) * X[i];
    };
  return out;
}

template <typename T>
Var Graph<T>::sum(const std::vector<Var>& scalars) {
  T s = 0;
  bool rg = false;
  for (Var v : scalars) {
    require(value(v).size() == 1, "sum: inputs must be scalars");
    s += value(v).data[0];
    rg = rg || needs(v);
  }
  Tensor<T> y({1});
  y.data[0] = s;
  const Var out = push(std::move(y), rg);
  if (rg)
    nodes_[out.id].backward = [this, scalars, out] {
      const T d = nodes_[out.id].grad.data[0];
      for (Var v : scalars)
        if (needs(v)) g(v).data[0] += d;
    };
  return out;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace hep::nn
