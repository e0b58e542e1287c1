#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sbnlab/errors.hpp"

namespace sbnlab {

// Dense row-major f64 array. The sole value carrier of the library.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<size_t> shape)
      : shape_(std::move(shape)), data_(checked_count(shape_), 0.0) {}

  Tensor(std::vector<size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_count(shape_) != data_.size()) {
      throw ShapeError("Tensor: shape " + shape_string(shape_) + " needs " +
                       std::to_string(checked_count(shape_)) + " values, got " +
                       std::to_string(data_.size()));
    }
  }

  static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<size_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  // 2-D convenience constructor for tests and small fixtures.
  static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
    const size_t r = rows.size();
    const size_t c = r ? rows[0].size() : 0;
    Tensor t({r, c});
    for (size_t i = 0; i < r; ++i) {
      if (rows[i].size() != c) throw ShapeError("from_rows: ragged rows");
      std::copy(rows[i].begin(), rows[i].end(), t.data_.begin() + i * c);
    }
    return t;
  }

  static Tensor identity(size_t n) {
    Tensor t({n, n});
    for (size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  size_t extent(size_t d) const { return shape_.at(d); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::span<const double> span() const { return {data_.data(), data_.size()}; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double& operator()(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

  double& operator()(size_t b, size_t c, size_t h, size_t w) {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double operator()(size_t b, size_t c, size_t h, size_t w) const {
    return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<size_t> new_shape) const {
    if (checked_count(new_shape) != data_.size()) {
      throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(new_shape) +
                       " changes element count");
    }
    return Tensor(std::move(new_shape), data_);
  }

  std::string shape_str() const { return shape_string(shape_); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::string shape_string(const std::vector<size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
  }

 private:
  static size_t checked_count(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t e : shape) {
      if (e == 0) throw ShapeError("Tensor: zero extent in shape " + shape_string(shape));
      n *= e;
    }
    return shape.empty() ? 0 : n;
  }

  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// Runs f(begin, end) over [0, n) split across threads. Every output element is
// produced by exactly one chunk with a fixed inner order, so results are
// bit-identical to the serial run for any thread count.
template <typename F>
void parallel_for(size_t n, size_t grain, F&& f) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const size_t chunks = std::min<size_t>(hw, grain ? std::max<size_t>(1, n / grain) : 1);
  if (chunks <= 1 || n == 0) {
    f(size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(chunks - 1);
  const size_t step = (n + chunks - 1) / chunks;
  for (size_t c = 1; c < chunks; ++c) {
    const size_t b = std::min(n, c * step);
    const size_t e = std::min(n, b + step);
    if (b < e) pool.emplace_back([&f, b, e] { f(b, e); });
  }
  f(size_t{0}, std::min(n, step));
  for (auto& t : pool) t.join();
}

namespace detail {

inline void require_rank(const Tensor& t, size_t r, const char* op) {
  if (t.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + " tensor, got " +
                     t.shape_str());
  }
}

}  // namespace detail

// ---- matrix products ------------------------------------------------------

// c[M,N] = a[M,K] * b[K,N]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul: inner extents differ, " + a.shape_str() + " x " + b.shape_str());
  }
  const size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor c({m, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const size_t grain = std::max<size_t>(1, 16384 / std::max<size_t>(1, k * n));
  parallel_for(m, grain, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      double* crow = cp + i * n;
      const double* arow = ap + i * k;
      for (size_t kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        const double* brow = bp + kk * n;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
  return c;
}

// c[M,N] = a[M,K] * b[N,K]^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul_nt");
  detail::require_rank(b, 2, "matmul_nt");
  if (a.extent(1) != b.extent(1)) {
    throw ShapeError("matmul_nt: inner extents differ, " + a.shape_str() + " x " + b.shape_str() +
                     "^T");
  }
  const size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  Tensor c({m, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const size_t grain = std::max<size_t>(1, 16384 / std::max<size_t>(1, k * n));
  parallel_for(m, grain, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      const double* arow = ap + i * k;
      double* crow = cp + i * n;
      for (size_t j = 0; j < n; ++j) {
        const double* brow = bp + j * k;
        double acc = 0.0;
        for (size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        crow[j] = acc;
      }
    }
  });
  return c;
}

// c[M,N] = a[K,M]^T * b[K,N]
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul_tn");
  detail::require_rank(b, 2, "matmul_tn");
  if (a.extent(0) != b.extent(0)) {
    throw ShapeError("matmul_tn: inner extents differ, " + a.shape_str() + "^T x " + b.shape_str());
  }
  const size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
  Tensor c({m, n});
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const size_t grain = std::max<size_t>(1, 16384 / std::max<size_t>(1, k * n));
  parallel_for(m, grain, [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      double* crow = cp + i * n;
      for (size_t kk = 0; kk < k; ++kk) {
        const double av = ap[kk * m + i];
        const double* brow = bp + kk * n;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
  return c;
}

// grad(a) = upstream * b^T, grad(b) = a^T * upstream
inline std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b,
                                                 const Tensor& upstream) {
  if (upstream.rank() != 2 || upstream.extent(0) != a.extent(0) ||
      upstream.extent(1) != b.extent(1)) {
    throw ShapeError("matmul_backward: upstream " + upstream.shape_str() + " does not match " +
                     a.shape_str() + " x " + b.shape_str());
  }
  return {matmul_nt(upstream, b), matmul_tn(a, upstream)};
}

// ---- elementwise ops ------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

// Subgradient at exactly 0 is defined as 0.
inline Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
  if (!x.same_shape(upstream)) {
    throw ShapeError("relu_backward: upstream " + upstream.shape_str() + " vs input " +
                     x.shape_str());
  }
  Tensor g = upstream;
  for (size_t i = 0; i < g.size(); ++i) {
    if (x[i] <= 0.0) g[i] = 0.0;
  }
  return g;
}

// Row-wise softmax with max subtraction. Rows sum to 1 within 1e-12.
inline Tensor softmax(const Tensor& logits) {
  detail::require_rank(logits, 2, "softmax");
  const size_t b = logits.extent(0), c = logits.extent(1);
  Tensor p({b, c});
  for (size_t i = 0; i < b; ++i) {
    const double* row = logits.data() + i * c;
    double mx = row[0];
    for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    if (!std::isfinite(mx)) throw DomainError("softmax: non-finite logit in row " + std::to_string(i));
    double sum = 0.0;
    double* out = p.data() + i * c;
    for (size_t j = 0; j < c; ++j) {
      out[j] = std::exp(row[j] - mx);
      sum += out[j];
    }
    for (size_t j = 0; j < c; ++j) out[j] /= sum;
  }
  return p;
}

// ---- pooling --------------------------------------------------------------

inline std::pair<size_t, size_t> pooled_extents(size_t h, size_t w, size_t window, size_t stride,
                                                const char* op) {
  if (window == 0 || stride == 0) throw ShapeError(std::string(op) + ": window/stride must be positive");
  if (h < window || w < window) {
    throw ShapeError(std::string(op) + ": window " + std::to_string(window) + " exceeds input " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  if ((h - window) % stride != 0 || (w - window) % stride != 0) {
    throw ShapeError(std::string(op) + ": window " + std::to_string(window) + "/stride " +
                     std::to_string(stride) + " does not tile input " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  return {(h - window) / stride + 1, (w - window) / stride + 1};
}

inline Tensor maxpool2d(const Tensor& x, size_t window, size_t stride) {
  detail::require_rank(x, 4, "maxpool2d");
  const size_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const auto [oh, ow] = pooled_extents(h, w, window, stride, "maxpool2d");
  Tensor y({b, c, oh, ow});
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t ci = 0; ci < c; ++ci)
      for (size_t i = 0; i < oh; ++i)
        for (size_t j = 0; j < ow; ++j) {
          double best = x(bi, ci, i * stride, j * stride);
          for (size_t di = 0; di < window; ++di)
            for (size_t dj = 0; dj < window; ++dj)
              best = std::max(best, x(bi, ci, i * stride + di, j * stride + dj));
          y(bi, ci, i, j) = best;
        }
  return y;
}

// Routes each upstream value to the first maximum in its window (fixed tie break).
inline Tensor maxpool2d_backward(const Tensor& x, size_t window, size_t stride,
                                 const Tensor& upstream) {
  detail::require_rank(x, 4, "maxpool2d_backward");
  const size_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  const auto [oh, ow] = pooled_extents(h, w, window, stride, "maxpool2d_backward");
  if (upstream.rank() != 4 || upstream.extent(0) != b || upstream.extent(1) != c ||
      upstream.extent(2) != oh || upstream.extent(3) != ow) {
    throw ShapeError("maxpool2d_backward: upstream " + upstream.shape_str() + " vs expected [" +
                     std::to_string(b) + "x" + std::to_string(c) + "x" + std::to_string(oh) + "x" +
                     std::to_string(ow) + "]");
  }
  Tensor g({b, c, h, w});
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t ci = 0; ci < c; ++ci)
      for (size_t i = 0; i < oh; ++i)
        for (size_t j = 0; j < ow; ++j) {
          size_t ai = i * stride, aj = j * stride;
          double best = x(bi, ci, ai, aj);
          for (size_t di = 0; di < window; ++di)
            for (size_t dj = 0; dj < window; ++dj) {
              const double v = x(bi, ci, i * stride + di, j * stride + dj);
              if (v > best) {
                best = v;
                ai = i * stride + di;
                aj = j * stride + dj;
              }
            }
          g(bi, ci, ai, aj) += upstream(bi, ci, i, j);
        }
  return g;
}

// ---- convolution ----------------------------------------------------------

inline std::pair<size_t, size_t> conv_output_extents(const Tensor& input, const Tensor& kernel,
                                                     size_t stride, size_t padding) {
  detail::require_rank(input, 4, "conv2d");
  detail::require_rank(kernel, 4, "conv2d");
  if (input.extent(1) != kernel.extent(1)) {
    throw ShapeError("conv2d: channel mismatch, input " + input.shape_str() + " vs kernel " +
                     kernel.shape_str());
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const size_t h = input.extent(2), w = input.extent(3);
  const size_t kh = kernel.extent(2), kw = kernel.extent(3);
  const auto out_extent = [&](size_t in, size_t k) -> size_t {
    const size_t padded = in + 2 * padding;
    if (padded < k || (padded - k) % stride != 0) {
      throw ShapeError("conv2d: non-integer output extent for input " + input.shape_str() +
                       ", kernel " + kernel.shape_str() + ", stride " + std::to_string(stride) +
                       ", padding " + std::to_string(padding));
    }
    return (padded - k) / stride + 1;
  };
  return {out_extent(h, kh), out_extent(w, kw)};
}

// Patch matrix [B*OH*OW, C*KH*KW]; zero padding.
inline Tensor im2col(const Tensor& x, size_t kh, size_t kw, size_t stride, size_t padding,
                     size_t oh, size_t ow) {
  const size_t b = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  Tensor cols({b * oh * ow, c * kh * kw});
  double* out = cols.data();
  parallel_for(b, 1, [&](size_t lo, size_t hi) {
    for (size_t bi = lo; bi < hi; ++bi) {
      for (size_t i = 0; i < oh; ++i)
        for (size_t j = 0; j < ow; ++j) {
          double* row = out + ((bi * oh + i) * ow + j) * (c * kh * kw);
          for (size_t ci = 0; ci < c; ++ci)
            for (size_t di = 0; di < kh; ++di)
              for (size_t dj = 0; dj < kw; ++dj) {
                const ptrdiff_t yi = static_cast<ptrdiff_t>(i * stride + di) -
                                     static_cast<ptrdiff_t>(padding);
                const ptrdiff_t xj = static_cast<ptrdiff_t>(j * stride + dj) -
                                     static_cast<ptrdiff_t>(padding);
                double v = 0.0;
                if (yi >= 0 && yi < static_cast<ptrdiff_t>(h) && xj >= 0 &&
                    xj < static_cast<ptrdiff_t>(w)) {
                  v = x(bi, ci, static_cast<size_t>(yi), static_cast<size_t>(xj));
                }
                row[(ci * kh + di) * kw + dj] = v;
              }
        }
    }
  });
  return cols;
}

// Scatter-add of a patch-matrix gradient back onto the input grid.
inline Tensor col2im(const Tensor& cols, size_t b, size_t c, size_t h, size_t w, size_t kh,
                     size_t kw, size_t stride, size_t padding, size_t oh, size_t ow) {
  Tensor x({b, c, h, w});
  const double* in = cols.data();
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t i = 0; i < oh; ++i)
      for (size_t j = 0; j < ow; ++j) {
        const double* row = in + ((bi * oh + i) * ow + j) * (c * kh * kw);
        for (size_t ci = 0; ci < c; ++ci)
          for (size_t di = 0; di < kh; ++di)
            for (size_t dj = 0; dj < kw; ++dj) {
              const ptrdiff_t yi =
                  static_cast<ptrdiff_t>(i * stride + di) - static_cast<ptrdiff_t>(padding);
              const ptrdiff_t xj =
                  static_cast<ptrdiff_t>(j * stride + dj) - static_cast<ptrdiff_t>(padding);
              if (yi >= 0 && yi < static_cast<ptrdiff_t>(h) && xj >= 0 &&
                  xj < static_cast<ptrdiff_t>(w)) {
                x(bi, ci, static_cast<size_t>(yi), static_cast<size_t>(xj)) +=
                    row[(ci * kh + di) * kw + dj];
              }
            }
      }
  return x;
}

// Cross-correlation (no kernel flip): input [B,C,H,W], kernel [F,C,Kh,Kw].
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, size_t stride, size_t padding) {
  const auto [oh, ow] = conv_output_extents(input, kernel, stride, padding);
  const size_t b = input.extent(0), f = kernel.extent(0);
  const size_t kh = kernel.extent(2), kw = kernel.extent(3);
  const Tensor cols = im2col(input, kh, kw, stride, padding, oh, ow);
  const Tensor kmat = kernel.reshaped({f, kernel.extent(1) * kh * kw});
  const Tensor out_mat = matmul_nt(cols, kmat);  // [B*OH*OW, F]
  Tensor out({b, f, oh, ow});
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t i = 0; i < oh; ++i)
      for (size_t j = 0; j < ow; ++j) {
        const double* row = out_mat.data() + ((bi * oh + i) * ow + j) * f;
        for (size_t fi = 0; fi < f; ++fi) out(bi, fi, i, j) = row[fi];
      }
  return out;
}

// Gradients for conv2d. Returns {grad_input, grad_kernel}.
inline std::pair<Tensor, Tensor> conv2d_backward(const Tensor& input, const Tensor& kernel,
                                                 size_t stride, size_t padding,
                                                 const Tensor& upstream) {
  const auto [oh, ow] = conv_output_extents(input, kernel, stride, padding);
  const size_t b = input.extent(0), c = input.extent(1), h = input.extent(2), w = input.extent(3);
  const size_t f = kernel.extent(0), kh = kernel.extent(2), kw = kernel.extent(3);
  if (upstream.rank() != 4 || upstream.extent(0) != b || upstream.extent(1) != f ||
      upstream.extent(2) != oh || upstream.extent(3) != ow) {
    throw ShapeError("conv2d_backward: upstream " + upstream.shape_str() + " vs expected [" +
                     std::to_string(b) + "x" + std::to_string(f) + "x" + std::to_string(oh) + "x" +
                     std::to_string(ow) + "]");
  }
  Tensor up_mat({b * oh * ow, f});
  for (size_t bi = 0; bi < b; ++bi)
    for (size_t i = 0; i < oh; ++i)
      for (size_t j = 0; j < ow; ++j) {
        double* row = up_mat.data() + ((bi * oh + i) * ow + j) * f;
        for (size_t fi = 0; fi < f; ++fi) row[fi] = upstream(bi, fi, i, j);
      }
  const Tensor cols = im2col(input, kh, kw, stride, padding, oh, ow);
  const Tensor kmat = kernel.reshaped({f, c * kh * kw});
  Tensor gk = matmul_tn(up_mat, cols).reshaped({f, c, kh, kw});
  const Tensor gcols = matmul(up_mat, kmat);  // [B*OH*OW, C*KH*KW]
  Tensor gx = col2im(gcols, b, c, h, w, kh, kw, stride, padding, oh, ow);
  return {std::move(gx), std::move(gk)};
}

}  // namespace sbnlab
