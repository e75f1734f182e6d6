#pragma once

// Forward/backward kernels for the fixed layer vocabulary. All kernels take
// channels-first tensors and are templated on the scalar so the same code
// path serves 32-bit training and 64-bit gradient checking.

#include "talkhead/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <vector>

namespace talkhead::kernels {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T> using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T> using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Geometry of a (possibly rectangular-kernel) 2D convolution.
struct ConvGeometry {
  std::int64_t channels = 0, height = 0, width = 0;
  std::int64_t kernel_h = 1, kernel_w = 1;
  std::int64_t stride_h = 1, stride_w = 1;
  std::int64_t pad_h = 0, pad_w = 0;

  std::int64_t out_height() const { return (height + 2 * pad_h - kernel_h) / stride_h + 1; }
  std::int64_t out_width() const { return (width + 2 * pad_w - kernel_w) / stride_w + 1; }
  std::int64_t patch_size() const { return channels * kernel_h * kernel_w; }
};

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t kernel,
                                    std::int64_t stride, std::int64_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

inline std::int64_t tconv_out_extent(std::int64_t in, std::int64_t kernel,
                                     std::int64_t stride, std::int64_t pad,
                                     std::int64_t pad_out) {
  return (in - 1) * stride - 2 * pad + kernel + pad_out;
}

// Upper bound on im2col scratch (elements); large canvases are processed in
// bands of output rows.
inline constexpr std::int64_t kColumnBudget = std::int64_t{1} << 22;

inline std::int64_t rows_per_band(const ConvGeometry &g) {
  const std::int64_t per_row = g.patch_size() * g.out_width();
  return std::max<std::int64_t>(1, kColumnBudget / std::max<std::int64_t>(per_row, 1));
}

/// Gathers patches for output rows [row0, row1) into a patch_size × (rows·out_w) matrix.
template <typename T>
void im2col(const T *image, const ConvGeometry &g, std::int64_t row0, std::int64_t row1,
            T *columns) {
  const std::int64_t ow = g.out_width();
  const std::int64_t ncols = (row1 - row0) * ow;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T *plane = image + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        T *dst = columns + ((c * g.kernel_h + ky) * g.kernel_w + kx) * ncols;
        for (std::int64_t r = row0; r < row1; ++r) {
          const std::int64_t y = r * g.stride_h - g.pad_h + ky;
          T *out = dst + (r - row0) * ow;
          if (y < 0 || y >= g.height) {
            std::fill(out, out + ow, T{0});
            continue;
          }
          const T *src = plane + y * g.width;
          for (std::int64_t col = 0; col < ow; ++col) {
            const std::int64_t x = col * g.stride_w - g.pad_w + kx;
            out[col] = (x >= 0 && x < g.width) ? src[x] : T{0};
          }
        }
      }
    }
  }
}

/// Scatter-adds a patch matrix (as produced by im2col) back onto an image.
template <typename T>
void col2im_add(const T *columns, const ConvGeometry &g, std::int64_t row0,
                std::int64_t row1, T *image) {
  const std::int64_t ow = g.out_width();
  const std::int64_t ncols = (row1 - row0) * ow;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T *plane = image + c * g.height * g.width;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        const T *src = columns + ((c * g.kernel_h + ky) * g.kernel_w + kx) * ncols;
        for (std::int64_t r = row0; r < row1; ++r) {
          const std::int64_t y = r * g.stride_h - g.pad_h + ky;
          if (y < 0 || y >= g.height)
            continue;
          const T *in = src + (r - row0) * ow;
          T *dst = plane + y * g.width;
          for (std::int64_t col = 0; col < ow; ++col) {
            const std::int64_t x = col * g.stride_w - g.pad_w + kx;
            if (x >= 0 && x < g.width)
              dst[x] += in[col];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------- conv2d

/// y = W * x (+ b). weight is c_out × c_in × kh × kw, x is c_in × H × W.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T> &x, const BasicTensor<T> &weight,
                              const BasicTensor<T> *bias, const ConvGeometry &g,
                              std::int64_t c_out) {
  const std::int64_t oh = g.out_height(), ow = g.out_width();
  const std::int64_t k = g.patch_size();
  BasicTensor<T> y({c_out, oh, ow});
  ConstMatrixMap<T> w(weight.raw(), c_out, k);
  MatrixMap<T> out(y.raw(), c_out, oh * ow);
  const std::int64_t band = rows_per_band(g);
  AlignedVector<T> columns(static_cast<std::size_t>(k * std::min(band, oh) * ow));
  for (std::int64_t r0 = 0; r0 < oh; r0 += band) {
    const std::int64_t r1 = std::min(oh, r0 + band);
    const std::int64_t n = (r1 - r0) * ow;
    im2col(x.raw(), g, r0, r1, columns.data());
    ConstMatrixMap<T> col(columns.data(), k, n);
    out.middleCols(r0 * ow, n).noalias() = w * col;
  }
  if (bias) {
    for (std::int64_t c = 0; c < c_out; ++c)
      out.row(c).array() += (*bias)[static_cast<std::size_t>(c)];
  }
  return y;
}

/// Accumulates weight/bias gradients and (optionally) writes the input gradient.
template <typename T>
void conv2d_backward(const BasicTensor<T> &x, const BasicTensor<T> &weight,
                     const ConvGeometry &g, std::int64_t c_out, const BasicTensor<T> &dy,
                     BasicTensor<T> *dweight, BasicTensor<T> *dbias, BasicTensor<T> *dx) {
  const std::int64_t oh = g.out_height(), ow = g.out_width();
  const std::int64_t k = g.patch_size();
  ConstMatrixMap<T> w(weight.raw(), c_out, k);
  ConstMatrixMap<T> grad(dy.raw(), c_out, oh * ow);
  if (dbias) {
    for (std::int64_t c = 0; c < c_out; ++c)
      (*dbias)[static_cast<std::size_t>(c)] += grad.row(c).sum();
  }
  if (!dweight && !dx)
    return;
  const std::int64_t band = rows_per_band(g);
  AlignedVector<T> columns(static_cast<std::size_t>(k * std::min(band, oh) * ow));
  for (std::int64_t r0 = 0; r0 < oh; r0 += band) {
    const std::int64_t r1 = std::min(oh, r0 + band);
    const std::int64_t n = (r1 - r0) * ow;
    if (dweight) {
      im2col(x.raw(), g, r0, r1, columns.data());
      ConstMatrixMap<T> col(columns.data(), k, n);
      MatrixMap<T> dw(dweight->raw(), c_out, k);
      dw.noalias() += grad.middleCols(r0 * ow, n) * col.transpose();
    }
    if (dx) {
      MatrixMap<T> col(columns.data(), k, n);
      col.noalias() = w.transpose() * grad.middleCols(r0 * ow, n);
      col2im_add(columns.data(), g, r0, r1, dx->raw());
    }
  }
}

// --------------------------------------------------------------- tconv2d

/// Transposed convolution. weight is c_in × c_out × kh × kw. `g` describes the
/// equivalent forward convolution from the c_out × H_out × W_out output space
/// back onto the c_in × H × W input space.
template <typename T>
BasicTensor<T> tconv2d_forward(const BasicTensor<T> &x, const BasicTensor<T> &weight,
                               const BasicTensor<T> *bias, const ConvGeometry &g,
                               std::int64_t c_in) {
  const std::int64_t h = g.out_height(), w = g.out_width();
  const std::int64_t k = g.patch_size();
  BasicTensor<T> y({g.channels, g.height, g.width});
  ConstMatrixMap<T> wmat(weight.raw(), c_in, k);
  ConstMatrixMap<T> in(x.raw(), c_in, h * w);
  const std::int64_t band = rows_per_band(g);
  AlignedVector<T> columns(static_cast<std::size_t>(k * std::min(band, h) * w));
  for (std::int64_t r0 = 0; r0 < h; r0 += band) {
    const std::int64_t r1 = std::min(h, r0 + band);
    const std::int64_t n = (r1 - r0) * w;
    MatrixMap<T> col(columns.data(), k, n);
    col.noalias() = wmat.transpose() * in.middleCols(r0 * w, n);
    col2im_add(columns.data(), g, r0, r1, y.raw());
  }
  if (bias) {
    const std::int64_t plane = g.height * g.width;
    for (std::int64_t c = 0; c < g.channels; ++c)
      for (std::int64_t i = 0; i < plane; ++i)
        y[static_cast<std::size_t>(c * plane + i)] += (*bias)[static_cast<std::size_t>(c)];
  }
  return y;
}

template <typename T>
void tconv2d_backward(const BasicTensor<T> &x, const BasicTensor<T> &weight,
                      const ConvGeometry &g, std::int64_t c_in, const BasicTensor<T> &dy,
                      BasicTensor<T> *dweight, BasicTensor<T> *dbias, BasicTensor<T> *dx) {
  const std::int64_t h = g.out_height(), w = g.out_width();
  const std::int64_t k = g.patch_size();
  if (dbias) {
    const std::int64_t plane = g.height * g.width;
    for (std::int64_t c = 0; c < g.channels; ++c) {
      T acc{0};
      for (std::int64_t i = 0; i < plane; ++i)
        acc += dy[static_cast<std::size_t>(c * plane + i)];
      (*dbias)[static_cast<std::size_t>(c)] += acc;
    }
  }
  if (!dweight && !dx)
    return;
  ConstMatrixMap<T> wmat(weight.raw(), c_in, k);
  ConstMatrixMap<T> in(x.raw(), c_in, h * w);
  const std::int64_t band = rows_per_band(g);
  AlignedVector<T> columns(static_cast<std::size_t>(k * std::min(band, h) * w));
  for (std::int64_t r0 = 0; r0 < h; r0 += band) {
    const std::int64_t r1 = std::min(h, r0 + band);
    const std::int64_t n = (r1 - r0) * w;
    im2col(dy.raw(), g, r0, r1, columns.data());
    ConstMatrixMap<T> col(columns.data(), k, n);
    if (dx) {
      MatrixMap<T> out(dx->raw(), c_in, h * w);
      out.middleCols(r0 * w, n).noalias() = wmat * col;
    }
    if (dweight) {
      MatrixMap<T> dw(dweight->raw(), c_in, k);
      dw.noalias() += in.middleCols(r0 * w, n) * col.transpose();
    }
  }
}

// ---------------------------------------------------------------- linear

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T> &x, const BasicTensor<T> &weight,
                              const BasicTensor<T> *bias, std::int64_t n_out) {
  const std::int64_t n_in = static_cast<std::int64_t>(x.size());
  BasicTensor<T> y({n_out});
  ConstMatrixMap<T> w(weight.raw(), n_out, n_in);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> in(x.raw(), n_in);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> out(y.raw(), n_out);
  out.noalias() = w * in;
  if (bias)
    out += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias->raw(), n_out);
  return y;
}

template <typename T>
void linear_backward(const BasicTensor<T> &x, const BasicTensor<T> &weight,
                     const BasicTensor<T> &dy, BasicTensor<T> *dweight,
                     BasicTensor<T> *dbias, BasicTensor<T> *dx) {
  const std::int64_t n_in = static_cast<std::int64_t>(x.size());
  const std::int64_t n_out = static_cast<std::int64_t>(dy.size());
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Eigen::Map<const Vec> g(dy.raw(), n_out);
  Eigen::Map<const Vec> in(x.raw(), n_in);
  if (dweight) {
    MatrixMap<T> dw(dweight->raw(), n_out, n_in);
    dw.noalias() += g * in.transpose();
  }
  if (dbias) {
    Eigen::Map<Vec> db(dbias->raw(), n_out);
    db += g;
  }
  if (dx) {
    ConstMatrixMap<T> w(weight.raw(), n_out, n_in);
    Eigen::Map<Vec> out(dx->raw(), n_in);
    out.noalias() = w.transpose() * g;
  }
}

// --------------------------------------------------------- instance norm

inline constexpr double kInstanceNormEps = 1e-5;

/// Per-channel normalization over the spatial extent, followed by the affine
/// (gamma, beta). `normalized` and `inv_std` are saved for backward.
template <typename T>
BasicTensor<T> instance_norm_forward(const BasicTensor<T> &x, const BasicTensor<T> &gamma,
                                     const BasicTensor<T> &beta, BasicTensor<T> &normalized,
                                     std::vector<T> &inv_std) {
  const std::int64_t c = x.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(x.size()) / c;
  BasicTensor<T> y(x.shape());
  normalized = BasicTensor<T>(x.shape());
  inv_std.assign(static_cast<std::size_t>(c), T{0});
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const T *in = x.raw() + ch * plane;
    double mean = 0;
    for (std::int64_t i = 0; i < plane; ++i)
      mean += in[i];
    mean /= static_cast<double>(plane);
    double var = 0;
    for (std::int64_t i = 0; i < plane; ++i) {
      const double d = in[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    const T istd = static_cast<T>(1.0 / std::sqrt(var + kInstanceNormEps));
    inv_std[static_cast<std::size_t>(ch)] = istd;
    const T g = gamma[static_cast<std::size_t>(ch)], b = beta[static_cast<std::size_t>(ch)];
    T *xn = normalized.raw() + ch * plane;
    T *out = y.raw() + ch * plane;
    const T m = static_cast<T>(mean);
    for (std::int64_t i = 0; i < plane; ++i) {
      xn[i] = (in[i] - m) * istd;
      out[i] = g * xn[i] + b;
    }
  }
  return y;
}

template <typename T>
void instance_norm_backward(const BasicTensor<T> &normalized, const std::vector<T> &inv_std,
                            const BasicTensor<T> &gamma, const BasicTensor<T> &dy,
                            BasicTensor<T> *dgamma, BasicTensor<T> *dbeta,
                            BasicTensor<T> *dx) {
  const std::int64_t c = normalized.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(normalized.size()) / c;
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const T *xn = normalized.raw() + ch * plane;
    const T *g = dy.raw() + ch * plane;
    double sum_g = 0, sum_gx = 0;
    for (std::int64_t i = 0; i < plane; ++i) {
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * xn[i];
    }
    const auto idx = static_cast<std::size_t>(ch);
    if (dgamma)
      (*dgamma)[idx] += static_cast<T>(sum_gx);
    if (dbeta)
      (*dbeta)[idx] += static_cast<T>(sum_g);
    if (dx) {
      const double scale = static_cast<double>(gamma[idx]) * inv_std[idx];
      const double n = static_cast<double>(plane);
      T *out = dx->raw() + ch * plane;
      for (std::int64_t i = 0; i < plane; ++i)
        out[i] = static_cast<T>(scale * (g[i] - sum_g / n - xn[i] * sum_gx / n));
    }
  }
}

// ----------------------------------------------------------- activations

template <typename T> BasicTensor<T> leaky_relu_forward(const BasicTensor<T> &x, T slope) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = x[i] > T{0} ? x[i] : slope * x[i];
  return y;
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T> &x, T slope, const BasicTensor<T> &dy) {
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    dx[i] = x[i] > T{0} ? dy[i] : slope * dy[i];
  return dx;
}

template <typename T> BasicTensor<T> tanh_forward(const BasicTensor<T> &x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = std::tanh(x[i]);
  return y;
}

template <typename T>
BasicTensor<T> tanh_backward(const BasicTensor<T> &y, const BasicTensor<T> &dy) {
  BasicTensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    dx[i] = dy[i] * (T{1} - y[i] * y[i]);
  return dx;
}

// ------------------------------------------------------ bilinear resize

/// Half-pixel-center sampling: output pixel i samples input coordinate
/// (i + 0.5)·(in/out) − 0.5, clamped to [0, in − 1].
struct ResizeTap {
  std::int64_t lo = 0, hi = 0;
  double frac = 0;
};

inline std::vector<ResizeTap> resize_taps(std::int64_t in, std::int64_t out) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::int64_t hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

template <typename T>
BasicTensor<T> resize_bilinear_forward(const BasicTensor<T> &x, std::int64_t out_h,
                                       std::int64_t out_w) {
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == h && out_w == w)
    return x;
  BasicTensor<T> y({c, out_h, out_w});
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t i = 0; i < out_h; ++i) {
      const auto &a = ty[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < out_w; ++j) {
        const auto &b = tx[static_cast<std::size_t>(j)];
        const double top = x.at(ch, a.lo, b.lo) * (1 - b.frac) + x.at(ch, a.lo, b.hi) * b.frac;
        const double bot = x.at(ch, a.hi, b.lo) * (1 - b.frac) + x.at(ch, a.hi, b.hi) * b.frac;
        y.at(ch, i, j) = static_cast<T>(top * (1 - a.frac) + bot * a.frac);
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> resize_bilinear_backward(const Shape &in_shape, const BasicTensor<T> &dy) {
  const std::int64_t c = in_shape[0], h = in_shape[1], w = in_shape[2];
  const std::int64_t out_h = dy.dim(1), out_w = dy.dim(2);
  if (out_h == h && out_w == w)
    return dy;
  BasicTensor<T> dx(in_shape);
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t i = 0; i < out_h; ++i) {
      const auto &a = ty[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < out_w; ++j) {
        const auto &b = tx[static_cast<std::size_t>(j)];
        const double g = dy.at(ch, i, j);
        dx.at(ch, a.lo, b.lo) += static_cast<T>(g * (1 - a.frac) * (1 - b.frac));
        dx.at(ch, a.lo, b.hi) += static_cast<T>(g * (1 - a.frac) * b.frac);
        dx.at(ch, a.hi, b.lo) += static_cast<T>(g * a.frac * (1 - b.frac));
        dx.at(ch, a.hi, b.hi) += static_cast<T>(g * a.frac * b.frac);
      }
    }
  }
  return dx;
}

// ----------------------------------------------------------------- paste

inline void check_paste(const Shape &dst, const Shape &src, std::int64_t top,
                        std::int64_t left) {
  require(dst.size() == 3 && src.size() == 3, ErrorKind::shape, "paste expects C×H×W tensors");
  require(dst[0] == src[0], ErrorKind::shape,
          "paste channel mismatch: " + shape_string(src) + " into " + shape_string(dst));
  require(top >= 0 && left >= 0 && top + src[1] <= dst[1] && left + src[2] <= dst[2],
          ErrorKind::usage,
          "paste rect (" + std::to_string(top) + "," + std::to_string(left) + ") size " +
              std::to_string(src[1]) + "×" + std::to_string(src[2]) + " exceeds " +
              shape_string(dst));
}

template <typename T>
BasicTensor<T> paste_forward(const BasicTensor<T> &dst, const BasicTensor<T> &src,
                             std::int64_t top, std::int64_t left) {
  check_paste(dst.shape(), src.shape(), top, left);
  BasicTensor<T> y = dst;
  for (std::int64_t c = 0; c < src.dim(0); ++c)
    for (std::int64_t i = 0; i < src.dim(1); ++i)
      std::copy_n(&src.at(c, i, 0), src.dim(2), &y.at(c, top + i, left));
  return y;
}

template <typename T>
void paste_backward(const Shape &src_shape, std::int64_t top, std::int64_t left,
                    const BasicTensor<T> &dy, BasicTensor<T> &ddst, BasicTensor<T> &dsrc) {
  ddst = dy;
  dsrc = BasicTensor<T>(src_shape);
  for (std::int64_t c = 0; c < src_shape[0]; ++c)
    for (std::int64_t i = 0; i < src_shape[1]; ++i) {
      std::copy_n(&dy.at(c, top + i, left), src_shape[2], &dsrc.at(c, i, 0));
      std::fill_n(&ddst.at(c, top + i, left), src_shape[2], T{0});
    }
}

// ---------------------------------------------------------------- concat

template <typename T>
BasicTensor<T> concat_channels(const std::vector<const BasicTensor<T> *> &parts) {
  Shape shape = parts.front()->shape();
  shape[0] = 0;
  for (const auto *p : parts)
    shape[0] += p->dim(0);
  AlignedVector<T> data;
  data.reserve(static_cast<std::size_t>(shape_size(shape)));
  for (const auto *p : parts)
    data.insert(data.end(), p->storage().begin(), p->storage().end());
  return BasicTensor<T>::from_storage(std::move(shape), std::move(data));
}

} // namespace talkhead::kernels
