#pragma once

// Grayscale image type and the small set of 2-D filtering primitives shared by
// the losses and metrics, each paired with its adjoint where a gradient is needed.

#include <cmath>
#include <string>
#include <vector>

#include "spdfuse/error.hpp"
#include "spdfuse/linalg.hpp"

namespace spdfuse {

/// H×W grayscale intensities, nominally in [0, 1]. img(y, x).
using Image = Matrix;

inline void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::SizeMismatch, std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                             std::to_string(b.cols()));
  }
}

/// Mirror index without repeating the edge sample (…2 1 | 0 1 2 … n−1 | n−2 …).
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

inline Eigen::Index clamp_index(Eigen::Index i, Eigen::Index n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

/// Same-size correlation with a centered odd kernel and reflect boundary.
inline Image correlate_reflect(const Image& img, const Matrix& kernel) {
  const Eigen::Index h = img.rows(), w = img.cols();
  const Eigen::Index ry = kernel.rows() / 2, rx = kernel.cols() / 2;
  Image out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index ky = 0; ky < kernel.rows(); ++ky) {
        const Eigen::Index sy = reflect_index(y + ky - ry, h);
        for (Eigen::Index kx = 0; kx < kernel.cols(); ++kx) {
          acc += kernel(ky, kx) * img(sy, reflect_index(x + kx - rx, w));
        }
      }
      out(y, x) = acc;
    }
  }
  return out;
}

struct SobelPair {
  Image gx;
  Image gy;
};

/// 3×3 Sobel responses with reflect boundary, equal to correlate_reflect with
/// sobel_x_kernel / sobel_y_kernel. Each response is formed from differences
/// of mirrored taps, so a locally constant image gives exactly 0.
inline SobelPair sobel_reflect(const Image& img) {
  const Eigen::Index h = img.rows(), w = img.cols();
  SobelPair out{Image(h, w), Image(h, w)};
  for (Eigen::Index y = 0; y < h; ++y) {
    const Eigen::Index ym = reflect_index(y - 1, h), yp = reflect_index(y + 1, h);
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index xm = reflect_index(x - 1, w), xp = reflect_index(x + 1, w);
      out.gx(y, x) = (img(ym, xp) - img(ym, xm)) + 2.0 * (img(y, xp) - img(y, xm)) + (img(yp, xp) - img(yp, xm));
      out.gy(y, x) = (img(yp, xm) - img(ym, xm)) + 2.0 * (img(yp, x) - img(ym, x)) + (img(yp, xp) - img(ym, xp));
    }
  }
  return out;
}

/// Adjoint of correlate_reflect: scatters each output gradient back to the
/// source pixels it read.
inline Image correlate_reflect_adjoint(const Image& grad_out, const Matrix& kernel) {
  const Eigen::Index h = grad_out.rows(), w = grad_out.cols();
  const Eigen::Index ry = kernel.rows() / 2, rx = kernel.cols() / 2;
  Image grad = Image::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const double g = grad_out(y, x);
      if (g == 0.0) continue;
      for (Eigen::Index ky = 0; ky < kernel.rows(); ++ky) {
        const Eigen::Index sy = reflect_index(y + ky - ry, h);
        for (Eigen::Index kx = 0; kx < kernel.cols(); ++kx) {
          grad(sy, reflect_index(x + kx - rx, w)) += kernel(ky, kx) * g;
        }
      }
    }
  }
  return grad;
}

/// 'valid' correlation with the separable kernel k·kᵀ.
inline Image filter_valid_separable(const Image& img, const Vector& k) {
  const Eigen::Index n = k.size();
  const Eigen::Index h = img.rows() - n + 1, w = img.cols() - n + 1;
  if (h <= 0 || w <= 0) return Image(0, 0);
  Image tmp(h, img.cols());
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) acc += k(i) * img(y + i, x);
      tmp(y, x) = acc;
    }
  Image out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) acc += k(i) * tmp(y, x + i);
      out(y, x) = acc;
    }
  return out;
}

/// Adjoint of filter_valid_separable back onto an h×w image.
inline Image filter_valid_separable_adjoint(const Image& grad_out, const Vector& k, Eigen::Index h, Eigen::Index w) {
  const Eigen::Index n = k.size();
  Image tmp = Image::Zero(grad_out.rows(), w);
  for (Eigen::Index y = 0; y < grad_out.rows(); ++y)
    for (Eigen::Index x = 0; x < grad_out.cols(); ++x) {
      const double g = grad_out(y, x);
      for (Eigen::Index i = 0; i < n; ++i) tmp(y, x + i) += k(i) * g;
    }
  Image grad = Image::Zero(h, w);
  for (Eigen::Index y = 0; y < tmp.rows(); ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const double g = tmp(y, x);
      if (g == 0.0) continue;
      for (Eigen::Index i = 0; i < n; ++i) grad(y + i, x) += k(i) * g;
    }
  return grad;
}

/// Normalized 1-D Gaussian of odd length `size`.
inline Vector gaussian_kernel_1d(int size, double sigma) {
  Vector k(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) k(i) = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
  return k / k.sum();
}

inline Matrix gaussian_kernel_2d(int size, double sigma) {
  const Vector k = gaussian_kernel_1d(size, sigma);
  return k * k.transpose();
}

inline Matrix sobel_x_kernel() {
  Matrix k(3, 3);
  k << -1, 0, 1, -2, 0, 2, -1, 0, 1;
  return k;
}

inline Matrix sobel_y_kernel() { return sobel_x_kernel().transpose(); }

inline Matrix laplacian_kernel() {
  Matrix k(3, 3);
  k << 0, 1, 0, 1, -4, 1, 0, 1, 0;
  return k;
}

/// 2×2 mean pooling; a trailing odd row/column is dropped.
inline Image downsample2(const Image& img) {
  const Eigen::Index h = img.rows() / 2, w = img.cols() / 2;
  Image out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      out(y, x) = 0.25 * (img(2 * y, 2 * x) + img(2 * y + 1, 2 * x) + img(2 * y, 2 * x + 1) + img(2 * y + 1, 2 * x + 1));
  return out;
}

inline Image downsample2_adjoint(const Image& grad_out, Eigen::Index h, Eigen::Index w) {
  Image grad = Image::Zero(h, w);
  for (Eigen::Index y = 0; y < grad_out.rows(); ++y)
    for (Eigen::Index x = 0; x < grad_out.cols(); ++x) {
      const double g = 0.25 * grad_out(y, x);
      grad(2 * y, 2 * x) += g;
      grad(2 * y + 1, 2 * x) += g;
      grad(2 * y, 2 * x + 1) += g;
      grad(2 * y + 1, 2 * x + 1) += g;
    }
  return grad;
}

}  // namespace spdfuse
