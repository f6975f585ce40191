#pragma once

// Seeded fixtures and finite-difference oracles shared by the unit and
// acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

#include "spdfuse/filter.hpp"
#include "spdfuse/image_io.hpp"
#include "spdfuse/linalg.hpp"
#include "spdfuse/spd.hpp"

namespace spdfuse::testing {

struct SourcePair {
  Image ir;
  Image vi;
};

/// Infrared: dark background, a warm blob and a hot rectangle. Visible: a
/// textured gradient with a dark rectangle elsewhere. Coordinates scale with n.
inline SourcePair synthetic_pair(int n = 64, std::uint64_t seed = 7) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  const double s = n / 64.0;
  SourcePair p{Image(n, n), Image(n, n)};
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dy = y - 20.0 * s, dx = x - 40.0 * s;
      const double blob = std::exp(-(dy * dy + dx * dx) / (2.0 * 36.0 * s * s));
      const bool hot = y > 40 * s && y < 52 * s && x > 8 * s && x < 24 * s;
      p.ir(y, x) = std::clamp(0.15 + 0.75 * blob + (hot ? 0.5 : 0.0) + noise(rng), 0.0, 1.0);
      const bool dark = x > 30 * s && x < 50 * s && y > 36 * s && y < 56 * s;
      p.vi(y, x) = std::clamp(0.45 + 0.25 * std::sin(x * 0.6 / s) * std::cos(y * 0.25 / s) + 0.2 * (y / double(n)) -
                                  (dark ? 0.3 : 0.0) + noise(rng),
                              0.0, 1.0);
    }
  return p;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

inline Image random_image(Eigen::Index h, Eigen::Index w, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) img(y, x) = u(rng);
  return img;
}

inline Matrix random_symmetric(Eigen::Index d, Rng& rng) { return sym(random_matrix(d, d, rng)); }

/// Q diag(values) Qᵀ with Q random orthogonal.
inline Matrix spd_with_spectrum(const Vector& values, Rng& rng) {
  const Matrix q = StiefelParam::random(values.size(), rng).w;
  return sym(q * values.asDiagonal() * q.transpose());
}

/// SPD matrix whose eigenvalues are lo, lo + gap, ... jittered by less than
/// gap / 4, so adjacent gaps stay above gap / 2.
inline Matrix random_spd(Eigen::Index d, Rng& rng, double lo = 0.5, double gap = 0.3) {
  std::uniform_real_distribution<double> jitter(-0.25 * gap, 0.25 * gap);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = lo + gap * static_cast<double>(i) + jitter(rng);
  return spd_with_spectrum(v, rng);
}

/// ‖a − b‖_F / max(‖a‖_F, ‖b‖_F, floor)
inline double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-12) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central-difference gradient of f over every entry of x.
inline Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix xp = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      xp(i, j) = x(i, j) + h;
      const double fp = f(xp);
      xp(i, j) = x(i, j) - h;
      const double fm = f(xp);
      xp(i, j) = x(i, j);
      g(i, j) = (fp - fm) / (2.0 * h);
    }
  return g;
}

/// Central-difference gradient of f over symmetric matrices: each off-diagonal
/// pair is perturbed together, and the result is the symmetric matrix whose
/// inner product with any symmetric direction gives the directional derivative.
inline Matrix fd_gradient_sym(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5) {
  const Eigen::Index d = x.rows();
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) {
      Matrix e = Matrix::Zero(d, d);
      e(i, j) = 1.0;
      e(j, i) = 1.0;
      const double dd = (f(x + h * e) - f(x - h * e)) / (2.0 * h);
      g(i, j) = g(j, i) = i == j ? dd : 0.5 * dd;
    }
  return g;
}

/// Central-difference gradient of a scalar function of an image.
inline Image fd_gradient_image(const std::function<double(const Image&)>& f, const Image& x, double h = 1e-6) {
  return fd_gradient(f, x, h);
}

/// ⟨a, b⟩_F
inline double frob(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("spdfuse_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Writes `count` synthetic pairs (stems pair00, pair01, ...) as PGM into
/// dir/ir and dir/vi.
inline void write_synthetic_dataset(const std::filesystem::path& dir, int count, int n = 64, std::uint64_t seed = 7) {
  std::filesystem::create_directories(dir / "ir");
  std::filesystem::create_directories(dir / "vi");
  for (int i = 0; i < count; ++i) {
    const SourcePair p = synthetic_pair(n, seed + static_cast<std::uint64_t>(i));
    char stem[16];
    std::snprintf(stem, sizeof(stem), "pair%02d", i);
    save_image(p.ir, (dir / "ir" / (std::string(stem) + ".pgm")).string());
    save_image(p.vi, (dir / "vi" / (std::string(stem) + ".pgm")).string());
  }
}

}  // namespace spdfuse::testing
