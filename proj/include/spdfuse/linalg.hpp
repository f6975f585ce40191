#pragma once

// Dense symmetric linear algebra: eigendecomposition with canonical ordering
// and signs, SVD, and the Daleckii-Krein backward rule for spectral functions.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spdfuse/error.hpp"

namespace spdfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigenvalue gap below which the Loewner divided difference is replaced by
/// the derivative at the midpoint.
inline constexpr double kLoewnerTieGap = 1e-10;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, std::string(what) + " contains NaN or Inf");
  }
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + " must be a nonempty square matrix, got " +
                                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

/// max_ij |m_ij - m_ji|
inline double symmetry_defect(const Matrix& m) {
  if (m.rows() != m.cols()) return INFINITY;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-9) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return symmetry_defect(m) <= rel_tol * scale;
}

/// (m + mᵀ) / 2; exactly symmetric because floating-point addition commutes.
inline Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// ‖WᵀW − I‖_F
inline double orthogonality_defect(const Matrix& w) {
  return (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).norm();
}

struct EigPair {
  Vector values;   // descending
  Matrix vectors;  // columns are eigenvectors

  Eigen::Index dim() const { return values.size(); }

  /// U · diag(values) · Uᵀ
  Matrix reconstruct() const { return vectors * values.asDiagonal() * vectors.transpose(); }
};

namespace detail {

// Flip each column so its largest-magnitude entry (first one on ties) is positive.
inline void canonicalize_signs(Matrix& vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      const double a = std::abs(vectors(r, c));
      if (a > best_abs) {
        best_abs = a;
        best = r;
      }
    }
    if (vectors(best, c) < 0.0) vectors.col(c) = -vectors.col(c);
  }
}

}  // namespace detail

/// Symmetric eigendecomposition. Values come back sorted descending (stable
/// with respect to the solver's order on ties) and eigenvector signs are
/// canonicalized, so identical input gives identical output.
inline EigPair eig_sym(const Matrix& m) {
  require_square(m, "eig_sym input");
  require_finite(m, "eig_sym input");
  if (!is_symmetric(m)) {
    throw Error(ErrorCode::NotSymmetric,
                "eig_sym input symmetry defect " + std::to_string(symmetry_defect(m)));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::NonFiniteInput, "eigensolver failed to converge");
  }
  const Vector& asc = solver.eigenvalues();
  const Matrix& vec = solver.eigenvectors();
  const Eigen::Index d = asc.size();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return asc(a) > asc(b); });

  EigPair out{Vector(d), Matrix(d, d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    out.values(i) = asc(order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = vec.col(order[static_cast<std::size_t>(i)]);
  }
  detail::canonicalize_signs(out.vectors);
  return out;
}

struct Svd {
  Matrix u;
  Vector s;  // nonnegative, descending
  Matrix v;

  Matrix reconstruct() const { return u * s.asDiagonal() * v.transpose(); }
};

inline Svd svd(const Matrix& m) {
  require_finite(m, "svd input");
  if (m.size() == 0) throw Error(ErrorCode::DimMismatch, "svd of empty matrix");
  Eigen::BDCSVD<Matrix> solver(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return Svd{solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

/// U · diag(g(values)) · Uᵀ
template <class Fn>
Matrix apply_spectral(const EigPair& eig, Fn&& g) {
  Vector gv(eig.dim());
  for (Eigen::Index i = 0; i < eig.dim(); ++i) gv(i) = g(eig.values(i));
  return sym(eig.vectors * gv.asDiagonal() * eig.vectors.transpose());
}

/// Loewner (divided-difference) matrix of g over the eigenvalues.
template <class Fn, class Deriv>
Matrix loewner_matrix(const Vector& values, Fn&& g, Deriv&& gprime) {
  const Eigen::Index d = values.size();
  Matrix p(d, d);
  Vector gv(d);
  for (Eigen::Index i = 0; i < d; ++i) gv(i) = g(values(i));
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double gap = values(i) - values(j);
      if (std::abs(gap) > kLoewnerTieGap) {
        p(i, j) = (gv(i) - gv(j)) / gap;
      } else {
        p(i, j) = gprime(0.5 * (values(i) + values(j)));
      }
    }
  }
  return p;
}

/// Gradient of L with respect to X for F(X) = U g(Σ) Uᵀ, given dL/dF:
/// U · (P ∘ (Uᵀ sym(upstream) U)) · Uᵀ with P the Loewner matrix of g.
template <class Fn, class Deriv>
Matrix spectral_fn_backward(const EigPair& eig, Fn&& g, Deriv&& gprime, const Matrix& upstream) {
  if (upstream.rows() != eig.dim() || upstream.cols() != eig.dim()) {
    throw Error(ErrorCode::DimMismatch, "spectral_fn_backward upstream has wrong shape");
  }
  require_finite(upstream, "spectral_fn_backward upstream");
  const Matrix p = loewner_matrix(eig.values, g, gprime);
  if (!p.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "spectral function is not finite on the spectrum");
  }
  const Matrix& u = eig.vectors;
  const Matrix inner = p.cwiseProduct(u.transpose() * sym(upstream) * u);
  return sym(u * inner * u.transpose());
}

}  // namespace spdfuse
