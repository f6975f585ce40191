#pragma once

// SPD-manifold building blocks: covariance construction and regularization,
// the BiMap / ReEig / LogEig layers with their backward passes, Riemannian SGD
// on the Stiefel manifold, and the stacked SPD network.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spdfuse/error.hpp"
#include "spdfuse/linalg.hpp"

namespace spdfuse {

using Rng = std::mt19937_64;

inline constexpr double kDefaultCovEps = 1e-3;
inline constexpr double kDefaultAbsFloor = 1e-8;
inline constexpr double kDefaultReEigEps = 1e-3;
inline constexpr double kRetractionMinSingular = 1e-12;

/// Symmetric positive definite matrix. Construction checks symmetry; the
/// positive-definiteness check runs only in debug builds (see is_spd()).
class SpdMatrix {
 public:
  SpdMatrix() = default;

  explicit SpdMatrix(Matrix m) : data_(std::move(m)) {
    require_square(data_, "SpdMatrix");
    require_finite(data_, "SpdMatrix");
    if (!is_symmetric(data_)) {
      throw Error(ErrorCode::NotSymmetric, "SpdMatrix symmetry defect " + std::to_string(symmetry_defect(data_)));
    }
#ifndef NDEBUG
    if (eig_sym(data_).values.minCoeff() <= 0.0) {
      throw Error(ErrorCode::NonPositiveEigenvalue, "SpdMatrix is not positive definite");
    }
#endif
  }

  const Matrix& matrix() const noexcept { return data_; }
  Eigen::Index dim() const noexcept { return data_.rows(); }

 private:
  Matrix data_;
};

inline bool is_spd(const Matrix& m) {
  return m.rows() == m.cols() && m.allFinite() && is_symmetric(m) && eig_sym(m).values.minCoeff() > 0.0;
}

/// Square orthogonal BiMap weight, a point on the Stiefel manifold.
struct StiefelParam {
  Matrix w;

  Eigen::Index dim() const noexcept { return w.rows(); }
  double defect() const { return orthogonality_defect(w); }

  static StiefelParam identity(Eigen::Index dim) { return {Matrix::Identity(dim, dim)}; }

  /// Q factor of a seeded Gaussian matrix, columns signed so diag(R) > 0.
  static StiefelParam random(Eigen::Index dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(dim, dim);
    for (Eigen::Index j = 0; j < dim; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < dim; ++j)
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return {q};
  }
};

// ---------------------------------------------------------------------------
// Covariance
// ---------------------------------------------------------------------------

/// Sample covariance between the rows of `rows` (rows are variables, columns
/// are observations), normalized by n − 1.
inline Matrix covariance(const Matrix& rows) {
  if (rows.cols() < 2) {
    throw Error(ErrorCode::TooFewColumns, "covariance needs at least 2 columns, got " + std::to_string(rows.cols()));
  }
  require_finite(rows, "covariance input");
  const Matrix centered = rows.colwise() - rows.rowwise().mean();
  return sym(centered * centered.transpose() / static_cast<double>(rows.cols() - 1));
}

/// Q = U (S + eps·tr(S)·I) Uᵀ. For a symmetric input the SVD is the
/// eigendecomposition with S = |λ| and V = U, which keeps Q symmetric even
/// when the input is rank deficient. When eps·tr(S) would fall below
/// `abs_floor` the shift is abs_floor instead.
inline SpdMatrix regularize_spd(const Matrix& m, double eps = kDefaultCovEps, double abs_floor = kDefaultAbsFloor) {
  require_square(m, "regularize_spd input");
  require_finite(m, "regularize_spd input");
  if (!(eps > 0.0) || !(abs_floor > 0.0)) {
    throw Error(ErrorCode::NonFiniteInput, "regularize_spd needs eps > 0 and abs_floor > 0");
  }
  const EigPair eig = eig_sym(m);
  const Vector s = eig.values.cwiseAbs();
  const double trace = s.sum();
  const double shift = trace > abs_floor / eps ? eps * trace : abs_floor;
  const Vector shifted = s.array() + shift;
  return SpdMatrix(sym(eig.vectors * shifted.asDiagonal() * eig.vectors.transpose()));
}

/// How the composite covariance is assembled from the two patch matrices.
enum class CovStrategy {
  Cross,     // covariance of the stacked [M_ir; M_vi]
  SingleIr,  // block-diag(C_ir, C_ir): infrared statistics only
  SingleVi,  // block-diag(C_vi, C_vi): visible statistics only
};

inline std::string to_string(CovStrategy s) {
  switch (s) {
    case CovStrategy::Cross: return "cross";
    case CovStrategy::SingleIr: return "single_ir";
    case CovStrategy::SingleVi: return "single_vi";
  }
  return "cross";
}

inline CovStrategy parse_cov_strategy(const std::string& s) {
  if (s == "cross") return CovStrategy::Cross;
  if (s == "single_ir") return CovStrategy::SingleIr;
  if (s == "single_vi") return CovStrategy::SingleVi;
  throw Error(ErrorCode::ConfigError, "unknown covariance strategy '" + s + "' (cross|single_ir|single_vi)");
}

struct CompositeCovariance {
  Eigen::Index n_ir = 0;
  Eigen::Index n_vi = 0;
  Matrix raw;      // before regularization
  SpdMatrix spd;   // after regularization

  Matrix q_irir() const { return raw.topLeftCorner(n_ir, n_ir); }
  Matrix q_irvi() const { return raw.topRightCorner(n_ir, n_vi); }
  Matrix q_viir() const { return raw.bottomLeftCorner(n_vi, n_ir); }
  Matrix q_vivi() const { return raw.bottomRightCorner(n_vi, n_vi); }
};

inline CompositeCovariance composite_covariance(const Matrix& m_ir, const Matrix& m_vi, double eps = kDefaultCovEps,
                                                CovStrategy strategy = CovStrategy::Cross,
                                                double abs_floor = kDefaultAbsFloor) {
  if (m_ir.cols() != m_vi.cols()) {
    throw Error(ErrorCode::ColumnMismatch, "patch matrices have " + std::to_string(m_ir.cols()) + " and " +
                                               std::to_string(m_vi.cols()) + " columns");
  }
  CompositeCovariance out;
  out.n_ir = m_ir.rows();
  out.n_vi = m_vi.rows();
  const Eigen::Index total = out.n_ir + out.n_vi;
  if (strategy == CovStrategy::Cross) {
    if (m_ir.cols() < 2) {
      throw Error(ErrorCode::TooFewColumns, "covariance needs at least 2 columns, got " + std::to_string(m_ir.cols()));
    }
    require_finite(m_ir, "covariance input");
    require_finite(m_vi, "covariance input");
    // Blockwise so that identical inputs give bitwise-identical blocks and
    // the assembled matrix is exactly symmetric.
    const Matrix a = m_ir.colwise() - m_ir.rowwise().mean();
    const Matrix b = m_vi.colwise() - m_vi.rowwise().mean();
    const double denom = static_cast<double>(m_ir.cols() - 1);
    auto block = [denom](const Matrix& x, const Matrix& y) -> Matrix {
      const Matrix xy = x * y.transpose() / denom;
      const Matrix yx = y * x.transpose() / denom;
      return 0.5 * (xy + yx.transpose());
    };
    const Matrix irvi = block(a, b);
    out.raw.resize(total, total);
    out.raw << block(a, a), irvi, irvi.transpose(), block(b, b);
  } else {
    const Matrix& source = strategy == CovStrategy::SingleIr ? m_ir : m_vi;
    if (m_ir.rows() != m_vi.rows()) {
      throw Error(ErrorCode::DimMismatch, "single-modal strategy needs equal patch counts");
    }
    const Matrix c = covariance(source);
    out.raw = Matrix::Zero(total, total);
    out.raw.topLeftCorner(out.n_ir, out.n_ir) = c;
    out.raw.bottomRightCorner(out.n_vi, out.n_vi) = c;
  }
  out.spd = regularize_spd(out.raw, eps, abs_floor);
  return out;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// W X Wᵀ
inline Matrix bimap_forward(const Matrix& x, const Matrix& w) {
  if (w.cols() != x.rows() || x.rows() != x.cols()) {
    throw Error(ErrorCode::DimMismatch, "bimap weight " + std::to_string(w.rows()) + "x" +
                                            std::to_string(w.cols()) + " vs input " + std::to_string(x.rows()));
  }
  return sym(w * x * w.transpose());
}

struct BiMapGrads {
  Matrix grad_x;
  Matrix grad_w;  // Euclidean; projected onto the tangent space by stiefel_step
};

inline BiMapGrads bimap_backward(const Matrix& x, const Matrix& w, const Matrix& upstream) {
  const Matrix g = sym(upstream);
  return {sym(w.transpose() * g * w), 2.0 * g * w * x};
}

inline Matrix reeig_forward(const EigPair& eig, double eps) {
  return apply_spectral(eig, [eps](double s) { return std::max(s, eps); });
}

inline Matrix reeig_forward(const Matrix& x, double eps) { return reeig_forward(eig_sym(x), eps); }

inline Matrix reeig_backward(const EigPair& eig, double eps, const Matrix& upstream) {
  return spectral_fn_backward(
      eig, [eps](double s) { return std::max(s, eps); }, [eps](double s) { return s > eps ? 1.0 : 0.0; },
      upstream);
}

inline Matrix logeig_forward(const EigPair& eig) {
  if (eig.values.minCoeff() <= 0.0) {
    throw Error(ErrorCode::NonPositiveEigenvalue,
                "logeig input min eigenvalue " + std::to_string(eig.values.minCoeff()));
  }
  return apply_spectral(eig, [](double s) { return std::log(s); });
}

inline Matrix logeig_forward(const Matrix& x) { return logeig_forward(eig_sym(x)); }

inline Matrix logeig_backward(const EigPair& eig, const Matrix& upstream) {
  return spectral_fn_backward(
      eig, [](double s) { return std::log(s); }, [](double s) { return 1.0 / s; }, upstream);
}

/// Inverse of logeig on symmetric input: U exp(Σ) Uᵀ.
inline Matrix expeig(const Matrix& s) {
  return apply_spectral(eig_sym(s), [](double v) { return std::exp(v); });
}

class BiMapLayer {
 public:
  BiMapLayer() = default;
  explicit BiMapLayer(StiefelParam w) : weight(std::move(w)) {}

  StiefelParam weight;

  Matrix forward(const Matrix& x) {
    Matrix out = bimap_forward(x, weight.w);
    cached_input_ = x;
    return out;
  }

  BiMapGrads backward(const Matrix& upstream) const {
    if (!cached_input_) throw Error(ErrorCode::MissingCache, "BiMap backward called before forward");
    return bimap_backward(*cached_input_, weight.w, upstream);
  }

  void clear_cache() { cached_input_.reset(); }

 private:
  std::optional<Matrix> cached_input_;
};

class ReEigLayer {
 public:
  explicit ReEigLayer(double eps = kDefaultReEigEps) : eps_(eps) {}

  double eps() const noexcept { return eps_; }

  Matrix forward(const Matrix& x) {
    EigPair eig = eig_sym(x);
    Matrix out = reeig_forward(eig, eps_);
    cached_eig_ = std::move(eig);
    return out;
  }

  Matrix backward(const Matrix& upstream) const {
    if (!cached_eig_) throw Error(ErrorCode::MissingCache, "ReEig backward called before forward");
    return reeig_backward(*cached_eig_, eps_, upstream);
  }

  void clear_cache() { cached_eig_.reset(); }

 private:
  double eps_;
  std::optional<EigPair> cached_eig_;
};

class LogEigLayer {
 public:
  Matrix forward(const Matrix& x) {
    EigPair eig = eig_sym(x);
    Matrix out = logeig_forward(eig);
    cached_eig_ = std::move(eig);
    return out;
  }

  Matrix backward(const Matrix& upstream) const {
    if (!cached_eig_) throw Error(ErrorCode::MissingCache, "LogEig backward called before forward");
    return logeig_backward(*cached_eig_, upstream);
  }

  void clear_cache() { cached_eig_.reset(); }

 private:
  std::optional<EigPair> cached_eig_;
};

// ---------------------------------------------------------------------------
// Riemannian SGD
// ---------------------------------------------------------------------------

/// Projects the Euclidean gradient onto the tangent space at W, takes a step
/// of size lr and retracts with the polar factor of the result.
inline StiefelParam stiefel_step(const StiefelParam& param, const Matrix& grad_euclidean, double lr) {
  const Matrix& w = param.w;
  if (grad_euclidean.rows() != w.rows() || grad_euclidean.cols() != w.cols()) {
    throw Error(ErrorCode::DimMismatch, "stiefel_step gradient shape does not match W");
  }
  require_finite(grad_euclidean, "stiefel_step gradient");
  const Matrix tangent = grad_euclidean - w * sym(w.transpose() * grad_euclidean);
  if ((tangent.array() == 0.0).all()) return param;
  const Matrix candidate = w - lr * tangent;
  const Svd dec = svd(candidate);
  if (dec.s.minCoeff() < kRetractionMinSingular) {
    throw Error(ErrorCode::RetractionFailure, "candidate is rank deficient, min singular value " +
                                                  std::to_string(dec.s.minCoeff()));
  }
  return {dec.u * dec.v.transpose()};
}

// ---------------------------------------------------------------------------
// SPD network
// ---------------------------------------------------------------------------

/// depth × (BiMap, ReEig) followed by LogEig. forward() caches what backward()
/// needs, so one instance must not be driven from two threads at once;
/// infer() is const and cache-free.
class SpdNet {
 public:
  SpdNet() = default;

  SpdNet(Eigen::Index dim, int depth, double reeig_eps, Rng& rng) : reeig_eps_(reeig_eps) {
    if (depth < 1) throw Error(ErrorCode::DimMismatch, "SpdNet depth must be >= 1");
    for (int k = 0; k < depth; ++k) {
      bimaps_.emplace_back(StiefelParam::random(dim, rng));
      reeigs_.emplace_back(reeig_eps);
    }
  }

  SpdNet(std::vector<StiefelParam> weights, double reeig_eps) : reeig_eps_(reeig_eps) {
    if (weights.empty()) throw Error(ErrorCode::DimMismatch, "SpdNet depth must be >= 1");
    const Eigen::Index dim = weights.front().w.rows();
    for (auto& w : weights) {
      if (w.w.rows() != w.w.cols() || w.w.rows() != dim) {
        throw Error(ErrorCode::DimMismatch, "SpdNet weights must be square with a common dimension");
      }
      bimaps_.emplace_back(std::move(w));
      reeigs_.emplace_back(reeig_eps);
    }
  }

  int depth() const noexcept { return static_cast<int>(bimaps_.size()); }
  Eigen::Index dim() const noexcept { return bimaps_.empty() ? 0 : bimaps_.front().weight.dim(); }
  double reeig_eps() const noexcept { return reeig_eps_; }

  const StiefelParam& weight(int k) const { return bimaps_.at(static_cast<std::size_t>(k)).weight; }
  StiefelParam& weight(int k) { return bimaps_.at(static_cast<std::size_t>(k)).weight; }

  double max_defect() const {
    double d = 0.0;
    for (const auto& b : bimaps_) d = std::max(d, b.weight.defect());
    return d;
  }

  Matrix forward(const SpdMatrix& x0) {
    check_input(x0.matrix());
    Matrix x = x0.matrix();
    for (std::size_t k = 0; k < bimaps_.size(); ++k) {
      x = bimaps_[k].forward(x);
      x = reeigs_[k].forward(x);
    }
    has_cache_ = true;
    return logeig_.forward(x);
  }

  Matrix infer(const SpdMatrix& x0) const {
    check_input(x0.matrix());
    Matrix x = x0.matrix();
    for (std::size_t k = 0; k < bimaps_.size(); ++k) {
      x = bimap_forward(x, bimaps_[k].weight.w);
      x = reeig_forward(x, reeig_eps_);
    }
    return logeig_forward(x);
  }

  /// Euclidean gradients for each BiMap weight, first layer first.
  std::vector<Matrix> backward(const Matrix& upstream) const {
    if (!has_cache_) throw Error(ErrorCode::MissingCache, "SpdNet backward called before forward");
    std::vector<Matrix> grads(bimaps_.size());
    Matrix g = logeig_.backward(upstream);
    for (std::size_t k = bimaps_.size(); k-- > 0;) {
      g = reeigs_[k].backward(g);
      BiMapGrads bg = bimaps_[k].backward(g);
      grads[k] = std::move(bg.grad_w);
      g = std::move(bg.grad_x);
    }
    return grads;
  }

  void clear_cache() {
    for (auto& b : bimaps_) b.clear_cache();
    for (auto& r : reeigs_) r.clear_cache();
    logeig_.clear_cache();
    has_cache_ = false;
  }

 private:
  void check_input(const Matrix& x) const {
    if (x.rows() != dim()) {
      throw Error(ErrorCode::DimMismatch,
                  "SpdNet expects dim " + std::to_string(dim()) + ", got " + std::to_string(x.rows()));
    }
  }

  double reeig_eps_ = kDefaultReEigEps;
  std::vector<BiMapLayer> bimaps_;
  std::vector<ReEigLayer> reeigs_;
  LogEigLayer logeig_;
  bool has_cache_ = false;
};

}  // namespace spdfuse
