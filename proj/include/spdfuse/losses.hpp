#pragma once

// Training losses on the fused image f, each returning its value and the
// gradient with respect to f:
//   intensity  mean |f − max(ir, vi)|
//   gradient   mean | |∇f| − max(|∇ir|, |∇vi|) |, ∇ = 3×3 Sobel
//   ssim       (1 − ssim(f, vi)) + (1 − ssim(f, ir))
//   covariance Σ_levels ‖Cov(φ(f)) − Cov(φ(ir))‖₁ over a fixed feature bank
// Kinks of |·| take subgradient 0.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "spdfuse/binio.hpp"
#include "spdfuse/error.hpp"
#include "spdfuse/filter.hpp"

namespace spdfuse {

struct LossValue {
  double value = 0.0;
  Image grad;
};

namespace detail {

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

inline LossValue loss_int(const Image& f, const Image& ir, const Image& vi) {
  require_same_size(f, ir, "loss_int");
  require_same_size(f, vi, "loss_int");
  const double hw = static_cast<double>(f.size());
  const Image diff = f - ir.cwiseMax(vi);
  return {diff.cwiseAbs().sum() / hw, diff.unaryExpr([](double d) { return detail::sign0(d); }) / hw};
}

/// √(Sx² + Sy²) with reflect boundary.
inline Image sobel_magnitude(const Image& img) {
  const SobelPair s = sobel_reflect(img);
  return (s.gx.array().square() + s.gy.array().square()).sqrt().matrix();
}

inline LossValue loss_grad(const Image& f, const Image& ir, const Image& vi) {
  require_same_size(f, ir, "loss_grad");
  require_same_size(f, vi, "loss_grad");
  const double hw = static_cast<double>(f.size());
  const SobelPair sob = sobel_reflect(f);
  const Image& sx = sob.gx;
  const Image& sy = sob.gy;
  const Image target = sobel_magnitude(ir).cwiseMax(sobel_magnitude(vi));

  double value = 0.0;
  Image gx(f.rows(), f.cols()), gy(f.rows(), f.cols());
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double mag = std::sqrt(sx(i) * sx(i) + sy(i) * sy(i));
    const double d = mag - target(i);
    value += std::abs(d);
    const double s = mag > 0.0 ? detail::sign0(d) / (hw * mag) : 0.0;
    gx(i) = s * sx(i);
    gy(i) = s * sy(i);
  }
  return {value / hw, correlate_reflect_adjoint(gx, sobel_x_kernel()) + correlate_reflect_adjoint(gy, sobel_y_kernel())};
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5) on the [0, 1]
/// range, with its gradient with respect to `x`.
inline LossValue ssim_with_grad(const Image& x, const Image& y) {
  require_same_size(x, y, "ssim");
  if (x.rows() < kSsimWindow || x.cols() < kSsimWindow) {
    throw Error(ErrorCode::TooSmall, "ssim needs images of at least 11x11, got " + std::to_string(x.rows()) + "x" +
                                         std::to_string(x.cols()));
  }
  const Vector k = gaussian_kernel_1d(kSsimWindow, kSsimSigma);
  const Image mx = filter_valid_separable(x, k);
  const Image my = filter_valid_separable(y, k);
  const Image exx = filter_valid_separable(x.cwiseProduct(x), k);
  const Image eyy = filter_valid_separable(y.cwiseProduct(y), k);
  const Image exy = filter_valid_separable(x.cwiseProduct(y), k);

  const double count = static_cast<double>(mx.size());
  Image d_mx(mx.rows(), mx.cols()), d_exx(mx.rows(), mx.cols()), d_exy(mx.rows(), mx.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < mx.size(); ++i) {
    const double a1 = 2.0 * mx(i) * my(i) + kSsimC1;
    const double a2 = 2.0 * (exy(i) - mx(i) * my(i)) + kSsimC2;
    const double b1 = mx(i) * mx(i) + my(i) * my(i) + kSsimC1;
    const double b2 = exx(i) - mx(i) * mx(i) + eyy(i) - my(i) * my(i) + kSsimC2;
    const double s = a1 * a2 / (b1 * b2);
    total += s;
    d_mx(i) = s * (2.0 * my(i) / a1 - 2.0 * my(i) / a2 - 2.0 * mx(i) / b1 + 2.0 * mx(i) / b2) / count;
    d_exx(i) = -s / b2 / count;
    d_exy(i) = 2.0 * s / a2 / count;
  }
  const Eigen::Index h = x.rows(), w = x.cols();
  Image grad = filter_valid_separable_adjoint(d_mx, k, h, w) +
               2.0 * x.cwiseProduct(filter_valid_separable_adjoint(d_exx, k, h, w)) +
               y.cwiseProduct(filter_valid_separable_adjoint(d_exy, k, h, w));
  return {total / count, std::move(grad)};
}

inline double ssim(const Image& x, const Image& y) { return ssim_with_grad(x, y).value; }

inline LossValue loss_ssim(const Image& f, const Image& ir, const Image& vi) {
  require_same_size(f, ir, "loss_ssim");
  require_same_size(f, vi, "loss_ssim");
  const LossValue s_vi = ssim_with_grad(f, vi);
  const LossValue s_ir = ssim_with_grad(f, ir);
  return {(1.0 - s_vi.value) + (1.0 - s_ir.value), -(s_vi.grad + s_ir.grad)};
}

// ---------------------------------------------------------------------------
// Covariance loss over a fixed feature bank
// ---------------------------------------------------------------------------

/// levels[l][c] is channel c at scale level l.
struct FeatureMaps {
  std::vector<std::vector<Image>> levels;
};

/// Fixed (never trained) filters applied at full resolution and after 2×
/// mean-pool downsampling.
struct FeatureBank {
  std::string name;
  std::vector<Matrix> filters;
  int levels = 2;

  /// Sobel-x, Sobel-y, Laplacian, 5×5 Gaussian (σ = 1).
  static FeatureBank standard() {
    return {"default", {sobel_x_kernel(), sobel_y_kernel(), laplacian_kernel(), gaussian_kernel_2d(5, 1.0)}, 2};
  }

  /// Sobel-x and Sobel-y only.
  static FeatureBank edges() { return {"edges", {sobel_x_kernel(), sobel_y_kernel()}, 2}; }

  static FeatureBank by_name(const std::string& name) {
    if (name == "default") return standard();
    if (name == "edges") return edges();
    throw Error(ErrorCode::ConfigError, "unknown feature_bank '" + name + "' (default|edges)");
  }

  FeatureMaps extract(const Image& img) const {
    FeatureMaps out;
    Image level = img;
    for (int l = 0; l < levels; ++l) {
      if (l > 0) level = downsample2(level);
      std::vector<Image> channels;
      channels.reserve(filters.size());
      for (const Matrix& k : filters) channels.push_back(correlate_reflect(level, k));
      out.levels.push_back(std::move(channels));
    }
    return out;
  }

  /// Pulls per-channel feature gradients back to the input image (h×w).
  Image adjoint(const FeatureMaps& grads, Eigen::Index h, Eigen::Index w) const {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes{{h, w}};
    for (int l = 1; l < levels; ++l) shapes.emplace_back(shapes.back().first / 2, shapes.back().second / 2);
    Image back = Image::Zero(shapes.back().first, shapes.back().second);
    for (int l = levels - 1; l >= 0; --l) {
      const auto [lh, lw] = shapes[static_cast<std::size_t>(l)];
      if (l < levels - 1) back = downsample2_adjoint(back, lh, lw);
      for (std::size_t c = 0; c < filters.size(); ++c) {
        back += correlate_reflect_adjoint(grads.levels[static_cast<std::size_t>(l)][c], filters[c]);
      }
    }
    return back;
  }
};

/// Channel × channel covariance with pixels as observations (n − 1 normalization).
inline Matrix feature_covariance(const std::vector<Image>& channels) {
  if (channels.empty()) return Matrix(0, 0);
  const Eigen::Index pixels = channels.front().size();
  if (pixels < 2) throw Error(ErrorCode::TooFewColumns, "feature covariance needs at least 2 pixels");
  Matrix obs(static_cast<Eigen::Index>(channels.size()), pixels);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c].size() != pixels) throw Error(ErrorCode::SizeMismatch, "feature channels differ in size");
    obs.row(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::RowVectorXd>(channels[c].data(), pixels);
  }
  const Matrix centered = obs.colwise() - obs.rowwise().mean();
  return sym(centered * centered.transpose() / static_cast<double>(pixels - 1));
}

struct FeatureLoss {
  double value = 0.0;
  FeatureMaps grad;  // with respect to the first argument's features
};

/// Σ_levels Σ_cd |Cov(f)_cd − Cov(ref)_cd| and its gradient with respect to
/// the feature maps of f. Works on any feature source, including maps loaded
/// from precomputed files.
inline FeatureLoss loss_cov_features(const FeatureMaps& f, const FeatureMaps& ref) {
  if (f.levels.size() != ref.levels.size()) throw Error(ErrorCode::SizeMismatch, "feature level counts differ");
  FeatureLoss out;
  out.grad.levels.resize(f.levels.size());
  for (std::size_t l = 0; l < f.levels.size(); ++l) {
    const auto& fc = f.levels[l];
    if (fc.size() != ref.levels[l].size()) throw Error(ErrorCode::SizeMismatch, "feature channel counts differ");
    const Matrix diff = feature_covariance(fc) - feature_covariance(ref.levels[l]);
    out.value += diff.cwiseAbs().sum();
    const Matrix sgn = diff.unaryExpr([](double d) { return detail::sign0(d); });
    const Matrix weight = sgn + sgn.transpose();

    const Eigen::Index pixels = fc.front().size();
    std::vector<Image> centered;
    for (const Image& ch : fc) centered.push_back(ch.array() - ch.mean());
    auto& gl = out.grad.levels[l];
    for (std::size_t c = 0; c < fc.size(); ++c) {
      Image g = Image::Zero(fc[c].rows(), fc[c].cols());
      for (std::size_t d = 0; d < fc.size(); ++d) {
        const double wcd = weight(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d));
        if (wcd != 0.0) g += wcd * centered[d];
      }
      gl.push_back(g / static_cast<double>(pixels - 1));
    }
  }
  return out;
}

namespace detail {

inline FeatureMaps add_features(FeatureMaps a, const FeatureMaps& b) {
  for (std::size_t l = 0; l < a.levels.size(); ++l)
    for (std::size_t c = 0; c < a.levels[l].size(); ++c) a.levels[l][c] += b.levels[l][c];
  return a;
}

}  // namespace detail

/// Covariance loss of f against ir through `bank`. With `symmetric` set, the
/// same term against vi is added.
inline LossValue loss_cov(const Image& f, const Image& ir, const FeatureBank& bank, bool symmetric = false,
                          const Image* vi = nullptr) {
  require_same_size(f, ir, "loss_cov");
  if (symmetric) {
    if (!vi) throw Error(ErrorCode::SizeMismatch, "symmetric loss_cov needs the visible image");
    require_same_size(f, *vi, "loss_cov");
  }
  const FeatureMaps ff = bank.extract(f);
  FeatureLoss fl = loss_cov_features(ff, bank.extract(ir));
  if (symmetric) {
    const FeatureLoss fv = loss_cov_features(ff, bank.extract(*vi));
    fl.value += fv.value;
    fl.grad = detail::add_features(std::move(fl.grad), fv.grad);
  }
  return {fl.value, bank.adjoint(fl.grad, f.rows(), f.cols())};
}

// ---------------------------------------------------------------------------
// Precomputed feature files: u32 level count, then per level u32 C, H, W,
// followed by every level's channels as row-major little-endian f64.
// ---------------------------------------------------------------------------

inline void write_feature_file(const FeatureMaps& fm, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  binio::write_u32(os, static_cast<std::uint32_t>(fm.levels.size()));
  for (const auto& level : fm.levels) {
    const Eigen::Index h = level.empty() ? 0 : level.front().rows();
    const Eigen::Index w = level.empty() ? 0 : level.front().cols();
    binio::write_u32(os, static_cast<std::uint32_t>(level.size()));
    binio::write_u32(os, static_cast<std::uint32_t>(h));
    binio::write_u32(os, static_cast<std::uint32_t>(w));
  }
  for (const auto& level : fm.levels)
    for (const Image& ch : level)
      for (Eigen::Index y = 0; y < ch.rows(); ++y)
        for (Eigen::Index x = 0; x < ch.cols(); ++x) binio::write_f64(os, ch(y, x));
  if (!os) throw Error(ErrorCode::IoError, "failed writing " + path);
}

inline FeatureMaps read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  const std::uint32_t levels = binio::read_u32(is, "level count");
  if (levels > 64) throw Error(ErrorCode::CorruptFile, "implausible level count " + std::to_string(levels));
  struct Shape { std::uint32_t c, h, w; };
  std::vector<Shape> shapes;
  for (std::uint32_t l = 0; l < levels; ++l) {
    Shape s{binio::read_u32(is, "channels"), binio::read_u32(is, "height"), binio::read_u32(is, "width")};
    if (static_cast<std::uint64_t>(s.c) * s.h * s.w > (1ull << 32)) {
      throw Error(ErrorCode::CorruptFile, "implausible feature level shape");
    }
    shapes.push_back(s);
  }
  FeatureMaps fm;
  for (const Shape& s : shapes) {
    std::vector<Image> level;
    for (std::uint32_t c = 0; c < s.c; ++c) {
      Image ch(s.h, s.w);
      for (std::uint32_t y = 0; y < s.h; ++y)
        for (std::uint32_t x = 0; x < s.w; ++x) ch(y, x) = binio::read_f64(is, "feature data");
      level.push_back(std::move(ch));
    }
    fm.levels.push_back(std::move(level));
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Weighted total
// ---------------------------------------------------------------------------

struct LossWeights {
  double alpha = 1.0;   // gradient term
  double beta = 10.0;   // ssim term
  double gamma = 20.0;  // covariance term
};

struct LossReport {
  double l_int = 0.0;
  double l_grad = 0.0;
  double l_ssim = 0.0;
  double l_cov = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  LossReport report;
  Image grad;
};

inline TotalLoss total_loss(const Image& f, const Image& ir, const Image& vi, const FeatureBank& bank,
                            const LossWeights& wts, bool symmetric_cov = false) {
  const LossValue li = loss_int(f, ir, vi);
  const LossValue lg = loss_grad(f, ir, vi);
  const LossValue ls = loss_ssim(f, ir, vi);
  const LossValue lc = loss_cov(f, ir, bank, symmetric_cov, &vi);
  TotalLoss out;
  out.report = {li.value, lg.value, ls.value, lc.value,
                li.value + wts.alpha * lg.value + wts.beta * ls.value + wts.gamma * lc.value};
  out.grad = li.grad + wts.alpha * lg.grad + wts.beta * ls.grad + wts.gamma * lc.grad;
  return out;
}

}  // namespace spdfuse
