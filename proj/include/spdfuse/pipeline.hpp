#pragma once

// End-to-end fusion: patches -> composite covariance -> SPD network ->
// attention weighting of the stacked patch rows -> fold -> conv decoder,
// plus the training step with its two optimizers.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "spdfuse/decoder.hpp"
#include "spdfuse/error.hpp"
#include "spdfuse/losses.hpp"
#include "spdfuse/patches.hpp"
#include "spdfuse/spd.hpp"

namespace spdfuse {

/// How the learned weight matrix multiplies the patch rows.
enum class SpdamMode {
  Stacked,      // F = X_k · [M_ir; M_vi]
  PerQuadrant,  // F_ir = X_k[ir,ir] · M_ir, F_vi = X_k[vi,vi] · M_vi
};

struct SpdamOutput {
  PatchMatrix f_ir;
  PatchMatrix f_vi;
};

inline SpdamOutput spdam_apply(const Matrix& xk, const PatchMatrix& m_ir, const PatchMatrix& m_vi,
                               SpdamMode mode = SpdamMode::Stacked) {
  const Eigen::Index n_ir = m_ir.rows.rows(), n_vi = m_vi.rows.rows();
  if (xk.rows() != n_ir + n_vi || xk.cols() != n_ir + n_vi || m_ir.rows.cols() != m_vi.rows.cols()) {
    throw Error(ErrorCode::DimMismatch, "spdam weight is " + std::to_string(xk.rows()) + "x" +
                                            std::to_string(xk.cols()) + " for " + std::to_string(n_ir) + "+" +
                                            std::to_string(n_vi) + " patch rows");
  }
  if (mode == SpdamMode::PerQuadrant) {
    return {{m_ir.geometry, xk.topLeftCorner(n_ir, n_ir) * m_ir.rows},
            {m_vi.geometry, xk.bottomRightCorner(n_vi, n_vi) * m_vi.rows}};
  }
  Matrix stacked(n_ir + n_vi, m_ir.rows.cols());
  stacked << m_ir.rows, m_vi.rows;
  const Matrix f = xk * stacked;
  return {{m_ir.geometry, f.topRows(n_ir)}, {m_vi.geometry, f.bottomRows(n_vi)}};
}

/// dL/dX_k given dL/dF_ir and dL/dF_vi.
inline Matrix spdam_backward(const Matrix& grad_f_ir, const Matrix& grad_f_vi, const PatchMatrix& m_ir,
                             const PatchMatrix& m_vi, SpdamMode mode = SpdamMode::Stacked) {
  const Eigen::Index n_ir = m_ir.rows.rows(), n_vi = m_vi.rows.rows();
  if (mode == SpdamMode::PerQuadrant) {
    Matrix g = Matrix::Zero(n_ir + n_vi, n_ir + n_vi);
    g.topLeftCorner(n_ir, n_ir) = grad_f_ir * m_ir.rows.transpose();
    g.bottomRightCorner(n_vi, n_vi) = grad_f_vi * m_vi.rows.transpose();
    return g;
  }
  Matrix stacked(n_ir + n_vi, m_ir.rows.cols());
  stacked << m_ir.rows, m_vi.rows;
  Matrix grad_f(n_ir + n_vi, grad_f_ir.cols());
  grad_f << grad_f_ir, grad_f_vi;
  return grad_f * stacked.transpose();
}

struct ModelConfig {
  PatchGeometry geometry = PatchGeometry{16, 8, 8, 64, 64};
  int depth = 1;
  double reeig_eps = kDefaultReEigEps;
  double cov_eps = kDefaultCovEps;
  CovStrategy strategy = CovStrategy::Cross;
  SpdamMode spdam = SpdamMode::Stacked;

  Eigen::Index spd_dim() const { return 2 * static_cast<Eigen::Index>(geometry.count()); }
};

struct TrainConfig {
  double lr_stiefel = 0.01;
  AdamConfig adam;  // lr_conv = adam.lr
  LossWeights weights;
  int epochs = 1;
  std::uint64_t seed = 0;
  std::string feature_bank = "default";
  bool symmetric_cov = false;
};

/// All learnable state plus optimizer state and training progress.
struct FusionModel {
  ModelConfig config;
  SpdNet spdnet;
  ConvDecoder decoder;
  AdamState adam;
  std::uint64_t epochs_done = 0;

  static FusionModel create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.geometry.validate();
    Rng rng(seed);
    FusionModel m;
    m.config = cfg;
    m.spdnet = SpdNet(cfg.spd_dim(), cfg.depth, cfg.reeig_eps, rng);
    m.decoder = ConvDecoder::random(rng);
    m.adam = AdamState::zeros_like(m.decoder);
    return m;
  }

  void validate() const {
    config.geometry.validate();
    if (spdnet.dim() != config.spd_dim()) {
      throw Error(ErrorCode::DimMismatch, "SPD network dim " + std::to_string(spdnet.dim()) + " does not match 2N = " +
                                              std::to_string(config.spd_dim()));
    }
  }
};

/// Every intermediate of one forward pass.
struct FusionTrace {
  PatchMatrix m_ir;
  PatchMatrix m_vi;
  CompositeCovariance cov;
  Matrix xk;  // learned weight matrix (LogEig output)
  SpdamOutput features;
  Image feat_ir;
  Image feat_vi;
  Image fused;
};

namespace detail {

inline void require_pair(const FusionModel& model, const Image& ir, const Image& vi) {
  require_same_size(ir, vi, "source images");
  require_geometry(ir, model.config.geometry);
  model.validate();
}

}  // namespace detail

/// Read-only forward pass; safe to call concurrently on a shared model.
inline FusionTrace fuse_trace(const FusionModel& model, const Image& ir, const Image& vi) {
  detail::require_pair(model, ir, vi);
  const ModelConfig& cfg = model.config;
  FusionTrace t;
  t.m_ir = extract_patches(ir, cfg.geometry);
  t.m_vi = extract_patches(vi, cfg.geometry);
  t.cov = composite_covariance(t.m_ir.rows, t.m_vi.rows, cfg.cov_eps, cfg.strategy);
  t.xk = model.spdnet.infer(t.cov.spd);
  t.features = spdam_apply(t.xk, t.m_ir, t.m_vi, cfg.spdam);
  t.feat_ir = fold_patches(t.features.f_ir);
  t.feat_vi = fold_patches(t.features.f_vi);
  t.fused = model.decoder.infer(t.feat_ir, t.feat_vi);
  return t;
}

inline Image fuse(const FusionModel& model, const Image& ir, const Image& vi) { return fuse_trace(model, ir, vi).fused; }

struct ModelGradients {
  LossReport loss;
  DecoderGrads decoder;
  std::vector<Matrix> stiefel;  // Euclidean, one per BiMap weight
};

namespace detail {

inline bool finite_grads(const ModelGradients& g) {
  for (const auto& k : g.decoder.kernels)
    if (!k.allFinite()) return false;
  for (const auto& b : g.decoder.biases)
    if (!b.allFinite()) return false;
  for (const auto& w : g.stiefel)
    if (!w.allFinite()) return false;
  return true;
}

}  // namespace detail

/// Forward with caches, all four losses and the full backward pass. Does not
/// modify any parameter.
inline ModelGradients compute_gradients(FusionModel& model, const Image& ir, const Image& vi, const TrainConfig& tc,
                                        const FeatureBank& bank) {
  detail::require_pair(model, ir, vi);
  const ModelConfig& cfg = model.config;
  const PatchMatrix m_ir = extract_patches(ir, cfg.geometry);
  const PatchMatrix m_vi = extract_patches(vi, cfg.geometry);
  const CompositeCovariance cov = composite_covariance(m_ir.rows, m_vi.rows, cfg.cov_eps, cfg.strategy);
  const Matrix xk = model.spdnet.forward(cov.spd);
  const SpdamOutput feats = spdam_apply(xk, m_ir, m_vi, cfg.spdam);
  const Image fused = model.decoder.forward(fold_patches(feats.f_ir), fold_patches(feats.f_vi));

  const TotalLoss loss = total_loss(fused, ir, vi, bank, tc.weights, tc.symmetric_cov);
  const LossReport& r = loss.report;
  if (!std::isfinite(r.total) || !loss.grad.allFinite()) {
    throw Error(ErrorCode::NonFiniteLoss, "loss is not finite (int " + std::to_string(r.l_int) + ", grad " +
                                              std::to_string(r.l_grad) + ", ssim " + std::to_string(r.l_ssim) +
                                              ", cov " + std::to_string(r.l_cov) + ")");
  }

  ModelGradients g;
  g.loss = r;
  g.decoder = model.decoder.backward(loss.grad);
  const Matrix d_ir = fold_patches_backward(cfg.geometry, g.decoder.grad_ir);
  const Matrix d_vi = fold_patches_backward(cfg.geometry, g.decoder.grad_vi);
  g.stiefel = model.spdnet.backward(spdam_backward(d_ir, d_vi, m_ir, m_vi, cfg.spdam));
  if (!detail::finite_grads(g)) throw Error(ErrorCode::NonFiniteLoss, "gradients are not finite");
  return g;
}

struct StepReport {
  LossReport loss;
  double stiefel_defect = 0.0;  // max over BiMap weights after the update
};

/// One optimization step on a single pair: Adam on the decoder, Riemannian
/// SGD on every BiMap weight. A non-finite loss throws before any update.
inline StepReport train_step(FusionModel& model, const Image& ir, const Image& vi, const TrainConfig& tc,
                             const FeatureBank& bank) {
  ModelGradients g = compute_gradients(model, ir, vi, tc, bank);
  std::vector<StiefelParam> updated;
  updated.reserve(g.stiefel.size());
  for (int k = 0; k < model.spdnet.depth(); ++k) {
    updated.push_back(stiefel_step(model.spdnet.weight(k), g.stiefel[static_cast<std::size_t>(k)], tc.lr_stiefel));
  }
  adam_step(model.decoder, model.adam, g.decoder, tc.adam);
  for (int k = 0; k < model.spdnet.depth(); ++k) model.spdnet.weight(k) = std::move(updated[static_cast<std::size_t>(k)]);
  model.spdnet.clear_cache();
  model.decoder.clear_cache();
  return {g.loss, model.spdnet.max_defect()};
}

inline StepReport train_step(FusionModel& model, const Image& ir, const Image& vi, const TrainConfig& tc) {
  return train_step(model, ir, vi, tc, FeatureBank::by_name(tc.feature_bank));
}

}  // namespace spdfuse
