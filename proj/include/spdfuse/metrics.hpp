#pragma once

// Fusion quality metrics (EN, MI, SD, SF, VIF, AG, Q^AB/F) and the
// modality-mixing diagnostics of a labelled point set (silhouette, inter/intra
// distance ratio, cross-modal nearest-neighbour ratio).
//
// EN, MI, SD, SF and AG work on the 8-bit quantization round(255·clamp(x, 0, 1)).

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "spdfuse/error.hpp"
#include "spdfuse/filter.hpp"

namespace spdfuse {

using QuantImage = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

inline QuantImage quantize8(const Image& img) {
  return img.unaryExpr([](double v) { return static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); });
}

namespace detail {

inline double entropy_of_counts(const std::vector<double>& counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c <= 0.0) continue;
    const double p = c / total;
    h -= p * std::log2(p);
  }
  return h;
}

inline std::vector<double> histogram(const QuantImage& q) {
  std::vector<double> hist(256, 0.0);
  for (Eigen::Index i = 0; i < q.size(); ++i) hist[static_cast<std::size_t>(q(i))] += 1.0;
  return hist;
}

inline std::vector<double> joint_histogram(const QuantImage& a, const QuantImage& b) {
  std::vector<double> hist(256 * 256, 0.0);
  for (Eigen::Index i = 0; i < a.size(); ++i) hist[static_cast<std::size_t>(a(i) * 256 + b(i))] += 1.0;
  return hist;
}

}  // namespace detail

/// Shannon entropy (bits) of the 256-bin histogram.
inline double en(const Image& img) {
  if (img.size() == 0) return 0.0;
  return detail::entropy_of_counts(detail::histogram(quantize8(img)), static_cast<double>(img.size()));
}

/// I(a; b) = H(a) + H(b) − H(a, b) from 256-bin marginals and the 256×256 joint histogram.
inline double mutual_information(const Image& a, const Image& b) {
  require_same_size(a, b, "mutual_information");
  if (a.size() == 0) return 0.0;
  const QuantImage qa = quantize8(a), qb = quantize8(b);
  const double n = static_cast<double>(a.size());
  const double mi = detail::entropy_of_counts(detail::histogram(qa), n) +
                    detail::entropy_of_counts(detail::histogram(qb), n) -
                    detail::entropy_of_counts(detail::joint_histogram(qa, qb), n);
  return std::max(mi, 0.0);
}

/// MI(f, ir) + MI(f, vi)
inline double mi(const Image& f, const Image& ir, const Image& vi) {
  return mutual_information(f, ir) + mutual_information(f, vi);
}

/// Population standard deviation on the 8-bit scale.
inline double sd(const Image& img) {
  if (img.size() == 0) return 0.0;
  const Eigen::ArrayXXd q = quantize8(img).cast<double>().array();
  return std::sqrt((q - q.mean()).square().mean());
}

/// √(RF² + CF²). RF accumulates differences between vertically adjacent
/// pixels, CF between horizontally adjacent ones; both are normalized by M·N.
inline double sf(const Image& img) {
  if (img.size() == 0) return 0.0;
  const QuantImage q = quantize8(img);
  double rf = 0.0, cf = 0.0;
  for (Eigen::Index y = 0; y < q.rows(); ++y)
    for (Eigen::Index x = 0; x < q.cols(); ++x) {
      if (y > 0) rf += std::pow(q(y, x) - q(y - 1, x), 2);
      if (x > 0) cf += std::pow(q(y, x) - q(y, x - 1), 2);
    }
  const double mn = static_cast<double>(q.size());
  return std::sqrt(rf / mn + cf / mn);
}

/// Mean of √((Δx² + Δy²) / 2) over forward differences.
inline double ag(const Image& img) {
  if (img.rows() < 2 || img.cols() < 2) return 0.0;
  const QuantImage q = quantize8(img);
  double acc = 0.0;
  for (Eigen::Index y = 0; y + 1 < q.rows(); ++y)
    for (Eigen::Index x = 0; x + 1 < q.cols(); ++x) {
      const double dx = q(y, x + 1) - q(y, x);
      const double dy = q(y + 1, x) - q(y, x);
      acc += std::sqrt((dx * dx + dy * dy) / 2.0);
    }
  return acc / static_cast<double>((q.rows() - 1) * (q.cols() - 1));
}

// ---------------------------------------------------------------------------
// VIF (pixel domain, 4 scales)
// ---------------------------------------------------------------------------

inline constexpr double kVifNoiseVar = 2.0;

/// Pixel-domain visual information fidelity of `dist` against `ref` on the
/// 8-bit intensity scale. Returns 0 when the reference carries no information.
inline double vif(const Image& dist, const Image& ref) {
  require_same_size(dist, ref, "vif");
  constexpr double eps = 1e-10;
  Image r = 255.0 * ref, d = 255.0 * dist;
  double num = 0.0, den = 0.0;
  for (int scale = 1; scale <= 4; ++scale) {
    const int n = (1 << (4 - scale + 1)) + 1;
    const Vector win = gaussian_kernel_1d(n, n / 5.0);
    if (scale > 1) {
      const Image rf = filter_valid_separable(r, win), df = filter_valid_separable(d, win);
      if (rf.size() == 0) break;
      r = Image((rf.rows() + 1) / 2, (rf.cols() + 1) / 2);
      d = Image(r.rows(), r.cols());
      for (Eigen::Index y = 0; y < r.rows(); ++y)
        for (Eigen::Index x = 0; x < r.cols(); ++x) {
          r(y, x) = rf(2 * y, 2 * x);
          d(y, x) = df(2 * y, 2 * x);
        }
    }
    const Image mu1 = filter_valid_separable(r, win);
    if (mu1.size() == 0) break;
    const Image mu2 = filter_valid_separable(d, win);
    const Image s11 = filter_valid_separable(r.cwiseProduct(r), win);
    const Image s22 = filter_valid_separable(d.cwiseProduct(d), win);
    const Image s12 = filter_valid_separable(r.cwiseProduct(d), win);
    for (Eigen::Index i = 0; i < mu1.size(); ++i) {
      double sigma1 = std::max(s11(i) - mu1(i) * mu1(i), 0.0);
      double sigma2 = std::max(s22(i) - mu2(i) * mu2(i), 0.0);
      const double sigma12 = s12(i) - mu1(i) * mu2(i);
      double g = sigma12 / (sigma1 + eps);
      double sv = sigma2 - g * sigma12;
      if (sigma1 < eps) {
        g = 0.0;
        sv = sigma2;
        sigma1 = 0.0;
      }
      if (sigma2 < eps) {
        g = 0.0;
        sv = 0.0;
      }
      if (g < 0.0) {
        sv = sigma2;
        g = 0.0;
      }
      sv = std::max(sv, eps);
      num += std::log10(1.0 + g * g * sigma1 / (sv + kVifNoiseVar));
      den += std::log10(1.0 + sigma1 / kVifNoiseVar);
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------
// Q^AB/F
// ---------------------------------------------------------------------------

struct QabfParams {
  double kg = -15.0, dg = 0.5;
  double ka = -22.0, da = 0.8;
  double l = 1.0;
};

namespace detail {

inline double qabf_sigmoid(double v, double k, double d) {
  // Scaled so that a perfect match (v = 1) maps to exactly 1.
  const double gamma = 1.0 + std::exp(k * (1.0 - d));
  return gamma / (1.0 + std::exp(k * (v - d)));
}

struct EdgeField {
  Image strength;
  Image angle;
};

inline EdgeField edge_field(const Image& img) {
  const SobelPair s = sobel_reflect(img);
  const Image& gx = s.gx;
  const Image& gy = s.gy;
  EdgeField e{Image(img.rows(), img.cols()), Image(img.rows(), img.cols())};
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    e.strength(i) = std::sqrt(gx(i) * gx(i) + gy(i) * gy(i));
    e.angle(i) = gx(i) == 0.0 ? (gy(i) == 0.0 ? 0.0 : std::numbers::pi / 2) : std::atan(gy(i) / gx(i));
  }
  return e;
}

inline double edge_preservation(const EdgeField& src, const EdgeField& fused, Eigen::Index i, const QabfParams& p) {
  const double ga = src.strength(i), gf = fused.strength(i);
  double g = 0.0;
  if (ga > 0.0 && gf > 0.0) g = ga > gf ? gf / ga : ga / gf;
  const double a = 1.0 - std::abs(src.angle(i) - fused.angle(i)) / (std::numbers::pi / 2);
  return qabf_sigmoid(g, p.kg, p.dg) * qabf_sigmoid(a, p.ka, p.da);
}

}  // namespace detail

/// Xydeas–Petrović edge-transfer score in [0, 1]; 0 when neither source has edges.
inline double qabf(const Image& f, const Image& ir, const Image& vi, const QabfParams& p = {}) {
  require_same_size(f, ir, "qabf");
  require_same_size(f, vi, "qabf");
  const auto ef = detail::edge_field(f), ea = detail::edge_field(ir), eb = detail::edge_field(vi);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double wa = std::pow(ea.strength(i), p.l), wb = std::pow(eb.strength(i), p.l);
    num += detail::edge_preservation(ea, ef, i, p) * wa + detail::edge_preservation(eb, ef, i, p) * wb;
    den += wa + wb;
  }
  return den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
}

struct MetricReport {
  double en = 0, mi = 0, sd = 0, sf = 0, vif = 0, ag = 0, qabf = 0;

  static constexpr std::array<const char*, 7> kNames{"en", "mi", "sd", "sf", "vif", "ag", "qabf"};

  std::array<double, 7> values() const { return {en, mi, sd, sf, vif, ag, qabf}; }
};

/// All seven metrics of a fused image against its two sources. VIF is the
/// mean of the per-source values.
inline MetricReport evaluate(const Image& f, const Image& ir, const Image& vi) {
  require_same_size(f, ir, "evaluate");
  require_same_size(f, vi, "evaluate");
  return {spdfuse::en(f), spdfuse::mi(f, ir, vi), spdfuse::sd(f), spdfuse::sf(f),
          0.5 * (spdfuse::vif(f, ir) + spdfuse::vif(f, vi)), spdfuse::ag(f), spdfuse::qabf(f, ir, vi)};
}

inline MetricReport mean_report(const std::vector<MetricReport>& reports) {
  MetricReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.en += r.en; m.mi += r.mi; m.sd += r.sd; m.sf += r.sf; m.vif += r.vif; m.ag += r.ag; m.qabf += r.qabf;
  }
  const double n = static_cast<double>(reports.size());
  m.en /= n; m.mi /= n; m.sd /= n; m.sf /= n; m.vif /= n; m.ag /= n; m.qabf /= n;
  return m;
}

// ---------------------------------------------------------------------------
// Point-set diagnostics
// ---------------------------------------------------------------------------

/// One point per row of `points`; labels[i] ∈ {1, 2} is its modality.
struct PointSet {
  Matrix points;
  std::vector<int> labels;

  Eigen::Index size() const { return points.rows(); }
};

inline constexpr int kDefaultNeighbors = 10;

namespace detail {

inline void require_point_set(const PointSet& ps) {
  if (static_cast<Eigen::Index>(ps.labels.size()) != ps.points.rows()) {
    throw Error(ErrorCode::DegenerateSet, "label count does not match point count");
  }
  std::array<int, 2> counts{0, 0};
  for (int l : ps.labels) {
    if (l != 1 && l != 2) throw Error(ErrorCode::DegenerateSet, "labels must be 1 or 2, got " + std::to_string(l));
    ++counts[static_cast<std::size_t>(l - 1)];
  }
  if (counts[0] < 2 || counts[1] < 2) {
    throw Error(ErrorCode::DegenerateSet, "each modality needs at least 2 points (have " + std::to_string(counts[0]) +
                                              " and " + std::to_string(counts[1]) + ")");
  }
}

inline Matrix pairwise_distances(const Matrix& pts) {
  const Eigen::Index n = pts.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (pts.row(i) - pts.row(j)).norm();
  return d;
}

}  // namespace detail

/// Mean over points of (b − a) / max(a, b), where a is the mean distance to the
/// other points of the same modality and b the mean distance to the other modality.
inline double silhouette(const PointSet& ps) {
  detail::require_point_set(ps);
  const Matrix d = detail::pairwise_distances(ps.points);
  const Eigen::Index n = ps.size();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double same = 0.0, other = 0.0;
    int n_same = 0, n_other = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (ps.labels[static_cast<std::size_t>(j)] == ps.labels[static_cast<std::size_t>(i)]) {
        same += d(i, j);
        ++n_same;
      } else {
        other += d(i, j);
        ++n_other;
      }
    }
    const double a = same / n_same, b = other / n_other;
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

/// Mean cross-modal pairwise distance over mean same-modality pairwise distance.
inline double imdr(const PointSet& ps) {
  detail::require_point_set(ps);
  const Matrix d = detail::pairwise_distances(ps.points);
  double inter = 0.0, intra = 0.0;
  double n_inter = 0.0, n_intra = 0.0;
  for (Eigen::Index i = 0; i < ps.size(); ++i)
    for (Eigen::Index j = i + 1; j < ps.size(); ++j) {
      if (ps.labels[static_cast<std::size_t>(i)] == ps.labels[static_cast<std::size_t>(j)]) {
        intra += d(i, j);
        n_intra += 1.0;
      } else {
        inter += d(i, j);
        n_inter += 1.0;
      }
    }
  intra /= n_intra;
  if (intra == 0.0) throw Error(ErrorCode::ZeroIntra, "mean intra-modal distance is zero");
  return (inter / n_inter) / intra;
}

/// Mean fraction of each point's k nearest neighbours (self excluded, distance
/// ties broken by lower index) that carry the other label.
inline double cm_nnr(const PointSet& ps, int k = kDefaultNeighbors) {
  detail::require_point_set(ps);
  const Eigen::Index n = ps.size();
  if (k < 1 || k >= n) {
    throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " must be in [1, " + std::to_string(n - 1) + "]");
  }
  const Matrix d = detail::pairwise_distances(ps.points);
  double total = 0.0;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < n; ++i) {
    idx.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) idx.push_back(j);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      return d(i, a) < d(i, b) || (d(i, a) == d(i, b) && a < b);
    });
    int cross = 0;
    for (int m = 0; m < k; ++m)
      if (ps.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(m)])] != ps.labels[static_cast<std::size_t>(i)]) ++cross;
    total += static_cast<double>(cross) / k;
  }
  return total / static_cast<double>(n);
}

}  // namespace spdfuse
