#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "spdfuse/metrics.hpp"
#include "test_support.hpp"

using namespace spdfuse;
using namespace spdfuse::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an spdfuse::Error";
  return ErrorCode::ConfigError;
}

// Image whose 8-bit quantization is exactly `levels`.
Image from_levels(const Eigen::MatrixXi& levels) { return levels.cast<double>() / 255.0; }

// Direct double sum Σ p(a,b) log2(p(a,b) / (p(a) p(b))).
double brute_mi(const Image& a, const Image& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  const QuantImage qa = quantize8(a), qb = quantize8(b);
  const double n = static_cast<double>(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    joint[{qa(i), qb(i)}] += 1 / n;
    pa[qa(i)] += 1 / n;
    pb[qb(i)] += 1 / n;
  }
  double mi = 0;
  for (const auto& [k, p] : joint) mi += p * std::log2(p / (pa[k.first] * pb[k.second]));
  return mi;
}

PointSet make_set(const std::vector<std::vector<double>>& pts, const std::vector<int>& labels) {
  PointSet ps;
  ps.points.resize(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(pts.front().size()));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts[i].size(); ++j) ps.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pts[i][j];
  ps.labels = labels;
  return ps;
}

PointSet gaussian_set(int per_label, double offset, Rng& rng, int dim = 3) {
  PointSet ps;
  ps.points = random_matrix(2 * per_label, dim, rng);
  ps.points.bottomRows(per_label).array() += offset;
  for (int i = 0; i < 2 * per_label; ++i) ps.labels.push_back(i < per_label ? 1 : 2);
  return ps;
}

// Brute-force cm_nnr: full sort of (distance, index) keys per point.
double brute_cm_nnr(const PointSet& ps, int k) {
  const Eigen::Index n = ps.size();
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Eigen::Index>> keys;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) keys.emplace_back((ps.points.row(i) - ps.points.row(j)).norm(), j);
    std::sort(keys.begin(), keys.end());
    int cross = 0;
    for (int m = 0; m < k; ++m) cross += ps.labels[static_cast<std::size_t>(keys[static_cast<std::size_t>(m)].second)] != ps.labels[static_cast<std::size_t>(i)];
    total += cross / double(k);
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST(Entropy, HandCases) {
  EXPECT_EQ(en(Image::Constant(8, 8, 0.4)), 0.0);
  Eigen::MatrixXi half(4, 4);
  half << 0, 0, 255, 255, 0, 0, 255, 255, 0, 0, 255, 255, 0, 0, 255, 255;
  EXPECT_DOUBLE_EQ(en(from_levels(half)), 1.0);
  Eigen::MatrixXi ramp(16, 16);
  for (int i = 0; i < 256; ++i) ramp(i / 16, i % 16) = i;
  EXPECT_NEAR(en(from_levels(ramp)), 8.0, 1e-12);
}

TEST(MutualInformation, IdentityIndependenceAndBruteForce) {
  Rng rng(1);
  const Image x = random_image(32, 32, rng);
  EXPECT_NEAR(mi(x, x, x), 2.0 * en(x), 1e-10);
  const Image c = Image::Constant(32, 32, 0.5);
  EXPECT_NEAR(mi(x, c, c), 0.0, 1e-12);
  const Image y = (0.5 * x + 0.5 * random_image(32, 32, rng)).eval();
  EXPECT_NEAR(mutual_information(x, y), brute_mi(x, y), 1e-10);
  EXPECT_NEAR(mi(x, y, c), brute_mi(x, y), 1e-10);
}

TEST(SpatialStats, ConstantAndStepEdge) {
  const Image c = Image::Constant(9, 7, 0.3);
  EXPECT_EQ(sd(c), 0.0);
  EXPECT_EQ(sf(c), 0.0);
  EXPECT_EQ(ag(c), 0.0);
  // Vertical edge: columns 0..3 at 0, 4..7 at 255; only horizontal neighbours differ.
  Eigen::MatrixXi step = Eigen::MatrixXi::Zero(8, 8);
  step.rightCols(4).setConstant(255);
  const Image s = from_levels(step);
  EXPECT_NEAR(sf(s), std::sqrt(8.0 * 255.0 * 255.0 / 64.0), 1e-12);
  EXPECT_NEAR(sd(s), 127.5, 1e-12);
}

TEST(SpatialStats, MatchPerPixelLoops) {
  Rng rng(2);
  const Image img = random_image(13, 11, rng);
  const QuantImage q = quantize8(img);
  double mean = 0;
  for (Eigen::Index i = 0; i < q.size(); ++i) mean += q(i);
  mean /= q.size();
  double var = 0;
  for (Eigen::Index i = 0; i < q.size(); ++i) var += (q(i) - mean) * (q(i) - mean);
  EXPECT_NEAR(sd(img), std::sqrt(var / q.size()), 1e-10);

  double rf = 0, cf = 0, g = 0;
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 11; ++x) {
      if (y > 0) rf += double(q(y, x) - q(y - 1, x)) * (q(y, x) - q(y - 1, x));
      if (x > 0) cf += double(q(y, x) - q(y, x - 1)) * (q(y, x) - q(y, x - 1));
      if (y < 12 && x < 10) {
        const double dx = q(y, x + 1) - q(y, x), dy = q(y + 1, x) - q(y, x);
        g += std::sqrt(dx * dx + dy * dy) / std::sqrt(2.0);
      }
    }
  EXPECT_NEAR(sf(img), std::sqrt(rf / 143 + cf / 143), 1e-10);
  EXPECT_NEAR(ag(img), g / 120, 1e-10);
}

TEST(SpatialStats, ExactBinShiftInvariance) {
  Rng rng(3);
  Eigen::MatrixXi lv(12, 12);
  std::uniform_int_distribution<int> u(0, 200);
  for (Eigen::Index i = 0; i < lv.size(); ++i) lv(i) = u(rng);
  const Image a = from_levels(lv), b = from_levels((lv.array() + 40).matrix());
  EXPECT_NEAR(sd(a), sd(b), 1e-12);
  EXPECT_NEAR(sf(a), sf(b), 1e-12);
  EXPECT_NEAR(ag(a), ag(b), 1e-12);
  EXPECT_NEAR(en(a), en(b), 1e-12);
}

TEST(Vif, PerfectFidelityAndDegradation) {
  const SourcePair p = synthetic_pair(64);
  EXPECT_NEAR(vif(p.ir, p.ir), 1.0, 1e-6);
  EXPECT_NEAR(vif(p.vi, p.vi), 1.0, 1e-6);
  Rng rng(4);
  const Image noisy = (0.5 * p.vi + 0.5 * random_image(64, 64, rng)).eval();
  EXPECT_LT(vif(noisy, p.vi), 0.9);
  EXPECT_EQ(vif(p.vi, Image::Constant(64, 64, 0.2)), 0.0);
}

TEST(Qabf, PerfectTransferNoiseAndRange) {
  const SourcePair p = synthetic_pair(64);
  EXPECT_NEAR(qabf(p.ir, p.ir, p.ir), 1.0, 1e-6);
  Rng rng(5);
  const double noise = qabf(random_image(64, 64, rng), p.ir, p.vi);
  EXPECT_LT(noise, 0.2);
  const double avg = qabf((0.5 * (p.ir + p.vi)).eval(), p.ir, p.vi);
  EXPECT_GT(avg, noise);
  EXPECT_LE(avg, 1.0);
  const Image c = Image::Constant(64, 64, 0.5);
  EXPECT_EQ(qabf(p.ir, c, c), 0.0);
}

TEST(Evaluate, ReportsAllSevenFiniteAndDeterministic) {
  const SourcePair p = synthetic_pair(64);
  const Image f = (0.5 * (p.ir + p.vi)).eval();
  const MetricReport a = evaluate(f, p.ir, p.vi), b = evaluate(f, p.ir, p.vi);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_TRUE(std::isfinite(a.values()[i])) << MetricReport::kNames[i];
    EXPECT_EQ(a.values()[i], b.values()[i]);
  }
  EXPECT_GE(a.en, 0.0);
  EXPECT_LE(a.en, 8.0);
  EXPECT_NEAR(a.vif, 0.5 * (vif(f, p.ir) + vif(f, p.vi)), 1e-15);
  const MetricReport m = mean_report({a, evaluate(p.ir, p.ir, p.vi)});
  EXPECT_NEAR(m.sd, 0.5 * (a.sd + sd(p.ir)), 1e-12);
}

TEST(Silhouette, HandPlacedSeparatedAndMixed) {
  // Labels 1 at x = 0, 1; labels 2 at x = 4, 6.
  const PointSet ps = make_set({{0}, {1}, {4}, {6}}, {1, 1, 2, 2});
  const double s0 = (5.0 - 1) / 5.0, s1 = (4.0 - 1) / 4.0, s2 = (3.5 - 2) / 3.5, s3 = (5.5 - 2) / 5.5;
  EXPECT_NEAR(silhouette(ps), (s0 + s1 + s2 + s3) / 4, 1e-14);

  Rng rng(6);
  PointSet far = gaussian_set(30, 1000.0, rng);
  EXPECT_NEAR(silhouette(far), 1.0, 0.05);
  const PointSet same = gaussian_set(100, 0.0, rng);
  EXPECT_LT(std::abs(silhouette(same)), 0.15);
  const double s = silhouette(gaussian_set(20, 1.0, rng));
  EXPECT_GE(s, -1.0);
  EXPECT_LE(s, 1.0);
}

TEST(Imdr, HandPlacedAndLimits) {
  const PointSet ps = make_set({{0}, {1}, {4}, {6}}, {1, 1, 2, 2});
  EXPECT_NEAR(imdr(ps), ((4 + 6 + 3 + 5) / 4.0) / ((1 + 2) / 2.0), 1e-14);
  Rng rng(7);
  EXPECT_GT(imdr(gaussian_set(20, 10.0, rng)), 1.0);
  EXPECT_NEAR(imdr(gaussian_set(100, 0.0, rng)), 1.0, 0.1);
  EXPECT_EQ(code_of([] { imdr(make_set({{0}, {0}, {1}, {1}}, {1, 1, 2, 2})); }), ErrorCode::ZeroIntra);
}

TEST(CmNnr, HandPlacedTiesSeparatedInterleaved) {
  const PointSet six = make_set({{0}, {1}, {2}, {3}, {10}, {11}}, {1, 2, 1, 2, 1, 2});
  // Hand enumeration with k = 2 (ties to lower index): point 1 has neighbours
  // 0 and 2 at distance 1 (both cross), point 4 has 5 and 3 (both cross).
  const double expected = (1.0 / 2 + 2.0 / 2 + 2.0 / 2 + 1.0 / 2 + 2.0 / 2 + 1.0 / 2) / 6;
  EXPECT_NEAR(cm_nnr(six, 2), expected, 1e-14);
  EXPECT_NEAR(cm_nnr(six, 2), brute_cm_nnr(six, 2), 1e-14);

  Rng rng(8);
  EXPECT_EQ(cm_nnr(gaussian_set(20, 100.0, rng), 3), 0.0);
  EXPECT_NEAR(cm_nnr(gaussian_set(100, 0.0, rng)), 0.5, 0.1);
  for (int trial = 0; trial < 5; ++trial) {
    const PointSet ps = gaussian_set(8, 0.7, rng, 2);
    for (int k : {1, 4, 15}) EXPECT_NEAR(cm_nnr(ps, k), brute_cm_nnr(ps, k), 1e-14);
  }
}

TEST(Diagnostics, BruteForceAgreementOnRandomSets) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const PointSet ps = gaussian_set(10, 0.5 * trial, rng, 4);
    double inter = 0, intra = 0;
    int ni = 0, na = 0;
    double sil = 0;
    for (Eigen::Index i = 0; i < 20; ++i) {
      double same = 0, other = 0;
      for (Eigen::Index j = 0; j < 20; ++j) {
        if (i == j) continue;
        const double d = (ps.points.row(i) - ps.points.row(j)).norm();
        const bool same_label = ps.labels[static_cast<std::size_t>(i)] == ps.labels[static_cast<std::size_t>(j)];
        (same_label ? same : other) += d;
        if (j > i) {
          if (same_label) { intra += d; ++na; } else { inter += d; ++ni; }
        }
      }
      const double a = same / 9, b = other / 10;
      sil += (b - a) / std::max(a, b);
    }
    EXPECT_NEAR(silhouette(ps), sil / 20, 1e-12);
    EXPECT_NEAR(imdr(ps), (inter / ni) / (intra / na), 1e-12);
  }
}

TEST(Diagnostics, Errors) {
  const PointSet one = make_set({{0}, {1}, {2}}, {1, 1, 2});
  EXPECT_EQ(code_of([&] { silhouette(one); }), ErrorCode::DegenerateSet);
  EXPECT_EQ(code_of([&] { imdr(one); }), ErrorCode::DegenerateSet);
  const PointSet four = make_set({{0}, {1}, {2}, {3}}, {1, 1, 2, 2});
  EXPECT_EQ(code_of([&] { cm_nnr(four, 4); }), ErrorCode::KTooLarge);
  EXPECT_EQ(code_of([&] { cm_nnr(four, 0); }), ErrorCode::KTooLarge);
  EXPECT_EQ(code_of([&] { cm_nnr(make_set({{0}, {1}, {2}, {3}}, {1, 1, 2, 3})); }), ErrorCode::DegenerateSet);
}
