#pragma once

#include <string>

#include "spdfuse/error.hpp"
#include "spdfuse/filter.hpp"

namespace spdfuse {

/// Overlapping square-patch tiling of a reflect-padded image.
struct PatchGeometry {
  int patch_size = 16;
  int stride = 8;
  int pad = 8;
  int image_h = 0;
  int image_w = 0;

  static PatchGeometry for_image(int h, int w, int patch_size = 16, int stride = 8, int pad = 8) {
    PatchGeometry g{patch_size, stride, pad, h, w};
    g.validate();
    return g;
  }

  int padded_h() const { return image_h + 2 * pad; }
  int padded_w() const { return image_w + 2 * pad; }
  int grid_h() const { return (padded_h() - patch_size) / stride + 1; }
  int grid_w() const { return (padded_w() - patch_size) / stride + 1; }
  /// Patches per image (N).
  int count() const { return grid_h() * grid_w(); }
  /// Values per patch (n).
  int row_len() const { return patch_size * patch_size; }

  void validate() const {
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::GeometryMismatch,
                  why + " (patch " + std::to_string(patch_size) + ", stride " + std::to_string(stride) + ", pad " +
                      std::to_string(pad) + ", image " + std::to_string(image_h) + "x" + std::to_string(image_w) + ")");
    };
    if (patch_size <= 0) fail("patch_size must be positive");
    if (stride <= 0 || stride > patch_size) fail("stride must be in (0, patch_size]");
    if (pad < 0) fail("pad must be nonnegative");
    if (image_h <= 0 || image_w <= 0) fail("image dimensions must be positive");
    if (padded_h() < patch_size || padded_w() < patch_size) fail("padded image is smaller than one patch");
    if ((padded_h() - patch_size) % stride != 0 || (padded_w() - patch_size) % stride != 0) {
      fail("(image + 2*pad - patch_size) must be divisible by stride");
    }
  }

  bool operator==(const PatchGeometry&) const = default;
};

/// N×n matrix, one flattened (row-major) patch per row, patches ordered
/// top-to-bottom then left-to-right.
struct PatchMatrix {
  PatchGeometry geometry;
  Matrix rows;
};

inline void require_geometry(const Image& img, const PatchGeometry& geom) {
  geom.validate();
  if (img.rows() != geom.image_h || img.cols() != geom.image_w) {
    throw Error(ErrorCode::GeometryMismatch, "image is " + std::to_string(img.rows()) + "x" +
                                                 std::to_string(img.cols()) + ", geometry expects " +
                                                 std::to_string(geom.image_h) + "x" + std::to_string(geom.image_w));
  }
}

inline PatchMatrix extract_patches(const Image& img, const PatchGeometry& geom) {
  require_geometry(img, geom);
  const int p = geom.patch_size;
  Image canvas(geom.padded_h(), geom.padded_w());
  for (int y = 0; y < geom.padded_h(); ++y)
    for (int x = 0; x < geom.padded_w(); ++x)
      canvas(y, x) = img(reflect_index(y - geom.pad, geom.image_h), reflect_index(x - geom.pad, geom.image_w));

  PatchMatrix out{geom, Matrix(geom.count(), geom.row_len())};
  for (int gy = 0; gy < geom.grid_h(); ++gy)
    for (int gx = 0; gx < geom.grid_w(); ++gx) {
      const int row = gy * geom.grid_w() + gx;
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx) out.rows(row, dy * p + dx) = canvas(gy * geom.stride + dy, gx * geom.stride + dx);
    }
  return out;
}

inline void require_patch_shape(const PatchMatrix& pm) {
  pm.geometry.validate();
  if (pm.rows.rows() != pm.geometry.count() || pm.rows.cols() != pm.geometry.row_len()) {
    throw Error(ErrorCode::GeometryMismatch, "patch matrix is " + std::to_string(pm.rows.rows()) + "x" +
                                                 std::to_string(pm.rows.cols()) + ", geometry expects " +
                                                 std::to_string(pm.geometry.count()) + "x" +
                                                 std::to_string(pm.geometry.row_len()));
  }
}

namespace detail {

inline Matrix coverage_counts(const PatchGeometry& geom) {
  Matrix cnt = Matrix::Zero(geom.padded_h(), geom.padded_w());
  for (int gy = 0; gy < geom.grid_h(); ++gy)
    for (int gx = 0; gx < geom.grid_w(); ++gx)
      cnt.block(gy * geom.stride, gx * geom.stride, geom.patch_size, geom.patch_size).array() += 1.0;
  return cnt;
}

}  // namespace detail

/// Reassembles an image: every padded-canvas pixel is the mean of the patch
/// values covering it, then the padding is cropped. The mean is accumulated
/// incrementally so identical contributions reproduce their value exactly.
inline Image fold_patches(const PatchMatrix& pm) {
  require_patch_shape(pm);
  const PatchGeometry& geom = pm.geometry;
  const int p = geom.patch_size;
  Image mean = Image::Zero(geom.padded_h(), geom.padded_w());
  Matrix cnt = Matrix::Zero(geom.padded_h(), geom.padded_w());
  for (int gy = 0; gy < geom.grid_h(); ++gy)
    for (int gx = 0; gx < geom.grid_w(); ++gx) {
      const int row = gy * geom.grid_w() + gx;
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx) {
          const int y = gy * geom.stride + dy, x = gx * geom.stride + dx;
          cnt(y, x) += 1.0;
          mean(y, x) += (pm.rows(row, dy * p + dx) - mean(y, x)) / cnt(y, x);
        }
    }
  return mean.block(geom.pad, geom.pad, geom.image_h, geom.image_w);
}

/// Transpose of fold_patches: each patch entry receives the upstream gradient
/// of its canvas pixel divided by that pixel's coverage; padding gets nothing.
inline Matrix fold_patches_backward(const PatchGeometry& geom, const Image& upstream) {
  require_geometry(upstream, geom);
  const int p = geom.patch_size;
  const Matrix cnt = detail::coverage_counts(geom);
  Matrix grad = Matrix::Zero(geom.count(), geom.row_len());
  for (int gy = 0; gy < geom.grid_h(); ++gy)
    for (int gx = 0; gx < geom.grid_w(); ++gx) {
      const int row = gy * geom.grid_w() + gx;
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx) {
          const int y = gy * geom.stride + dy - geom.pad, x = gx * geom.stride + dx - geom.pad;
          if (y < 0 || x < 0 || y >= geom.image_h || x >= geom.image_w) continue;
          grad(row, dy * p + dx) = upstream(y, x) / cnt(y + geom.pad, x + geom.pad);
        }
    }
  return grad;
}

}  // namespace spdfuse
