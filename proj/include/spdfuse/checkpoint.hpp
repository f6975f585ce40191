#pragma once

// Model checkpoints. Layout (little-endian):
//
//   "SPDC"  u32 version
//   u32 patch_size, stride, pad, image_h, image_w
//   u32 depth   f64 reeig_eps   f64 cov_eps   u32 strategy   u32 spdam mode
//   u64 adam step   u64 epochs_done
//   u32 matrix count, then each matrix as (u64 rows, u64 cols, row-major f64):
//     depth BiMap weights, 3 kernels, 3 biases (as columns),
//     Adam m/v for the 3 kernels, Adam m/v for the 3 biases.
//
// Writes go to a temporary sibling that is renamed over the target.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spdfuse/binio.hpp"
#include "spdfuse/error.hpp"
#include "spdfuse/pipeline.hpp"

namespace spdfuse {

inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'D', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void serialize_checkpoint(std::ostream& os, const FusionModel& model) {
  using namespace binio;
  const ModelConfig& c = model.config;
  os.write(kCheckpointMagic, 4);
  write_u32(os, kCheckpointVersion);
  for (int v : {c.geometry.patch_size, c.geometry.stride, c.geometry.pad, c.geometry.image_h, c.geometry.image_w}) {
    write_u32(os, static_cast<std::uint32_t>(v));
  }
  write_u32(os, static_cast<std::uint32_t>(model.spdnet.depth()));
  write_f64(os, c.reeig_eps);
  write_f64(os, c.cov_eps);
  write_u32(os, static_cast<std::uint32_t>(c.strategy));
  write_u32(os, static_cast<std::uint32_t>(c.spdam));
  write_u64(os, model.adam.step);
  write_u64(os, model.epochs_done);

  const auto& layers = model.decoder.layers;
  const auto& adam = model.adam;
  write_u32(os, static_cast<std::uint32_t>(model.spdnet.depth() + 15));
  for (int k = 0; k < model.spdnet.depth(); ++k) write_matrix(os, model.spdnet.weight(k).w);
  for (const auto& layer : layers) write_matrix(os, layer.kernel);
  for (const auto& layer : layers) write_matrix(os, layer.bias);
  for (const auto& m : adam.m_kernel) write_matrix(os, m);
  for (const auto& v : adam.v_kernel) write_matrix(os, v);
  for (const auto& m : adam.m_bias) write_matrix(os, m);
  for (const auto& v : adam.v_bias) write_matrix(os, v);
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorCode::CorruptFile, "checkpoint " + what + " is " + std::to_string(m.rows()) + "x" +
                                            std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                                            std::to_string(cols));
  }
}

}  // namespace detail

inline std::string checkpoint_bytes(const FusionModel& model) {
  std::ostringstream os(std::ios::binary);
  detail::serialize_checkpoint(os, model);
  return os.str();
}

inline void save_checkpoint(const FusionModel& model, const std::string& path) {
  const std::string bytes = checkpoint_bytes(model);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + tmp + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) throw Error(ErrorCode::IoError, "failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline FusionModel parse_checkpoint(const std::string& bytes) {
  using namespace binio;
  std::istringstream is(bytes, std::ios::binary);
  char magic[4] = {};
  if (!is.read(magic, 4)) throw Error(ErrorCode::CorruptFile, "checkpoint shorter than its header");
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) throw Error(ErrorCode::VersionMismatch, "not a checkpoint (bad magic)");
  const std::uint32_t version = read_u32(is, "version");
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  ModelConfig c;
  c.geometry.patch_size = static_cast<int>(read_u32(is, "patch_size"));
  c.geometry.stride = static_cast<int>(read_u32(is, "stride"));
  c.geometry.pad = static_cast<int>(read_u32(is, "pad"));
  c.geometry.image_h = static_cast<int>(read_u32(is, "image_h"));
  c.geometry.image_w = static_cast<int>(read_u32(is, "image_w"));
  try {
    c.geometry.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptFile, std::string("checkpoint geometry invalid: ") + e.what());
  }
  const std::uint32_t depth = read_u32(is, "depth");
  c.reeig_eps = read_f64(is, "reeig_eps");
  c.cov_eps = read_f64(is, "cov_eps");
  const std::uint32_t strategy = read_u32(is, "strategy");
  const std::uint32_t spdam = read_u32(is, "spdam mode");
  if (depth < 1 || depth > 64 || strategy > 2 || spdam > 1 || !(c.reeig_eps > 0.0) || !(c.cov_eps > 0.0)) {
    throw Error(ErrorCode::CorruptFile, "checkpoint header fields out of range");
  }
  c.depth = static_cast<int>(depth);
  c.strategy = static_cast<CovStrategy>(strategy);
  c.spdam = static_cast<SpdamMode>(spdam);

  FusionModel model;
  model.config = c;
  model.adam.step = read_u64(is, "adam step");
  model.epochs_done = read_u64(is, "epochs_done");
  const std::uint32_t count = read_u32(is, "matrix count");
  if (count != depth + 15) {
    throw Error(ErrorCode::CorruptFile, "checkpoint holds " + std::to_string(count) + " matrices, expected " +
                                            std::to_string(depth + 15));
  }
  const Eigen::Index dim = c.spd_dim();
  std::vector<StiefelParam> weights;
  for (std::uint32_t k = 0; k < depth; ++k) {
    Matrix w = read_matrix(is);
    detail::require_shape(w, dim, dim, "BiMap weight");
    weights.push_back({std::move(w)});
  }
  model.spdnet = SpdNet(std::move(weights), c.reeig_eps);
  auto& layers = model.decoder.layers;
  for (auto& layer : layers) {
    Matrix k = read_matrix(is);
    detail::require_shape(k, layer.kernel.rows(), layer.kernel.cols(), "kernel");
    layer.kernel = std::move(k);
  }
  for (auto& layer : layers) {
    Matrix b = read_matrix(is);
    detail::require_shape(b, layer.bias.size(), 1, "bias");
    layer.bias = b.col(0);
  }
  model.adam = [&] {
    AdamState s = AdamState::zeros_like(model.decoder);
    s.step = model.adam.step;
    return s;
  }();
  for (auto* group : {&model.adam.m_kernel, &model.adam.v_kernel}) {
    for (std::size_t l = 0; l < 3; ++l) {
      Matrix m = read_matrix(is);
      detail::require_shape(m, layers[l].kernel.rows(), layers[l].kernel.cols(), "adam kernel moment");
      (*group)[l] = std::move(m);
    }
  }
  for (auto* group : {&model.adam.m_bias, &model.adam.v_bias}) {
    for (std::size_t l = 0; l < 3; ++l) {
      Matrix m = read_matrix(is);
      detail::require_shape(m, layers[l].bias.size(), 1, "adam bias moment");
      (*group)[l] = m.col(0);
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::CorruptFile, "trailing bytes after checkpoint");
  return model;
}

inline FusionModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace spdfuse
