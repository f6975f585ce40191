#pragma once

// Convolutional decoder: cat(F_ir, F_vi) -> conv3x3(2->16) -> LeakyReLU ->
// conv3x3(16->16) -> LeakyReLU -> conv3x3(16->1) -> sigmoid. Borders are
// padded by replicating the edge pixel, so spatial size is preserved.
// Also holds the adaptive-moment (Adam) optimizer for its parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "spdfuse/error.hpp"
#include "spdfuse/filter.hpp"
#include "spdfuse/spd.hpp"

namespace spdfuse {

inline constexpr double kSigmoidClip = 30.0;

/// One 3×3 convolution. kernel(o, c*9 + ky*3 + kx).
struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  Matrix kernel;
  Vector bias;
};

namespace detail {

// (in_ch*9) × (h*w) column matrix of replicate-padded 3×3 neighborhoods.
inline Matrix im2col3(const Matrix& maps, int h, int w) {
  const Eigen::Index ch = maps.rows();
  Matrix cols(ch * 9, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < ch; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index r = c * 9 + ky * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const Eigen::Index sy = clamp_index(y + ky - 1, h);
          for (int x = 0; x < w; ++x) {
            cols(r, static_cast<Eigen::Index>(y) * w + x) = maps(c, sy * w + clamp_index(x + kx - 1, w));
          }
        }
      }
  return cols;
}

inline Matrix col2im3(const Matrix& cols, Eigen::Index ch, int h, int w) {
  Matrix maps = Matrix::Zero(ch, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < ch; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index r = c * 9 + ky * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const Eigen::Index sy = clamp_index(y + ky - 1, h);
          for (int x = 0; x < w; ++x) {
            maps(c, sy * w + clamp_index(x + kx - 1, w)) += cols(r, static_cast<Eigen::Index>(y) * w + x);
          }
        }
      }
  return maps;
}

inline double sigmoid(double z) {
  z = std::clamp(z, -kSigmoidClip, kSigmoidClip);
  return 1.0 / (1.0 + std::exp(-z));
}

// Row-major flattening of an image into one row.
inline Matrix flatten_row(const Image& img) {
  Matrix row(1, img.size());
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) row(0, y * img.cols() + x) = img(y, x);
  return row;
}

inline Image unflatten_row(const Matrix& maps, Eigen::Index c, int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img(y, x) = maps(c, static_cast<Eigen::Index>(y) * w + x);
  return img;
}

}  // namespace detail

struct DecoderGrads {
  std::array<Matrix, 3> kernels;
  std::array<Vector, 3> biases;
  Image grad_ir;
  Image grad_vi;
};

class ConvDecoder {
 public:
  static constexpr std::array<int, 4> kChannels{2, 16, 16, 1};

  std::array<ConvLayer, 3> layers;
  double leaky_slope = 0.2;

  /// Zero kernels and biases.
  ConvDecoder() {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].in_ch = kChannels[l];
      layers[l].out_ch = kChannels[l + 1];
      layers[l].kernel = Matrix::Zero(kChannels[l + 1], kChannels[l] * 9);
      layers[l].bias = Vector::Zero(kChannels[l + 1]);
    }
  }

  /// Gaussian kernels (std `init_std`), zero biases.
  static ConvDecoder random(Rng& rng, double init_std = 0.1) {
    ConvDecoder dec;
    std::normal_distribution<double> normal(0.0, init_std);
    for (auto& layer : dec.layers)
      for (Eigen::Index j = 0; j < layer.kernel.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.kernel.rows(); ++i) layer.kernel(i, j) = normal(rng);
    return dec;
  }

  Image forward(const Image& f_ir, const Image& f_vi) {
    Cache cache;
    Image out = run(f_ir, f_vi, &cache);
    cache_ = std::move(cache);
    return out;
  }

  Image infer(const Image& f_ir, const Image& f_vi) const { return run(f_ir, f_vi, nullptr); }

  DecoderGrads backward(const Image& upstream) const {
    if (!cache_) throw Error(ErrorCode::MissingCache, "decoder backward called before forward");
    const Cache& c = *cache_;
    if (upstream.rows() != c.h || upstream.cols() != c.w) {
      throw Error(ErrorCode::SizeMismatch, "decoder upstream gradient has the wrong size");
    }
    DecoderGrads grads;
    // Through the sigmoid.
    Matrix g = detail::flatten_row(upstream);
    for (Eigen::Index i = 0; i < g.cols(); ++i) {
      const double z = c.pre[2](0, i);
      const double s = c.output(0, i);
      g(0, i) *= std::abs(z) >= kSigmoidClip ? 0.0 : s * (1.0 - s);
    }
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (l < 2) {
        for (Eigen::Index r = 0; r < g.rows(); ++r)
          for (Eigen::Index i = 0; i < g.cols(); ++i)
            if (c.pre[l](r, i) <= 0.0) g(r, i) *= leaky_slope;
      }
      grads.kernels[l] = g * c.cols[l].transpose();
      grads.biases[l] = g.rowwise().sum();
      const Matrix gcols = layers[l].kernel.transpose() * g;
      g = detail::col2im3(gcols, layers[l].in_ch, c.h, c.w);
    }
    grads.grad_ir = detail::unflatten_row(g, 0, c.h, c.w);
    grads.grad_vi = detail::unflatten_row(g, 1, c.h, c.w);
    return grads;
  }

  void clear_cache() { cache_.reset(); }

 private:
  struct Cache {
    int h = 0, w = 0;
    std::array<Matrix, 3> cols;  // layer inputs as im2col matrices
    std::array<Matrix, 3> pre;   // pre-activation outputs
    Matrix output;               // sigmoid output, 1 × hw
  };

  Image run(const Image& f_ir, const Image& f_vi, Cache* cache) const {
    require_same_size(f_ir, f_vi, "decoder inputs");
    if (f_ir.size() == 0) throw Error(ErrorCode::SizeMismatch, "decoder input is empty");
    const int h = static_cast<int>(f_ir.rows()), w = static_cast<int>(f_ir.cols());
    Matrix maps(2, static_cast<Eigen::Index>(h) * w);
    maps.row(0) = detail::flatten_row(f_ir);
    maps.row(1) = detail::flatten_row(f_vi);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix cols = detail::im2col3(maps, h, w);
      Matrix pre = layers[l].kernel * cols;
      pre.colwise() += layers[l].bias;
      if (l < 2) {
        maps = pre.unaryExpr([this](double z) { return z > 0.0 ? z : leaky_slope * z; });
      } else {
        maps = pre.unaryExpr([](double z) { return detail::sigmoid(z); });
      }
      if (cache) {
        cache->cols[l] = std::move(cols);
        cache->pre[l] = std::move(pre);
      }
    }
    if (cache) {
      cache->h = h;
      cache->w = w;
      cache->output = maps;
    }
    return detail::unflatten_row(maps, 0, h, w);
  }

  std::optional<Cache> cache_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for every decoder parameter.
struct AdamState {
  std::array<Matrix, 3> m_kernel, v_kernel;
  std::array<Vector, 3> m_bias, v_bias;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ConvDecoder& dec) {
    AdamState s;
    for (std::size_t l = 0; l < dec.layers.size(); ++l) {
      s.m_kernel[l] = s.v_kernel[l] = Matrix::Zero(dec.layers[l].kernel.rows(), dec.layers[l].kernel.cols());
      s.m_bias[l] = s.v_bias[l] = Vector::Zero(dec.layers[l].bias.size());
    }
    return s;
  }
};

namespace detail {

template <class Param>
void adam_update(Param& param, Param& m, Param& v, const Param& g, const AdamConfig& cfg, double bc1, double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  param.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
}

}  // namespace detail

inline void adam_step(ConvDecoder& dec, AdamState& state, const DecoderGrads& grads, const AdamConfig& cfg) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t l = 0; l < dec.layers.size(); ++l) {
    detail::adam_update(dec.layers[l].kernel, state.m_kernel[l], state.v_kernel[l], grads.kernels[l], cfg, bc1, bc2);
    detail::adam_update(dec.layers[l].bias, state.m_bias[l], state.v_bias[l], grads.biases[l], cfg, bc1, bc2);
  }
}

}  // namespace spdfuse
