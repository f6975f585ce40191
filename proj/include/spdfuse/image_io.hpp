#pragma once

// Grayscale image files (binary PGM and PNG), bilinear resizing and the
// seeded noise models used by the robustness experiments.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <png.h>

#include "spdfuse/error.hpp"
#include "spdfuse/filter.hpp"

namespace spdfuse {

namespace detail {

inline std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline Image decode_pgm(const std::vector<unsigned char>& bytes, const std::string& path) {
  std::size_t pos = 2;
  auto next_int = [&](const char* what) {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      throw Error(ErrorCode::DecodeError, path + ": malformed PGM header (" + what + ")");
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1L << 24)) throw Error(ErrorCode::DecodeError, path + ": PGM " + what + " out of range");
    }
    return v;
  };
  const long w = next_int("width"), h = next_int("height"), maxval = next_int("maxval");
  if (w <= 0 || h <= 0) throw Error(ErrorCode::DecodeError, path + ": PGM has zero size");
  if (maxval <= 0 || maxval > 255) {
    throw Error(ErrorCode::UnsupportedFormat, path + ": only 8-bit PGM is supported (maxval " + std::to_string(maxval) + ")");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(ErrorCode::DecodeError, path + ": malformed PGM header");
  ++pos;
  if (bytes.size() - pos < static_cast<std::size_t>(w * h)) {
    throw Error(ErrorCode::DecodeError, path + ": PGM pixel data truncated");
  }
  Image img(h, w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) img(y, x) = bytes[pos + static_cast<std::size_t>(y * w + x)] / static_cast<double>(maxval);
  return img;
}

inline Image decode_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::DecodeError, path + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::DecodeError, path + ": " + msg);
  }
  const Eigen::Index h = image.height, w = image.width;
  Image img(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      if (color) {
        const png_byte* px = &buf[static_cast<std::size_t>((y * w + x) * 3)];
        img(y, x) = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
      } else {
        img(y, x) = buf[static_cast<std::size_t>(y * w + x)] / 255.0;
      }
    }
  return img;
}

inline std::vector<unsigned char> quantize_bytes(const Image& img) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(img.size()));
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      bytes[static_cast<std::size_t>(y * img.cols() + x)] =
          static_cast<unsigned char>(std::lround(255.0 * std::clamp(img(y, x), 0.0, 1.0)));
    }
  return bytes;
}

}  // namespace detail

/// Decodes 8-bit binary PGM (P5) or PNG, detected by content, to [0, 1].
/// Colour PNGs are converted with luma weights 0.299 / 0.587 / 0.114.
inline Image load_image(const std::string& path) {
  const std::vector<unsigned char> bytes = detail::read_file_bytes(path);
  static constexpr std::array<unsigned char, 8> kPngMagic{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return detail::decode_pgm(bytes, path);
  if (bytes.size() >= 8 && std::equal(kPngMagic.begin(), kPngMagic.end(), bytes.begin())) return detail::decode_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && std::isdigit(bytes[1])) {
    throw Error(ErrorCode::UnsupportedFormat, path + ": only binary grayscale PGM (P5) is supported");
  }
  throw Error(ErrorCode::UnsupportedFormat, path + ": not a PGM or PNG file");
}

/// Writes round(255·clamp(x, 0, 1)) as PGM or PNG, chosen by extension.
inline void save_image(const Image& img, const std::string& path) {
  if (img.size() == 0) throw Error(ErrorCode::ZeroDim, "cannot save an empty image");
  const std::string ext = detail::lower_extension(path);
  const std::vector<unsigned char> bytes = detail::quantize_bytes(img);
  if (ext == ".pgm") {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    os << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error(ErrorCode::IoError, "failed writing " + path);
  } else if (ext == ".png") {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.cols());
    image.height = static_cast<png_uint_32>(img.rows());
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
      throw Error(ErrorCode::IoError, path + ": " + image.message);
    }
  } else {
    throw Error(ErrorCode::UnsupportedFormat, path + ": output extension must be .pgm or .png");
  }
}

/// Bilinear resampling with corner-aligned sample positions.
inline Image resize_bilinear(const Image& img, Eigen::Index h, Eigen::Index w) {
  if (h <= 0 || w <= 0 || img.size() == 0) throw Error(ErrorCode::ZeroDim, "resize to or from a zero-sized image");
  if (h == img.rows() && w == img.cols()) return img;
  const double sy = h > 1 ? static_cast<double>(img.rows() - 1) / static_cast<double>(h - 1) : 0.0;
  const double sx = w > 1 ? static_cast<double>(img.cols() - 1) / static_cast<double>(w - 1) : 0.0;
  Image out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) * sy;
    const Eigen::Index y0 = std::min(static_cast<Eigen::Index>(fy), img.rows() - 1);
    const Eigen::Index y1 = std::min(y0 + 1, img.rows() - 1);
    const double ty = fy - static_cast<double>(y0);
    for (Eigen::Index x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) * sx;
      const Eigen::Index x0 = std::min(static_cast<Eigen::Index>(fx), img.cols() - 1);
      const Eigen::Index x1 = std::min(x0 + 1, img.cols() - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = (1.0 - tx) * img(y0, x0) + tx * img(y0, x1);
      const double bottom = (1.0 - tx) * img(y1, x0) + tx * img(y1, x1);
      out(y, x) = (1.0 - ty) * top + ty * bottom;
    }
  }
  return out;
}

enum class NoiseKind { Gaussian, SaltPepper };

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "gaussian") return NoiseKind::Gaussian;
  if (s == "salt_pepper") return NoiseKind::SaltPepper;
  throw Error(ErrorCode::ConfigError, "unknown noise kind '" + s + "' (gaussian|salt_pepper)");
}

/// Gaussian: adds N(0, level²) and clamps to [0, 1] (level > 0).
/// Salt and pepper: each pixel is replaced with probability `level` by 0 or 1
/// with equal odds (level ∈ [0, 1]).
inline Image add_noise(const Image& img, NoiseKind kind, double level, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Image out = img;
  if (kind == NoiseKind::Gaussian) {
    if (!(level > 0.0) || !std::isfinite(level)) {
      throw Error(ErrorCode::BadLevel, "gaussian noise level must be > 0, got " + std::to_string(level));
    }
    std::normal_distribution<double> normal(0.0, level);
    for (Eigen::Index y = 0; y < out.rows(); ++y)
      for (Eigen::Index x = 0; x < out.cols(); ++x) out(y, x) = std::clamp(out(y, x) + normal(rng), 0.0, 1.0);
  } else {
    if (!(level >= 0.0 && level <= 1.0)) {
      throw Error(ErrorCode::BadLevel, "salt-and-pepper level must be in [0, 1], got " + std::to_string(level));
    }
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (Eigen::Index y = 0; y < out.rows(); ++y)
      for (Eigen::Index x = 0; x < out.cols(); ++x) {
        const bool hit = uniform(rng) < level;
        const bool salt = uniform(rng) < 0.5;
        if (hit) out(y, x) = salt ? 1.0 : 0.0;
      }
  }
  return out;
}

}  // namespace spdfuse
