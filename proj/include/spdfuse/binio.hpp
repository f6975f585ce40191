#pragma once

// Little-endian scalar and matrix encoding shared by checkpoints, feature
// files and raw matrix dumps.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "spdfuse/error.hpp"
#include "spdfuse/linalg.hpp"

namespace spdfuse::binio {

template <class UInt>
void write_le(std::ostream& os, UInt v) {
  unsigned char buf[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(buf), sizeof(UInt));
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }

template <class UInt>
UInt read_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(UInt)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(UInt))) {
    throw Error(ErrorCode::CorruptFile, std::string("unexpected end of file reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(buf[i]) << (8 * i);
  return v;
}

inline std::uint32_t read_u32(std::istream& is, const char* what) { return read_le<std::uint32_t>(is, what); }
inline std::uint64_t read_u64(std::istream& is, const char* what) { return read_le<std::uint64_t>(is, what); }
inline double read_f64(std::istream& is, const char* what) {
  return std::bit_cast<double>(read_le<std::uint64_t>(is, what));
}

/// (rows u64, cols u64, row-major f64 data)
inline void write_matrix(std::ostream& os, const Matrix& m) {
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
}

inline Matrix read_matrix(std::istream& is, std::uint64_t max_elements = (1ull << 32)) {
  const std::uint64_t rows = read_u64(is, "matrix rows");
  const std::uint64_t cols = read_u64(is, "matrix cols");
  if (rows != 0 && cols > max_elements / rows) {
    throw Error(ErrorCode::CorruptFile, "implausible matrix shape " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64(is, "matrix data");
  return m;
}

}  // namespace spdfuse::binio
