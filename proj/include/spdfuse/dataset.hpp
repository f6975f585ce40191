#pragma once

// Paired infrared/visible datasets: two directories whose image files are
// matched by filename stem.

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spdfuse/error.hpp"
#include "spdfuse/image_io.hpp"

namespace spdfuse {

struct ImagePair {
  std::string stem;
  std::string ir_path;
  std::string vi_path;
};

struct LoadedPair {
  std::string stem;
  Image ir;
  Image vi;
};

/// Pairs sorted lexicographically by stem.
struct DatasetIndex {
  std::vector<ImagePair> pairs;
  int target_size = 0;  // square resize target; 0 keeps native size

  std::size_t size() const noexcept { return pairs.size(); }
};

inline bool is_image_extension(const std::string& ext) { return ext == ".pgm" || ext == ".png"; }

namespace detail {

inline std::map<std::string, std::string> scan_image_dir(const std::string& dir, const char* role) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(ErrorCode::DatasetError, std::string(role) + " directory not found: " + dir);
  std::map<std::string, std::string> by_stem;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string path = entry.path().string();
    if (!is_image_extension(lower_extension(path))) continue;
    const std::string stem = entry.path().stem().string();
    const auto [it, inserted] = by_stem.emplace(stem, path);
    if (!inserted) {
      throw Error(ErrorCode::DatasetError, std::string(role) + " directory has two files with stem '" + stem +
                                               "': " + it->second + ", " + path);
    }
  }
  return by_stem;
}

}  // namespace detail

/// Matches files across the two directories by stem. Any file without a
/// partner is an error naming it.
inline DatasetIndex index_dataset(const std::string& ir_dir, const std::string& vi_dir, int target_size = 0) {
  const auto ir = detail::scan_image_dir(ir_dir, "infrared");
  const auto vi = detail::scan_image_dir(vi_dir, "visible");
  for (const auto& [stem, path] : ir) {
    if (!vi.count(stem)) throw Error(ErrorCode::DatasetError, "orphan infrared image '" + path + "' has no visible partner");
  }
  for (const auto& [stem, path] : vi) {
    if (!ir.count(stem)) throw Error(ErrorCode::DatasetError, "orphan visible image '" + path + "' has no infrared partner");
  }
  if (ir.empty()) throw Error(ErrorCode::DatasetError, "no image pairs found in " + ir_dir + " and " + vi_dir);
  DatasetIndex idx;
  idx.target_size = target_size;
  for (const auto& [stem, path] : ir) idx.pairs.push_back({stem, path, vi.at(stem)});
  return idx;
}

/// Decodes one pair, resizing both to the target when set. Without a target
/// the two images must already agree in size.
inline LoadedPair load_pair(const ImagePair& pair, int target_size = 0) {
  LoadedPair out{pair.stem, load_image(pair.ir_path), load_image(pair.vi_path)};
  if (target_size > 0) {
    out.ir = resize_bilinear(out.ir, target_size, target_size);
    out.vi = resize_bilinear(out.vi, target_size, target_size);
  } else {
    require_same_size(out.ir, out.vi, ("pair '" + pair.stem + "'").c_str());
  }
  return out;
}

}  // namespace spdfuse
