#pragma once

// Command implementations behind the `spdfuse` executable. Each command takes
// an options struct plus output/error streams and returns a process exit
// code: 0 success, 1 usage or configuration error, 2 data error, 3 numeric
// failure.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spdfuse/binio.hpp"
#include "spdfuse/checkpoint.hpp"
#include "spdfuse/config.hpp"
#include "spdfuse/dataset.hpp"
#include "spdfuse/error.hpp"
#include "spdfuse/image_io.hpp"
#include "spdfuse/metrics.hpp"
#include "spdfuse/pipeline.hpp"

namespace spdfuse {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
      return kExitUsage;
    case ErrorCode::DecodeError:
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::IoError:
    case ErrorCode::DatasetError:
    case ErrorCode::GeometryMismatch:
    case ErrorCode::SizeMismatch:
    case ErrorCode::DimMismatch:
    case ErrorCode::ColumnMismatch:
    case ErrorCode::VersionMismatch:
    case ErrorCode::CorruptFile:
    case ErrorCode::ZeroDim:
    case ErrorCode::BadLevel:
    case ErrorCode::TooSmall:
      return kExitData;
    default:
      return kExitNumeric;
  }
}

/// Runs `body`, reporting any exception on `err` and mapping it to an exit code.
inline int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Six significant digits, as used in every CSV.
inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

/// Worker count: SMLNET_THREADS if set, else hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("SMLNET_THREADS")) {
    const std::string s = env;
    unsigned v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) {
      throw Error(ErrorCode::ConfigError, "SMLNET_THREADS must be a positive integer, got '" + s + "'");
    }
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n) on up to `threads` workers. The first
/// exception (by index) is rethrown after all workers finish.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Image fit_to_geometry(const Image& img, const PatchGeometry& g) {
  if (img.rows() == g.image_h && img.cols() == g.image_w) return img;
  return resize_bilinear(img, g.image_h, g.image_w);
}

/// Loads an ir/vi pair that must agree in size.
inline std::pair<Image, Image> load_source_pair(const std::string& ir_path, const std::string& vi_path) {
  Image ir = load_image(ir_path);
  Image vi = load_image(vi_path);
  if (ir.rows() != vi.rows() || ir.cols() != vi.cols()) {
    throw Error(ErrorCode::SizeMismatch, "infrared " + ir_path + " is " + std::to_string(ir.rows()) + "x" +
                                             std::to_string(ir.cols()) + " but visible " + vi_path + " is " +
                                             std::to_string(vi.rows()) + "x" + std::to_string(vi.cols()));
  }
  return {std::move(ir), std::move(vi)};
}

struct NoiseOptions {
  std::string kind;  // empty disables noise
  double level = 0.0;
  std::uint64_t seed = 0;

  bool enabled() const { return !kind.empty(); }

  /// The visible image uses seed + 1 so the two sources get independent noise.
  void apply(Image& ir, Image& vi) const {
    if (!enabled()) return;
    const NoiseKind k = parse_noise_kind(kind);
    ir = add_noise(ir, k, level, seed);
    vi = add_noise(vi, k, level, seed + 1);
  }
};

/// Min-max normalized to [0, 1]; a constant matrix maps to zeros.
inline Image minmax_normalize(const Matrix& m) {
  const double lo = m.minCoeff(), hi = m.maxCoeff();
  if (!(hi > lo)) return Image::Zero(m.rows(), m.cols());
  return (m.array() - lo) / (hi - lo);
}

inline void write_raw_matrix(const Matrix& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  binio::write_matrix(os, m);
  if (!os) throw Error(ErrorCode::IoError, "failed writing " + path);
}

inline Matrix read_raw_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  return binio::read_matrix(is);
}

inline std::ofstream open_csv(const std::string& path, bool append = false) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  return os;
}

inline std::vector<LoadedPair> load_dataset(const DatasetIndex& idx, const PatchGeometry& g, unsigned threads) {
  std::vector<LoadedPair> pairs(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) {
    LoadedPair p = load_pair(idx.pairs[i]);
    p.ir = fit_to_geometry(p.ir, g);
    p.vi = fit_to_geometry(p.vi, g);
    pairs[i] = std::move(p);
  });
  return pairs;
}

// ---------------------------------------------------------------------------
// Training and evaluation over in-memory pairs
// ---------------------------------------------------------------------------

struct StepRecord {
  std::uint64_t epoch = 0;  // 1-based
  std::uint64_t step = 0;   // 1-based, global across epochs
  StepReport report;
};

inline constexpr const char* kLossCsvHeader = "epoch,step,l_int,l_grad,l_ssim,l_cov,total,stiefel_defect";

inline std::string loss_csv_row(const StepRecord& r) {
  const LossReport& l = r.report.loss;
  return std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + fmt6(l.l_int) + "," + fmt6(l.l_grad) + "," +
         fmt6(l.l_ssim) + "," + fmt6(l.l_cov) + "," + fmt6(l.total) + "," + fmt6(r.report.stiefel_defect);
}

/// Trains from model.epochs_done up to `epochs`, visiting pairs in index
/// order each epoch. `on_step` sees every step; `on_epoch` runs after each
/// completed epoch with epochs_done already advanced.
inline void train_epochs(FusionModel& model, const std::vector<LoadedPair>& pairs, const TrainConfig& tc,
                         const std::function<void(const StepRecord&)>& on_step = {},
                         const std::function<void(const FusionModel&)>& on_epoch = {}) {
  const FeatureBank bank = FeatureBank::by_name(tc.feature_bank);
  const std::uint64_t target = static_cast<std::uint64_t>(tc.epochs);
  while (model.epochs_done < target) {
    const std::uint64_t epoch = model.epochs_done + 1;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = model.epochs_done * pairs.size() + i + 1;
      try {
        rec.report = train_step(model, pairs[i].ir, pairs[i].vi, tc, bank);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteLoss) throw;
        throw Error(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + " step " + std::to_string(rec.step) +
                                                  " (pair '" + pairs[i].stem + "'): " + e.what());
      }
      if (on_step) on_step(rec);
    }
    model.epochs_done += 1;
    if (on_epoch) on_epoch(model);
  }
}

struct PairMetrics {
  std::string stem;
  MetricReport report;
};

/// Fuses and scores every pair; results keep the input order.
inline std::vector<PairMetrics> evaluate_pairs(const FusionModel& model, const std::vector<LoadedPair>& pairs,
                                               unsigned threads) {
  std::vector<PairMetrics> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const Image fused = fuse(model, pairs[i].ir, pairs[i].vi);
    out[i] = {pairs[i].stem, evaluate(fused, pairs[i].ir, pairs[i].vi)};
  });
  return out;
}

inline std::string metrics_csv_header(const std::string& first_column) {
  std::string h = first_column;
  for (const char* name : MetricReport::kNames) h += std::string(",") + name;
  return h;
}

inline std::string metrics_csv_fields(const MetricReport& r) {
  std::string s;
  for (double v : r.values()) s += "," + fmt6(v);
  return s;
}

inline MetricReport mean_of(const std::vector<PairMetrics>& rows) {
  std::vector<MetricReport> reports;
  reports.reserve(rows.size());
  for (const auto& r : rows) reports.push_back(r.report);
  return mean_report(reports);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string config;
  std::string resume;  // optional checkpoint path
};

inline std::string checkpoint_path(const RunConfig& cfg) { return (std::filesystem::path(cfg.out_dir) / "model.ckpt").string(); }
inline std::string loss_csv_path(const RunConfig& cfg) { return (std::filesystem::path(cfg.out_dir) / "loss.csv").string(); }

namespace detail {

inline void require_resume_matches(const ModelConfig& ckpt, const RunConfig& cfg) {
  auto fail = [](const char* key) {
    throw Error(ErrorCode::ConfigError, std::string("checkpoint does not match config key '") + key + "'");
  };
  const PatchGeometry& a = ckpt.geometry;
  const PatchGeometry& b = cfg.model.geometry;
  if (a.patch_size != b.patch_size) fail("patch_size");
  if (a.stride != b.stride) fail("stride");
  if (a.pad != b.pad) fail("pad");
  if (a.image_h != b.image_h || a.image_w != b.image_w) fail("image_size");
  if (ckpt.depth != cfg.model.depth) fail("depth");
  if (ckpt.reeig_eps != cfg.model.reeig_eps) fail("reeig_eps");
  if (ckpt.cov_eps != cfg.model.cov_eps) fail("cov_eps");
}

}  // namespace detail

inline int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const RunConfig cfg = load_run_config(opt.config);
    FusionModel model;
    if (!opt.resume.empty()) {
      model = load_checkpoint(opt.resume);
      detail::require_resume_matches(model.config, cfg);
      if (model.epochs_done >= static_cast<std::uint64_t>(cfg.train.epochs)) {
        out << "checkpoint already trained for " << model.epochs_done << " epoch(s); nothing to do\n";
        return kExitOk;
      }
    } else {
      model = FusionModel::create(cfg.model, cfg.train.seed);
    }
    const unsigned threads = thread_cap();
    const DatasetIndex idx = index_dataset(cfg.ir_dir, cfg.vi_dir, cfg.image_size);
    const std::vector<LoadedPair> pairs = load_dataset(idx, cfg.model.geometry, threads);
    std::filesystem::create_directories(cfg.out_dir);

    const std::string csv_path = loss_csv_path(cfg);
    const bool append = !opt.resume.empty() && std::filesystem::exists(csv_path);
    std::ofstream csv = open_csv(csv_path, append);
    if (!append) csv << kLossCsvHeader << "\n";
    const std::string ckpt = checkpoint_path(cfg);
    out << "training " << pairs.size() << " pair(s) for epochs " << model.epochs_done + 1 << ".." << cfg.train.epochs
        << " (spd dim " << cfg.model.spd_dim() << ")\n";
    train_epochs(
        model, pairs, cfg.train, [&](const StepRecord& r) { csv << loss_csv_row(r) << "\n"; },
        [&](const FusionModel& m) {
          csv.flush();
          save_checkpoint(m, ckpt);
          out << "epoch " << m.epochs_done << " done, checkpoint " << ckpt << "\n";
        });
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseOptions {
  std::string ckpt;
  std::string ir;
  std::string vi;
  std::string out;
  NoiseOptions noise;
};

inline int cmd_fuse(const FuseOptions& opt, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const FusionModel model = load_checkpoint(opt.ckpt);
    auto [ir, vi] = load_source_pair(opt.ir, opt.vi);
    ir = fit_to_geometry(ir, model.config.geometry);
    vi = fit_to_geometry(vi, model.config.geometry);
    opt.noise.apply(ir, vi);
    const Image fused = fuse(model, ir, vi);
    save_image(fused, opt.out);
    const MetricReport r = evaluate(fused, ir, vi);
    const auto values = r.values();
    for (std::size_t i = 0; i < values.size(); ++i) out << MetricReport::kNames[i] << " " << fmt6(values[i]) << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string ckpt;
  std::string ir_dir;
  std::string vi_dir;
  std::string out_csv;
  NoiseOptions noise;
};

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const FusionModel model = load_checkpoint(opt.ckpt);
    const unsigned threads = thread_cap();
    const DatasetIndex idx = index_dataset(opt.ir_dir, opt.vi_dir);
    std::vector<LoadedPair> pairs = load_dataset(idx, model.config.geometry, threads);
    for (auto& p : pairs) opt.noise.apply(p.ir, p.vi);
    const std::vector<PairMetrics> rows = evaluate_pairs(model, pairs, threads);
    std::ofstream csv = open_csv(opt.out_csv);
    csv << metrics_csv_header("pair") << "\n";
    for (const auto& r : rows) csv << r.stem << metrics_csv_fields(r.report) << "\n";
    const MetricReport mean = mean_of(rows);
    csv << "mean" << metrics_csv_fields(mean) << "\n";
    out << "evaluated " << rows.size() << " pair(s) -> " << opt.out_csv << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// inspect-cov
// ---------------------------------------------------------------------------

struct InspectOptions {
  std::string ir;
  std::string vi;
  std::string out_prefix;
  std::string ckpt;  // optional
};

inline void write_heatmap_and_dump(const Matrix& m, const std::string& base) {
  save_image(minmax_normalize(m), base + ".pgm");
  write_raw_matrix(m, base + ".bin");
}

/// Writes <prefix>_q_irir / _q_irvi / _q_viir / _q_vivi (.pgm heatmap and
/// .bin raw), <prefix>_spd.bin, and with a checkpoint <prefix>_xk.
inline int cmd_inspect_cov(const InspectOptions& opt, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    auto [ir, vi] = load_source_pair(opt.ir, opt.vi);
    std::optional<FusionModel> model;
    ModelConfig cfg;
    if (!opt.ckpt.empty()) {
      model = load_checkpoint(opt.ckpt);
      cfg = model->config;
      ir = fit_to_geometry(ir, cfg.geometry);
      vi = fit_to_geometry(vi, cfg.geometry);
    } else {
      cfg.geometry = PatchGeometry::for_image(static_cast<int>(ir.rows()), static_cast<int>(ir.cols()));
    }
    const PatchMatrix m_ir = extract_patches(ir, cfg.geometry);
    const PatchMatrix m_vi = extract_patches(vi, cfg.geometry);
    const CompositeCovariance cov = composite_covariance(m_ir.rows, m_vi.rows, cfg.cov_eps, cfg.strategy);
    const std::filesystem::path prefix(opt.out_prefix);
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
    write_heatmap_and_dump(cov.q_irir(), opt.out_prefix + "_q_irir");
    write_heatmap_and_dump(cov.q_irvi(), opt.out_prefix + "_q_irvi");
    write_heatmap_and_dump(cov.q_viir(), opt.out_prefix + "_q_viir");
    write_heatmap_and_dump(cov.q_vivi(), opt.out_prefix + "_q_vivi");
    write_raw_matrix(cov.spd.matrix(), opt.out_prefix + "_spd.bin");
    out << "quadrants " << cov.n_ir << "x" << cov.n_ir << " written with prefix " << opt.out_prefix << "\n";
    if (model) {
      write_heatmap_and_dump(model->spdnet.infer(cov.spd), opt.out_prefix + "_xk");
      out << "learned weight matrix " << cfg.spd_dim() << "x" << cfg.spd_dim() << " written\n";
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

struct DiagnoseOptions {
  std::string ir;
  std::string vi;
  std::string ckpt;  // optional
  std::string out_csv;
  int neighbors = kDefaultNeighbors;
};

/// <out_csv> holds one row (points, k, ss, imdr, cm_nnr); the sibling
/// <stem>_points.csv holds the 2N points with their modality labels.
inline std::string points_csv_path(const std::string& out_csv) {
  std::filesystem::path p(out_csv);
  return (p.parent_path() / (p.stem().string() + "_points.csv")).string();
}

inline PointSet covariance_point_set(const Image& ir_in, const Image& vi_in, const FusionModel* model) {
  Image ir = ir_in, vi = vi_in;
  ModelConfig cfg;
  if (model) {
    cfg = model->config;
    ir = fit_to_geometry(ir, cfg.geometry);
    vi = fit_to_geometry(vi, cfg.geometry);
  } else {
    cfg.geometry = PatchGeometry::for_image(static_cast<int>(ir.rows()), static_cast<int>(ir.cols()));
  }
  const PatchMatrix m_ir = extract_patches(ir, cfg.geometry);
  const PatchMatrix m_vi = extract_patches(vi, cfg.geometry);
  const CompositeCovariance cov = composite_covariance(m_ir.rows, m_vi.rows, cfg.cov_eps, cfg.strategy);
  PointSet ps;
  ps.points = model ? model->spdnet.infer(cov.spd) : cov.raw;
  ps.labels.resize(static_cast<std::size_t>(ps.points.rows()));
  for (Eigen::Index i = 0; i < ps.points.rows(); ++i) ps.labels[static_cast<std::size_t>(i)] = i < cov.n_ir ? 1 : 2;
  return ps;
}

inline int cmd_diagnose(const DiagnoseOptions& opt, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    if (opt.neighbors < 1) throw Error(ErrorCode::ConfigError, "--k must be >= 1");
    const auto [ir, vi] = load_source_pair(opt.ir, opt.vi);
    std::optional<FusionModel> model;
    if (!opt.ckpt.empty()) model = load_checkpoint(opt.ckpt);
    const PointSet ps = covariance_point_set(ir, vi, model ? &*model : nullptr);
    const double ss = silhouette(ps);
    const double ratio = imdr(ps);
    const double nnr = cm_nnr(ps, opt.neighbors);

    std::ofstream csv = open_csv(opt.out_csv);
    csv << "points,k,ss,imdr,cm_nnr\n";
    csv << ps.points.rows() << "," << opt.neighbors << "," << fmt6(ss) << "," << fmt6(ratio) << "," << fmt6(nnr) << "\n";
    std::ofstream pts = open_csv(points_csv_path(opt.out_csv));
    pts << "label";
    for (Eigen::Index j = 0; j < ps.points.cols(); ++j) pts << ",x" << j;
    pts << "\n";
    for (Eigen::Index i = 0; i < ps.points.rows(); ++i) {
      pts << ps.labels[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < ps.points.cols(); ++j) pts << "," << fmt6(ps.points(i, j));
      pts << "\n";
    }
    out << "ss " << fmt6(ss) << "\nimdr " << fmt6(ratio) << "\ncm_nnr " << fmt6(nnr) << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateOptions {
  std::string config;
  std::string grid;     // key=v1,v2,...
  std::string out_csv;  // defaults to <out_dir>/ablation_<key>.csv
};

struct AblationGrid {
  std::string key;
  std::vector<std::string> values;
};

inline AblationGrid parse_grid(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, "--grid must look like key=v1,v2,... got '" + spec + "'");
  AblationGrid g;
  g.key = spec.substr(0, eq);
  if (g.key != "reeig_eps" && g.key != "depth" && g.key != "strategy") {
    throw Error(ErrorCode::ConfigError, "invalid grid key '" + g.key + "' (reeig_eps|depth|strategy)");
  }
  std::stringstream ss(spec.substr(eq + 1));
  std::string v;
  while (std::getline(ss, v, ',')) {
    if (v.empty()) throw Error(ErrorCode::ConfigError, "empty value in --grid " + spec);
    g.values.push_back(v);
  }
  if (g.values.empty()) throw Error(ErrorCode::ConfigError, "--grid " + g.key + " has no values");
  return g;
}

/// Applies one grid value to a copy of the model configuration.
inline ModelConfig apply_grid_value(ModelConfig cfg, const std::string& key, const std::string& value) {
  if (key == "reeig_eps") {
    cfg.reeig_eps = detail::parse_number<double>(key, value);
    if (!(cfg.reeig_eps > 0.0)) throw Error(ErrorCode::ConfigError, "grid reeig_eps must be > 0");
  } else if (key == "depth") {
    cfg.depth = detail::parse_number<int>(key, value);
    if (cfg.depth < 1) throw Error(ErrorCode::ConfigError, "grid depth must be >= 1");
  } else if (key == "strategy") {
    cfg.strategy = parse_cov_strategy(value);
  } else {
    throw Error(ErrorCode::ConfigError, "invalid grid key '" + key + "'");
  }
  return cfg;
}

struct AblationRow {
  std::string value;
  double final_loss = 0.0;
  MetricReport mean;
};

inline std::string ablation_dump_path(const std::string& out_dir, const std::string& key, const std::string& value) {
  return (std::filesystem::path(out_dir) / ("ablate_" + key + "_" + value + "_cov.bin")).string();
}

/// Every grid point starts from the same seed and sees the same pairs in the
/// same order. The raw composite covariance of the first pair is dumped per
/// point.
inline int cmd_ablate(const AblateOptions& opt, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const AblationGrid grid = parse_grid(opt.grid);
    const RunConfig cfg = load_run_config(opt.config);
    std::vector<ModelConfig> points;
    for (const auto& v : grid.values) points.push_back(apply_grid_value(cfg.model, grid.key, v));

    const unsigned threads = thread_cap();
    const DatasetIndex idx = index_dataset(cfg.ir_dir, cfg.vi_dir, cfg.image_size);
    const std::vector<LoadedPair> pairs = load_dataset(idx, cfg.model.geometry, threads);
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<AblationRow> rows;
    for (std::size_t p = 0; p < points.size(); ++p) {
      const ModelConfig& mc = points[p];
      const PatchMatrix m_ir = extract_patches(pairs.front().ir, mc.geometry);
      const PatchMatrix m_vi = extract_patches(pairs.front().vi, mc.geometry);
      write_raw_matrix(composite_covariance(m_ir.rows, m_vi.rows, mc.cov_eps, mc.strategy).raw,
                       ablation_dump_path(cfg.out_dir, grid.key, grid.values[p]));

      FusionModel model = FusionModel::create(mc, cfg.train.seed);
      AblationRow row;
      row.value = grid.values[p];
      train_epochs(model, pairs, cfg.train, [&](const StepRecord& r) { row.final_loss = r.report.loss.total; });
      row.mean = mean_of(evaluate_pairs(model, pairs, threads));
      out << grid.key << "=" << row.value << " final loss " << fmt6(row.final_loss) << "\n";
      rows.push_back(std::move(row));
    }

    const std::string csv_path = opt.out_csv.empty()
                                     ? (std::filesystem::path(cfg.out_dir) / ("ablation_" + grid.key + ".csv")).string()
                                     : opt.out_csv;
    std::ofstream csv = open_csv(csv_path);
    csv << grid.key << ",final_loss";
    for (const char* name : MetricReport::kNames) csv << "," << name;
    csv << "\n";
    for (const auto& r : rows) csv << r.value << "," << fmt6(r.final_loss) << metrics_csv_fields(r.mean) << "\n";
    out << "ablation results -> " << csv_path << "\n";
    return kExitOk;
  });
}

}  // namespace spdfuse
