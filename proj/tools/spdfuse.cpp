// spdfuse: train, fuse, evaluate and inspect SPD-manifold fusion models.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "spdfuse/commands.hpp"

namespace {

void add_noise_flags(CLI::App* cmd, spdfuse::NoiseOptions& noise) {
  cmd->add_option("--noise", noise.kind, "Corrupt both sources before fusing")
      ->check(CLI::IsMember({"gaussian", "salt_pepper"}));
  cmd->add_option("--noise-level", noise.level, "Noise std (gaussian) or pixel fraction (salt_pepper)");
  cmd->add_option("--noise-seed", noise.seed, "Noise seed; the visible image uses seed + 1");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SPD-manifold infrared/visible image fusion"};
  app.require_subcommand(1);

  spdfuse::TrainOptions train;
  auto* c_train = app.add_subcommand("train", "Train a model from a config file");
  c_train->add_option("--config", train.config, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
  c_train->add_option("--resume", train.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);

  spdfuse::FuseOptions fuse;
  auto* c_fuse = app.add_subcommand("fuse", "Fuse one infrared/visible pair");
  c_fuse->add_option("--ckpt", fuse.ckpt, "Model checkpoint")->required();
  c_fuse->add_option("--ir", fuse.ir, "Infrared image")->required();
  c_fuse->add_option("--vi", fuse.vi, "Visible image")->required();
  c_fuse->add_option("--out", fuse.out, "Fused output (.pgm or .png)")->required();
  add_noise_flags(c_fuse, fuse.noise);

  spdfuse::EvalOptions eval;
  auto* c_eval = app.add_subcommand("eval", "Fuse and score every pair of a dataset");
  c_eval->add_option("--ckpt", eval.ckpt, "Model checkpoint")->required();
  c_eval->add_option("--ir-dir", eval.ir_dir, "Infrared image directory")->required();
  c_eval->add_option("--vi-dir", eval.vi_dir, "Visible image directory")->required();
  c_eval->add_option("--out-csv", eval.out_csv, "Metrics CSV")->required();
  add_noise_flags(c_eval, eval.noise);

  spdfuse::InspectOptions inspect;
  auto* c_inspect = app.add_subcommand("inspect-cov", "Dump composite covariance quadrants");
  c_inspect->add_option("--ir", inspect.ir, "Infrared image")->required();
  c_inspect->add_option("--vi", inspect.vi, "Visible image")->required();
  c_inspect->add_option("--out-prefix", inspect.out_prefix, "Output path prefix")->required();
  c_inspect->add_option("--ckpt", inspect.ckpt, "Also dump the learned weight matrix");

  spdfuse::DiagnoseOptions diagnose;
  auto* c_diag = app.add_subcommand("diagnose", "Mixing diagnostics of covariance rows");
  c_diag->add_option("--ir", diagnose.ir, "Infrared image")->required();
  c_diag->add_option("--vi", diagnose.vi, "Visible image")->required();
  c_diag->add_option("--ckpt", diagnose.ckpt, "Use network-transformed rows");
  c_diag->add_option("--out-csv", diagnose.out_csv, "Diagnostics CSV")->required();
  c_diag->add_option("--k", diagnose.neighbors, "Neighbours for CM-NNR")->capture_default_str();

  spdfuse::AblateOptions ablate;
  auto* c_ablate = app.add_subcommand("ablate", "Train and score one model per grid value");
  c_ablate->add_option("--config", ablate.config, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
  c_ablate->add_option("--grid", ablate.grid, "reeig_eps=..., depth=... or strategy=...")->required();
  c_ablate->add_option("--out-csv", ablate.out_csv, "Results CSV (default <out_dir>/ablation_<key>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? spdfuse::kExitOk : spdfuse::kExitUsage;
  }

  if (*c_train) return spdfuse::cmd_train(train, std::cout, std::cerr);
  if (*c_fuse) return spdfuse::cmd_fuse(fuse, std::cout, std::cerr);
  if (*c_eval) return spdfuse::cmd_eval(eval, std::cout, std::cerr);
  if (*c_inspect) return spdfuse::cmd_inspect_cov(inspect, std::cout, std::cerr);
  if (*c_diag) return spdfuse::cmd_diagnose(diagnose, std::cout, std::cerr);
  if (*c_ablate) return spdfuse::cmd_ablate(ablate, std::cout, std::cerr);
  return spdfuse::kExitUsage;
}
