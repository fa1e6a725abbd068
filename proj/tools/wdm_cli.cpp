#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "wdm/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kDiverged = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> transform;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Run config (JSON)")->required();
  sub->add_option("--seed", c.seed, "Override the seed used by this command");
  sub->add_option("--steps", c.steps, "Override sampler steps (train: cap on optimiser steps)");
  sub->add_option("--transform", c.transform, "identity | haar-1 | haar-2");
}

wdm::RunConfig resolve(const Common& c, wdm::Command cmd) {
  wdm::RunConfig cfg = wdm::load_config(c.config);
  wdm::apply_overrides(cfg, {c.seed, c.steps, c.transform}, cmd);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet-domain diffusion downscaling of precipitation fields"};
  app.require_subcommand(1);

  Common gen, train, sample, evaluate, bench;
  bool resume = false;
  std::optional<std::string> sample_in, sample_out, eval_pred, eval_truth, eval_lr;

  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic HR/LR dataset");
  add_common(gen_cmd, gen);
  auto* train_cmd = app.add_subcommand("train", "Train the conditional denoiser");
  add_common(train_cmd, train);
  train_cmd->add_flag("--resume", resume, "Continue from the run's checkpoint");
  auto* sample_cmd = app.add_subcommand("sample", "Downscale LR fields with a trained model");
  add_common(sample_cmd, sample);
  sample_cmd->add_option("--input", sample_in, "Directory of LR .wgf files (default: test split)");
  sample_cmd->add_option("--output", sample_out, "Output directory (default: <run>/samples)");
  auto* eval_cmd = app.add_subcommand("evaluate", "Score samples against ground truth and bicubic");
  add_common(eval_cmd, evaluate);
  eval_cmd->add_option("--pred", eval_pred, "Predicted .wgf directory");
  eval_cmd->add_option("--truth", eval_truth, "Ground-truth HR .wgf directory");
  eval_cmd->add_option("--lr", eval_lr, "LR inputs for the bicubic baseline");
  auto* bench_cmd = app.add_subcommand("bench", "Time sampling across domain transforms");
  add_common(bench_cmd, bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto path = [](const std::optional<std::string>& s) -> std::optional<std::filesystem::path> {
    if (s) return std::filesystem::path(*s);
    return std::nullopt;
  };

  try {
    if (*gen_cmd) {
      const auto r = wdm::cmd_gen_data(resolve(gen, wdm::Command::kGenData));
      std::cout << "norm mean " << r.manifest.norm.mean << " std " << r.manifest.norm.std << "\n";
    } else if (*train_cmd) {
      const auto r = wdm::cmd_train(resolve(train, wdm::Command::kTrain), resume);
      std::cout << "trained " << r.steps << " steps -> " << r.checkpoint.string() << "\n";
    } else if (*sample_cmd) {
      wdm::cmd_sample(resolve(sample, wdm::Command::kSample), path(sample_in), path(sample_out));
    } else if (*eval_cmd) {
      const auto r =
          wdm::cmd_evaluate(resolve(evaluate, wdm::Command::kEvaluate), path(eval_pred), path(eval_truth), path(eval_lr));
      std::cout << "report: " << r.report.string() << "\n";
    } else if (*bench_cmd) {
      const auto r = wdm::cmd_bench(resolve(bench, wdm::Command::kBench));
      for (const auto& e : r.entries)
        std::cout << e.transform << ": " << e.mean << " s (x" << e.speedup << " vs identity)\n";
    }
  } catch (const wdm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const wdm::ArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const wdm::NumericalDivergence& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
