#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wdm/denoiser.hpp"
#include "wdm/metrics.hpp"
#include "wdm/schedule.hpp"
#include "wdm/synth.hpp"
#include "wdm/trainer.hpp"
#include "wdm/wavelet.hpp"

namespace wdm {

struct DataConfig {
  int hr_height = 64;
  int hr_width = 64;
  int factor = 8;
  // Generated fields may be larger than the HR target and centre-cropped.
  int gen_height = 0;  // 0: same as hr_height
  int gen_width = 0;
  int train_count = 400;
  int test_count = 64;
  std::uint64_t seed = 1;
  double min_nonzero_fraction = 0.5;
  int max_attempts_per_sample = 50;
  StormParams generator;
};

struct ModelConfig {
  std::string transform = "haar-1";
  std::vector<int> widths = {32, 64, 128};
  int blocks_per_stage = 2;
  bool attention = true;
  int embed_dim = 64;
  int groups = 8;
};

struct SamplingConfig {
  int steps = 300;
  std::uint64_t seed = 0;
  int workers = 1;
  int limit = 0;  // 0: every input
};

struct BenchConfig {
  int height = 128;
  int width = 128;
  int samples = 2;
  int steps = 20;
  int repetitions = 5;
  std::uint64_t seed = 0;
  std::vector<std::string> transforms = {"identity", "haar-1", "haar-2"};
};

struct PathConfig {
  std::string data_dir = "work/data";
  std::string run_dir = "work/runs/{transform}";
  std::string bench_dir = "work/bench";
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  NoiseSchedule schedule;
  TrainConfig training;
  int checkpoint_every = 0;  // epochs; 0: only at the end
  long max_steps = 0;        // 0: no cap beyond epochs
  SamplingConfig sampling;
  metrics::MetricConfig evaluation;
  BenchConfig bench;
  PathConfig paths;

  DomainTransform transform() const { return DomainTransform::parse(model.transform); }
  Architecture architecture() const;
  std::filesystem::path data_dir() const;
  std::filesystem::path run_dir() const;
  std::filesystem::path bench_dir() const;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> transform;
};

enum class Command { kGenData, kTrain, kSample, kEvaluate, kBench };

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
void apply_overrides(RunConfig& cfg, const Overrides& o, Command cmd);

/// Fully resolved config as pretty JSON (echoed next to every output).
std::string dump_config(const RunConfig& cfg);

}  // namespace wdm
