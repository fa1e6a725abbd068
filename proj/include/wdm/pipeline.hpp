#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wdm/config.hpp"
#include "wdm/engine.hpp"
#include "wdm/metrics.hpp"

namespace wdm {

namespace fs = std::filesystem;

/// Contents of <data_dir>/manifest.json.
struct DatasetManifest {
  int hr_height = 0;
  int hr_width = 0;
  int factor = 1;
  int train_count = 0;
  int test_count = 0;
  std::uint64_t seed = 0;
  NormStats norm;
};

DatasetManifest read_manifest(const fs::path& data_dir);

struct GenDataResult {
  DatasetManifest manifest;
  long candidates = 0;  // generator draws, including rejected ones
};

struct TrainResult {
  long steps = 0;
  int epochs = 0;
  LossBreakdown last;
  fs::path checkpoint;
};

struct SampleResult {
  std::vector<fs::path> outputs;
};

struct EvaluateResult {
  metrics::MetricReport model;
  std::optional<metrics::MetricReport> bicubic;
  fs::path report;
};

struct BenchEntry {
  std::string transform;
  Eigen::Index parameters = 0;
  std::vector<double> seconds;
  double mean = 0.0;
  double std = 0.0;
  double speedup = 0.0;  // identity mean / this mean
};

struct BenchResult {
  std::vector<BenchEntry> entries;
  int repetitions = 0;
  fs::path summary;
};

/// Where command progress goes; defaults to std::cerr.
void set_log_stream(std::ostream* os);

GenDataResult cmd_gen_data(const RunConfig& cfg);
TrainResult cmd_train(const RunConfig& cfg, bool resume = false);
SampleResult cmd_sample(const RunConfig& cfg, std::optional<fs::path> input_dir = std::nullopt,
                        std::optional<fs::path> output_dir = std::nullopt);
EvaluateResult cmd_evaluate(const RunConfig& cfg, std::optional<fs::path> pred_dir = std::nullopt,
                            std::optional<fs::path> truth_dir = std::nullopt,
                            std::optional<fs::path> lr_dir = std::nullopt);
BenchResult cmd_bench(const RunConfig& cfg);

/// Model assembled from a checkpoint (EMA weights) for inference.
DiffusionModel load_model(const fs::path& checkpoint);

}  // namespace wdm
