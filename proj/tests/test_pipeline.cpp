#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "test_util.hpp"
#include "wdm/checkpoint.hpp"
#include "wdm/io.hpp"
#include "wdm/pipeline.hpp"

using namespace wdm;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Drops the trailing wall_time column of a training log.
std::string strip_wall_time(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

class Pipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("wdm_pipeline_" + std::string(info->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    static std::ostringstream sink;
    set_log_stream(&sink);
  }
  void TearDown() override { fs::remove_all(root_); }

  json base_json(const std::string& tag = "a") const {
    return {
        {"data", {{"hr_height", 32}, {"hr_width", 32}, {"factor", 4}, {"train_count", 6}, {"test_count", 3},
                  {"seed", 5}, {"min_nonzero_fraction", 0.5}}},
        {"model", {{"transform", "haar-1"}, {"widths", {8, 16}}, {"blocks_per_stage", 1}, {"embed_dim", 8},
                   {"groups", 4}}},
        {"training", {{"epochs", 2}, {"batch_size", 4}, {"learning_rate", 1e-3}, {"seed", 3}}},
        {"sampling", {{"steps", 4}, {"seed", 9}}},
        {"bench", {{"height", 32}, {"width", 32}, {"samples", 1}, {"steps", 3}, {"repetitions", 3}}},
        {"paths", {{"data_dir", (root_ / "data").string()},
                   {"run_dir", (root_ / ("runs_" + tag) / "{transform}").string()},
                   {"bench_dir", (root_ / "bench").string()}}}};
  }
  RunConfig config(const std::string& tag = "a") const { return parse_config(base_json(tag).dump()); }

  fs::path write_config(const json& j, const std::string& name = "cfg.json") const {
    const fs::path p = root_ / name;
    io::write_text(p, j.dump(2));
    return p;
  }

  fs::path root_;
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WDM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ------------------------------------------------------------------------- io

TEST_F(Pipeline, WgfRoundTripIsExact) {
  const GridField f = testing_util::random_field(7, 5, 1);
  io::write_wgf(root_ / "f.wgf", f);
  const GridField g = io::read_wgf(root_ / "f.wgf");
  EXPECT_EQ(g.height(), 7);
  EXPECT_EQ(g.width(), 5);
  EXPECT_TRUE((f.values == g.values).all());
  EXPECT_EQ(g.value_max, f.value_max);
}

TEST_F(Pipeline, WgfRejectsCorruptFiles) {
  io::write_text(root_ / "bad.wgf", "NOPE0000000000000000");
  EXPECT_THROW(io::read_wgf(root_ / "bad.wgf"), FormatError);
  io::write_wgf(root_ / "f.wgf", testing_util::random_field(4, 4, 2));
  const std::string bytes = slurp(root_ / "f.wgf");
  io::write_text(root_ / "short.wgf", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(io::read_wgf(root_ / "short.wgf"), FormatError);
}

TEST_F(Pipeline, PgmHeaderAndScaling) {
  Plane<float> v(1, 4);
  v << 0.0f, 40.0f, 80.0f, 95.0f;
  io::write_pgm(root_ / "f.pgm", GridField(v));
  const std::string bytes = slurp(root_ / "f.pgm");
  const std::string header = "P5\n4 1\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 4);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  const auto px = [&](int i) { return static_cast<unsigned char>(bytes[header.size() + i]); };
  EXPECT_EQ(px(0), 0);
  EXPECT_EQ(px(1), 128);
  EXPECT_EQ(px(2), 255);
  EXPECT_EQ(px(3), 255);
}

// --------------------------------------------------------------------- config

TEST_F(Pipeline, ConfigRoundTripAndErrors) {
  const RunConfig c = config();
  EXPECT_EQ(dump_config(parse_config(dump_config(c))), dump_config(c));
  EXPECT_EQ(c.run_dir(), root_ / "runs_a" / "haar-1");

  json j = base_json();
  j["model"]["widht"] = 3;
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  j = base_json();
  j["model"]["transform"] = "haar-9";
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  j = base_json();
  j["data"]["factor"] = 3;  // 32 is not a multiple of 3
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  j = base_json();
  j["sampling"]["steps"] = 0;
  EXPECT_THROW(parse_config(j.dump()), ConfigError);
  EXPECT_THROW(parse_config("{ not json"), ConfigError);
  EXPECT_THROW(load_config(root_ / "missing.json"), ConfigError);
}

TEST_F(Pipeline, DeskConfigParses) {
  const RunConfig c = load_config(fs::path(WDM_SOURCE_DIR) / "configs" / "desk.json");
  EXPECT_EQ(c.model.transform, "haar-1");
  EXPECT_EQ(c.sampling.steps, 300);
  EXPECT_EQ(c.data.factor, 8);
}

TEST_F(Pipeline, OverridesTargetTheCommand) {
  RunConfig c = config();
  apply_overrides(c, {7, 11, "haar-2"}, Command::kSample);
  EXPECT_EQ(c.sampling.seed, 7u);
  EXPECT_EQ(c.sampling.steps, 11);
  EXPECT_EQ(c.model.transform, "haar-2");
  EXPECT_EQ(c.run_dir(), root_ / "runs_a" / "haar-2");

  c = config();
  apply_overrides(c, {8, 5, std::nullopt}, Command::kTrain);
  EXPECT_EQ(c.training.seed, 8u);
  EXPECT_EQ(c.max_steps, 5);
  EXPECT_EQ(c.sampling.steps, 4);

  c = config();
  apply_overrides(c, {2, 6, std::nullopt}, Command::kBench);
  EXPECT_EQ(c.bench.seed, 2u);
  EXPECT_EQ(c.bench.steps, 6);

  c = config();
  apply_overrides(c, {4, std::nullopt, std::nullopt}, Command::kGenData);
  EXPECT_EQ(c.data.seed, 4u);

  c = config();
  EXPECT_THROW(apply_overrides(c, {std::nullopt, 0, std::nullopt}, Command::kSample), ConfigError);
  EXPECT_THROW(apply_overrides(c, {std::nullopt, std::nullopt, "db4"}, Command::kSample), ConfigError);
}

// ------------------------------------------------------------------- gen-data

TEST_F(Pipeline, GenDataLayoutAndManifest) {
  const RunConfig c = config();
  const GenDataResult r = cmd_gen_data(c);
  EXPECT_GE(r.candidates, 9);
  const auto train_hr = io::list_files(c.data_dir() / "train" / "hr", ".wgf");
  ASSERT_EQ(train_hr.size(), 6u);
  EXPECT_EQ(io::list_files(c.data_dir() / "test" / "lr", ".wgf").size(), 3u);
  EXPECT_EQ(train_hr.front().filename(), "0000.wgf");

  double sum = 0, n = 0;
  std::vector<GridField> fields;
  for (const auto& p : train_hr) {
    const GridField hr = io::read_wgf(p);
    const GridField lr = io::read_wgf(c.data_dir() / "train" / "lr" / p.filename());
    EXPECT_EQ(hr.height(), 32);
    EXPECT_EQ(lr.height(), 8);
    EXPECT_TRUE(passes_event_filter(hr, 0.5));
    EXPECT_LT((block_average_downsample(hr, 4).values - lr.values).abs().maxCoeff(), 1e-5f);
    for (Eigen::Index k = 0; k < hr.size(); ++k) sum += hr.values.data()[k];
    n += double(hr.size());
    fields.push_back(hr);
  }
  const double mean = sum / n;
  double ss = 0;
  for (const auto& f : fields)
    for (Eigen::Index k = 0; k < f.size(); ++k) ss += std::pow(f.values.data()[k] - mean, 2);
  const DatasetManifest m = read_manifest(c.data_dir());
  EXPECT_NEAR(m.norm.mean, mean, 1e-9);
  EXPECT_NEAR(m.norm.std, std::sqrt(ss / n), 1e-9);
  EXPECT_EQ(m.train_count, 6);
  EXPECT_EQ(m.factor, 4);
}

TEST_F(Pipeline, GenDataIsDeterministic) {
  RunConfig c = config();
  cmd_gen_data(c);
  const std::string first = slurp(c.data_dir() / "test" / "hr" / "0002.wgf");
  const std::string manifest = slurp(c.data_dir() / "manifest.json");
  cmd_gen_data(c);
  EXPECT_EQ(slurp(c.data_dir() / "test" / "hr" / "0002.wgf"), first);
  EXPECT_EQ(slurp(c.data_dir() / "manifest.json"), manifest);
  c.data.seed = 6;
  cmd_gen_data(c);
  EXPECT_NE(slurp(c.data_dir() / "test" / "hr" / "0002.wgf"), first);
}

TEST_F(Pipeline, GenDataRejectsImpossibleFilter) {
  json j = base_json();
  j["data"]["min_nonzero_fraction"] = 1.0;
  j["data"]["max_attempts_per_sample"] = 3;
  j["data"]["generator"] = {{"background", 0.0}, {"min_cells", 1}, {"max_cells", 1}};
  EXPECT_THROW(cmd_gen_data(parse_config(j.dump())), DataError);
}

// ---------------------------------------------------------------------- train

TEST_F(Pipeline, TrainWritesCheckpointAndLog) {
  const RunConfig c = config();
  cmd_gen_data(c);
  const TrainResult r = cmd_train(c);
  EXPECT_EQ(r.steps, 4);  // 2 epochs x ceil(6 / 4) batches
  EXPECT_EQ(r.epochs, 2);
  EXPECT_TRUE(fs::exists(c.run_dir() / "checkpoint.wdmc"));
  const std::string log = slurp(c.run_dir() / "train_log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "step,epoch,cond,tv,total,sigma,wall_time");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 5);
  const DiffusionModel m = load_model(c.run_dir() / "checkpoint.wdmc");
  EXPECT_EQ(m.transform.name(), "haar-1");
  EXPECT_EQ(m.factor, 4);
  EXPECT_EQ(m.weights.size(), UNet(c.architecture()).parameter_count());
}

TEST_F(Pipeline, TrainIsDeterministic) {
  const RunConfig a = config("a"), b = config("b");
  cmd_gen_data(a);
  cmd_train(a);
  cmd_train(b);
  EXPECT_EQ(slurp(a.run_dir() / "checkpoint.wdmc"), slurp(b.run_dir() / "checkpoint.wdmc"));
  EXPECT_EQ(strip_wall_time(slurp(a.run_dir() / "train_log.csv")),
            strip_wall_time(slurp(b.run_dir() / "train_log.csv")));
}

// Stopping mid-epoch and resuming must land on the same state as one run.
TEST_F(Pipeline, ResumeMatchesUninterruptedRun) {
  const RunConfig straight = config("a");
  RunConfig split = config("b");
  cmd_gen_data(straight);
  cmd_train(straight);
  split.max_steps = 3;
  EXPECT_EQ(cmd_train(split).steps, 3);
  split.max_steps = 0;
  const TrainResult r = cmd_train(split, true);
  EXPECT_EQ(r.steps, 4);
  EXPECT_EQ(r.epochs, 2);
  const Checkpoint x = load_checkpoint(straight.run_dir() / "checkpoint.wdmc");
  const Checkpoint y = load_checkpoint(split.run_dir() / "checkpoint.wdmc");
  EXPECT_TRUE((x.state.params.array() == y.state.params.array()).all());
  EXPECT_TRUE((x.state.ema.array() == y.state.ema.array()).all());
  EXPECT_TRUE((x.state.adam_v.array() == y.state.adam_v.array()).all());
  EXPECT_EQ(strip_wall_time(slurp(straight.run_dir() / "train_log.csv")),
            strip_wall_time(slurp(split.run_dir() / "train_log.csv")));
}

TEST_F(Pipeline, ResumeRejectsOtherArchitecture) {
  RunConfig c = config();
  cmd_gen_data(c);
  c.max_steps = 1;
  cmd_train(c);
  c.model.widths = {8, 8};
  EXPECT_THROW(cmd_train(c, true), ConfigError);
}

TEST_F(Pipeline, TrainNeedsData) { EXPECT_THROW(cmd_train(config()), DataError); }

// --------------------------------------------------------------------- sample

TEST_F(Pipeline, SampleCardinalityClippingAndSeeds) {
  RunConfig c = config();
  cmd_gen_data(c);
  cmd_train(c);
  const SampleResult r = cmd_sample(c);
  ASSERT_EQ(r.outputs.size(), 3u);
  std::vector<GridField> outs;
  for (const auto& p : r.outputs) {
    EXPECT_TRUE(fs::exists(fs::path(p).replace_extension(".pgm")));
    outs.push_back(io::read_wgf(p));
    EXPECT_EQ(outs.back().height(), 32);
    EXPECT_GE(outs.back().values.minCoeff(), 0.0f);
    EXPECT_LE(outs.back().values.maxCoeff(), 80.0f);
  }
  // Same LR input at two positions still gets two different noise streams.
  fs::create_directories(root_ / "dup");
  fs::copy_file(c.data_dir() / "test" / "lr" / "0000.wgf", root_ / "dup" / "0000.wgf");
  fs::copy_file(c.data_dir() / "test" / "lr" / "0000.wgf", root_ / "dup" / "0001.wgf");
  const SampleResult d = cmd_sample(c, root_ / "dup", root_ / "dup_out");
  EXPECT_NE(slurp(d.outputs[0]), slurp(d.outputs[1]));

  c.sampling.limit = 2;
  EXPECT_EQ(cmd_sample(c, std::nullopt, root_ / "limited").outputs.size(), 2u);
}

TEST_F(Pipeline, SampleIndependentOfWorkerCount) {
  RunConfig c = config();
  cmd_gen_data(c);
  cmd_train(c);
  const SampleResult one = cmd_sample(c, std::nullopt, root_ / "w1");
  c.sampling.workers = 2;
  const SampleResult two = cmd_sample(c, std::nullopt, root_ / "w2");
  ASSERT_EQ(one.outputs.size(), two.outputs.size());
  for (std::size_t i = 0; i < one.outputs.size(); ++i) EXPECT_EQ(slurp(one.outputs[i]), slurp(two.outputs[i]));
}

TEST_F(Pipeline, SampleTransformMismatch) {
  RunConfig c = config();
  cmd_gen_data(c);
  cmd_train(c);
  fs::create_directories(root_ / "runs_a" / "haar-2");
  fs::copy_file(c.run_dir() / "checkpoint.wdmc", root_ / "runs_a" / "haar-2" / "checkpoint.wdmc");
  c.model.transform = "haar-2";
  EXPECT_THROW(cmd_sample(c), ConfigError);
}

// ------------------------------------------------------------------- evaluate

TEST_F(Pipeline, EvaluatePerfectPredictions) {
  const RunConfig c = config();
  cmd_gen_data(c);
  const fs::path truth = c.data_dir() / "test" / "hr";
  fs::create_directories(root_ / "perfect" / "samples");
  for (const auto& p : io::list_files(truth, ".wgf")) fs::copy_file(p, root_ / "perfect" / "samples" / p.filename());
  const EvaluateResult r = cmd_evaluate(c, root_ / "perfect" / "samples");
  EXPECT_EQ(r.model.aggregate.mean.rmse, 0.0);
  EXPECT_EQ(r.model.aggregate.psnr_excluded, 3);
  EXPECT_NEAR(r.model.aggregate.mean.ssim, 1.0, 1e-9);
  ASSERT_TRUE(r.bicubic.has_value());
  EXPECT_GT(r.bicubic->aggregate.mean.rmse, 0.0);
  EXPECT_EQ(r.report, root_ / "perfect" / "report.csv");
  const std::string csv = slurp(r.report);
  EXPECT_NE(csv.find("\nhaar-1,mean,"), std::string::npos);
  EXPECT_NE(csv.find("\nbicubic,mean,"), std::string::npos);
  EXPECT_NE(csv.find("\nbicubic,excluded,"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "perfect" / "csi_curve.csv"));
  EXPECT_TRUE(fs::exists(root_ / "perfect" / "csi_curve.ppm"));
  EXPECT_TRUE(fs::exists(root_ / "perfect" / "report_meta.json"));
}

TEST_F(Pipeline, EvaluateMissingGroundTruth) {
  const RunConfig c = config();
  cmd_gen_data(c);
  fs::create_directories(root_ / "p" / "samples");
  io::write_wgf(root_ / "p" / "samples" / "0099.wgf", GridField::zeros(32, 32));
  EXPECT_THROW(cmd_evaluate(c, root_ / "p" / "samples"), DataError);
  EXPECT_THROW(cmd_evaluate(c, root_ / "empty"), DataError);
}

// ---------------------------------------------------------------------- bench

TEST_F(Pipeline, BenchWritesSummary) {
  const RunConfig c = config();
  const BenchResult r = cmd_bench(c);
  ASSERT_EQ(r.entries.size(), 3u);
  EXPECT_EQ(r.entries[0].transform, "identity");
  EXPECT_DOUBLE_EQ(r.entries[0].speedup, 1.0);
  for (const auto& e : r.entries) {
    EXPECT_EQ(e.seconds.size(), 3u);
    EXPECT_GT(e.mean, 0.0);
    EXPECT_GT(e.parameters, 0);
  }
  const std::string csv = slurp(r.summary);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_TRUE(fs::exists(c.bench_dir() / "bench_runs.csv"));
}

// ------------------------------------------------------------------------ cli

TEST_F(Pipeline, CliExitCodes) {
  const fs::path cfg = write_config(base_json());
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("gen-data --config " + (root_ / "nope.json").string()), 2);
  io::write_text(root_ / "broken.json", "{");
  EXPECT_EQ(run_cli("gen-data --config " + (root_ / "broken.json").string()), 2);
  EXPECT_EQ(run_cli("sample --config " + cfg.string() + " --transform haar-5"), 2);
  EXPECT_EQ(run_cli("train --config " + cfg.string()), 3);  // no dataset yet
  EXPECT_EQ(run_cli("gen-data --config " + cfg.string()), 0);
  EXPECT_EQ(run_cli("sample --config " + cfg.string()), 3);  // no checkpoint yet
  EXPECT_EQ(run_cli("train --config " + cfg.string() + " --steps 1"), 0);
  EXPECT_EQ(run_cli("sample --config " + cfg.string() + " --steps 3"), 0);
  EXPECT_EQ(run_cli("evaluate --config " + cfg.string()), 0);
  EXPECT_NE(run_cli("frobnicate"), 0);

  json j = base_json("div");
  j["training"]["learning_rate"] = 1e30;
  EXPECT_EQ(run_cli("train --config " + write_config(j, "div.json").string()), 4);
}
