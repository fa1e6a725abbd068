#include "wdm/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "wdm/checkpoint.hpp"
#include "wdm/io.hpp"
#include "wdm/plot.hpp"
#include "wdm/synth.hpp"

namespace wdm {

using nlohmann::json;

namespace {

std::ostream* g_log = &std::cerr;

std::ostream& log() { return *g_log; }

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

void reset_dir(const fs::path& dir) {
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir);
}

struct Split {
  const char* name;
  int count;
  std::uint64_t tag;
};

struct LoadedPair {
  std::string name;
  GridField hr;
  GridField lr;
};

std::vector<LoadedPair> load_split(const fs::path& data_dir, const char* split) {
  std::vector<LoadedPair> out;
  const fs::path hr_dir = data_dir / split / "hr", lr_dir = data_dir / split / "lr";
  for (const auto& hr_path : io::list_files(hr_dir, ".wgf")) {
    const fs::path lr_path = lr_dir / hr_path.filename();
    if (!fs::exists(lr_path)) throw DataError("missing LR file for " + hr_path.string());
    out.push_back({hr_path.stem().string(), io::read_wgf(hr_path), io::read_wgf(lr_path)});
  }
  if (out.empty()) throw DataError("no samples in " + hr_dir.string());
  return out;
}

std::string fixed(double v, int digits = 8) {
  std::ostringstream ss;
  ss << std::setprecision(digits) << v;
  return ss.str();
}

Checkpoint fresh_checkpoint(const RunConfig& cfg, const DatasetManifest& m, const UNet& net) {
  Checkpoint c;
  c.architecture = net.architecture();
  c.transform = cfg.transform().name();
  c.norm = m.norm;
  c.schedule = cfg.schedule;
  c.factor = m.factor;
  c.hr_height = m.hr_height;
  c.hr_width = m.hr_width;
  c.state = TrainState<float>::fresh(net.init_params<float>(cfg.training.seed));
  return c;
}

}  // namespace

void set_log_stream(std::ostream* os) { g_log = os ? os : &std::cerr; }

DatasetManifest read_manifest(const fs::path& data_dir) {
  const fs::path path = data_dir / "manifest.json";
  if (!fs::exists(path)) throw DataError("no dataset manifest at " + path.string() + " (run gen-data first)");
  try {
    const json j = json::parse(io::read_text(path));
    DatasetManifest m;
    m.hr_height = j.at("hr_height").get<int>();
    m.hr_width = j.at("hr_width").get<int>();
    m.factor = j.at("factor").get<int>();
    m.train_count = j.at("train_count").get<int>();
    m.test_count = j.at("test_count").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.norm = {j.at("norm").at("mean").get<double>(), j.at("norm").at("std").get<double>()};
    return m;
  } catch (const json::exception& e) {
    throw DataError("bad manifest " + path.string() + ": " + e.what());
  }
}

// ------------------------------------------------------------------ gen-data

GenDataResult cmd_gen_data(const RunConfig& cfg) {
  const auto& d = cfg.data;
  const fs::path root = cfg.data_dir();
  const int gh = d.gen_height ? d.gen_height : d.hr_height;
  const int gw = d.gen_width ? d.gen_width : d.hr_width;
  GenDataResult result;
  std::vector<GridField> train_hr;

  for (const Split split : {Split{"train", d.train_count, 0}, Split{"test", d.test_count, 1}}) {
    reset_dir(root / split.name / "hr");
    reset_dir(root / split.name / "lr");
    if (split.count == 0) continue;
    const long budget = long(split.count) * d.max_attempts_per_sample;
    int accepted = 0;
    for (long k = 0; k < budget && accepted < split.count; ++k) {
      const std::uint64_t seed = stream_seed(stream_seed(d.seed, split.tag), static_cast<std::uint64_t>(k));
      ++result.candidates;
      GridField hr = center_crop(synth_storm_field(seed, gh, gw, d.generator), d.hr_height, d.hr_width);
      if (!passes_event_filter(hr, d.min_nonzero_fraction)) continue;
      const GridField lr = block_average_downsample(hr, d.factor);
      const std::string name = index_name(accepted) + ".wgf";
      io::write_wgf(root / split.name / "hr" / name, hr);
      io::write_wgf(root / split.name / "lr" / name, lr);
      if (split.tag == 0) train_hr.push_back(std::move(hr));
      ++accepted;
    }
    if (accepted == 0)
      throw DataError(std::string("gen-data: zero ") + split.name + " samples passed the event filter (fraction " +
                      fixed(d.min_nonzero_fraction) + ")");
    if (accepted < split.count)
      throw DataError(std::string("gen-data: only ") + std::to_string(accepted) + " of " +
                      std::to_string(split.count) + " " + split.name + " samples passed the event filter");
    log() << "gen-data: " << split.name << ' ' << accepted << " samples\n";
  }

  DatasetManifest& m = result.manifest;
  m.hr_height = d.hr_height;
  m.hr_width = d.hr_width;
  m.factor = d.factor;
  m.train_count = d.train_count;
  m.test_count = d.test_count;
  m.seed = d.seed;
  m.norm = compute_norm_stats(std::span<const GridField>(train_hr));
  const json manifest = {{"format", "wdm-dataset-1"},
                         {"hr_height", m.hr_height},
                         {"hr_width", m.hr_width},
                         {"lr_height", m.hr_height / m.factor},
                         {"lr_width", m.hr_width / m.factor},
                         {"factor", m.factor},
                         {"train_count", m.train_count},
                         {"test_count", m.test_count},
                         {"seed", m.seed},
                         {"candidates", result.candidates},
                         {"min_nonzero_fraction", d.min_nonzero_fraction},
                         {"norm", {{"mean", m.norm.mean}, {"std", m.norm.std}}}};
  io::write_text(root / "manifest.json", manifest.dump(2) + "\n");
  io::write_text(root / "config.json", dump_config(cfg));
  return result;
}

// --------------------------------------------------------------------- train

TrainResult cmd_train(const RunConfig& cfg, bool resume) {
  const DatasetManifest manifest = read_manifest(cfg.data_dir());
  if (manifest.hr_height != cfg.data.hr_height || manifest.hr_width != cfg.data.hr_width ||
      manifest.factor != cfg.data.factor)
    throw ConfigError("train: dataset dims/factor differ from the config (regenerate data)");
  const DomainTransform transform = cfg.transform();
  const UNet net(cfg.architecture());
  const fs::path run = cfg.run_dir();
  const fs::path ckpt_path = run / "checkpoint.wdmc";
  const fs::path log_path = run / "train_log.csv";
  fs::create_directories(run);

  Checkpoint ckpt;
  if (resume && fs::exists(ckpt_path)) {
    ckpt = load_checkpoint(ckpt_path);
    if (ckpt.transform != transform.name()) throw ConfigError("train: checkpoint transform differs from config");
    if (ckpt.state.params.size() != net.parameter_count())
      throw ConfigError("train: checkpoint architecture differs from config");
    log() << "train: resuming at step " << ckpt.state.step << ", epoch " << ckpt.epochs_done << "\n";
  } else {
    ckpt = fresh_checkpoint(cfg, manifest, net);
    io::write_text(log_path, "step,epoch,cond,tv,total,sigma,wall_time\n");
  }
  io::write_text(run / "config.json", dump_config(cfg));

  std::vector<TrainingExample<float>> examples;
  for (const auto& p : load_split(cfg.data_dir(), "train"))
    examples.push_back(make_example(p.hr, p.lr, manifest.factor, ckpt.norm, transform));

  std::ofstream log_csv(log_path, std::ios::app);
  if (!log_csv) throw DataError("cannot append to " + log_path.string());
  const TrainConfig& tc = cfg.training;
  const auto n = static_cast<int>(examples.size());
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.checkpoint = ckpt_path;

  // Position is derived from the step counter so a resumed run continues
  // mid-epoch exactly where the previous one stopped.
  const long per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  for (int epoch = static_cast<int>(ckpt.state.step / per_epoch); epoch < tc.epochs; ++epoch) {
    if (cfg.max_steps > 0 && ckpt.state.step >= cfg.max_steps) break;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(stream_seed(tc.seed, 0x5EED), static_cast<std::uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.engine()() % std::uint64_t(i + 1)]);

    double epoch_loss = 0.0;
    int batches = 0;
    long b = ckpt.state.step - static_cast<long>(epoch) * per_epoch;
    for (; b < per_epoch; ++b) {
      if (cfg.max_steps > 0 && ckpt.state.step >= cfg.max_steps) break;
      const int b0 = static_cast<int>(b) * tc.batch_size;
      std::vector<TrainingExample<float>> batch;
      for (int k = b0; k < std::min(n, b0 + tc.batch_size); ++k) batch.push_back(examples[order[k]]);
      LossBreakdown loss;
      try {
        loss = train_step(net, cfg.schedule, tc, transform, ckpt.state, std::span<const TrainingExample<float>>(batch));
      } catch (const NumericalDivergence&) {
        log_csv.flush();
        throw;
      }
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log_csv << ckpt.state.step << ',' << epoch << ',' << fixed(loss.cond) << ',' << fixed(loss.tv) << ','
              << fixed(loss.total) << ',' << fixed(loss.sigma) << ',' << fixed(wall, 6) << '\n';
      epoch_loss += loss.total;
      ++batches;
      result.last = loss;
    }
    if (b < per_epoch) break;
    ckpt.epochs_done = epoch + 1;
    log() << "train: epoch " << epoch + 1 << "/" << tc.epochs << " mean loss " << fixed(epoch_loss / batches, 6)
          << " (step " << ckpt.state.step << ")\n";
    if (cfg.checkpoint_every > 0 && ckpt.epochs_done % cfg.checkpoint_every == 0) save_checkpoint(ckpt_path, ckpt);
  }
  save_checkpoint(ckpt_path, ckpt);
  result.steps = ckpt.state.step;
  result.epochs = ckpt.epochs_done;
  return result;
}

// -------------------------------------------------------------------- sample

DiffusionModel load_model(const fs::path& checkpoint) {
  Checkpoint c = load_checkpoint(checkpoint);
  DomainTransform t;
  try {
    t = DomainTransform::parse(c.transform);
  } catch (const ArgumentError& e) {
    throw FormatError(e.what());
  }
  return DiffusionModel{UNet(c.architecture), std::move(c.state.ema), c.schedule, t, c.norm, c.factor};
}

SampleResult cmd_sample(const RunConfig& cfg, std::optional<fs::path> input_dir, std::optional<fs::path> output_dir) {
  const fs::path run = cfg.run_dir();
  const fs::path ckpt_path = run / "checkpoint.wdmc";
  if (!fs::exists(ckpt_path)) throw DataError("no checkpoint at " + ckpt_path.string() + " (run train first)");
  const DiffusionModel model = load_model(ckpt_path);
  if (model.transform.name() != cfg.transform().name())
    throw ConfigError("sample: checkpoint transform " + model.transform.name() + " does not match config " +
                      cfg.transform().name());

  const fs::path in = input_dir.value_or(cfg.data_dir() / "test" / "lr");
  const fs::path out = output_dir.value_or(run / "samples");
  auto inputs = io::list_files(in, ".wgf");
  if (inputs.empty()) throw DataError("sample: no .wgf inputs in " + in.string());
  if (cfg.sampling.limit > 0 && inputs.size() > std::size_t(cfg.sampling.limit)) inputs.resize(cfg.sampling.limit);
  reset_dir(out);

  std::vector<GridField> lr;
  for (const auto& p : inputs) lr.push_back(io::read_wgf(p));
  for (const auto& f : lr) prepare_condition(model, f);

  SampleResult result;
  for (const auto& p : inputs) result.outputs.push_back(out / p.filename());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        const GridField hr = downscale(lr[i], model, cfg.sampling.steps, stream_seed(cfg.sampling.seed, i));
        io::write_wgf(result.outputs[i], hr);
        auto pgm = result.outputs[i];
        io::write_pgm(pgm.replace_extension(".pgm"), hr);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = inputs.size();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(cfg.sampling.workers, static_cast<int>(inputs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  io::write_text(out / "config.json", dump_config(cfg));
  log() << "sample: wrote " << result.outputs.size() << " fields to " << out.string() << "\n";
  return result;
}

// ------------------------------------------------------------------ evaluate

EvaluateResult cmd_evaluate(const RunConfig& cfg, std::optional<fs::path> pred_dir, std::optional<fs::path> truth_dir,
                            std::optional<fs::path> lr_dir) {
  const fs::path pred = pred_dir.value_or(cfg.run_dir() / "samples");
  const fs::path truth = truth_dir.value_or(cfg.data_dir() / "test" / "hr");
  const fs::path lr = lr_dir.value_or(cfg.data_dir() / "test" / "lr");
  const fs::path out = pred_dir ? pred.parent_path() : cfg.run_dir();

  const auto pred_files = io::list_files(pred, ".wgf");
  if (pred_files.empty()) throw DataError("evaluate: no predictions in " + pred.string());
  std::vector<std::string> missing;
  for (const auto& p : pred_files)
    if (!fs::exists(truth / p.filename())) missing.push_back(p.filename().string());
  if (!missing.empty()) {
    std::string msg = "evaluate: no ground truth for:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  const bool have_lr = fs::is_directory(lr);
  std::vector<GridField> preds, truths, bicubic;
  for (const auto& p : pred_files) {
    preds.push_back(io::read_wgf(p));
    truths.push_back(io::read_wgf(truth / p.filename()));
    if (preds.back().height() != truths.back().height() || preds.back().width() != truths.back().width())
      throw DataError("evaluate: shape mismatch for " + p.filename().string());
    if (have_lr) {
      const fs::path lp = lr / p.filename();
      if (!fs::exists(lp)) throw DataError("evaluate: missing LR input " + lp.string());
      const GridField l = io::read_wgf(lp);
      if (truths.back().height() % l.height() || truths.back().width() % l.width() ||
          truths.back().height() / l.height() != truths.back().width() / l.width())
        throw DataError("evaluate: LR dims are not an integer fraction of HR for " + lp.string());
      GridField up = bicubic_upsample(l, truths.back().height() / l.height());
      bicubic.push_back(clip(up, 0.0f, up.value_max));
    }
  }

  auto run = [&](const std::vector<GridField>& fields) {
    std::vector<metrics::NamedPair> pairs;
    for (std::size_t i = 0; i < fields.size(); ++i)
      pairs.push_back({pred_files[i].stem().string(), &fields[i], &truths[i]});
    return metrics::evaluate_set(pairs, cfg.evaluation);
  };

  EvaluateResult result;
  result.model = run(preds);
  if (have_lr) result.bicubic = run(bicubic);

  const std::string method = cfg.transform().name();
  std::ostringstream csv;
  csv << metrics::report_header() << '\n';
  metrics::write_report_rows(csv, method, result.model);
  if (result.bicubic) metrics::write_report_rows(csv, "bicubic", *result.bicubic);
  result.report = out / "report.csv";
  io::write_text(result.report, csv.str());

  std::vector<std::pair<std::string, const metrics::MetricReport*>> curves = {{method, &result.model}};
  if (result.bicubic) curves.emplace_back("bicubic", &*result.bicubic);
  std::ostringstream curve;
  metrics::write_csi_curve(curve, curves);
  io::write_text(out / "csi_curve.csv", curve.str());

  std::vector<double> xs(metrics::kCsiThresholds.begin(), metrics::kCsiThresholds.end());
  std::vector<plot::Series> series;
  for (const auto& [name, r] : curves) {
    plot::Series s{name, {}};
    for (const auto& c : r->aggregate.mean.csi) s.y.push_back(c ? *c : std::nan(""));
    series.push_back(std::move(s));
  }
  plot::write_line_chart(out / "csi_curve.ppm", xs, series);

  const json meta = {{"report_format", "wdm-metrics-1"},
                     {"quantile_step", cfg.evaluation.quantile_step},
                     {"psnr", cfg.evaluation.psnr_squared_max ? "10*log10(MAX^2/MSE)" : "10*log10(MAX/MSE)"},
                     {"value_max", cfg.evaluation.value_max},
                     {"ssim_window", cfg.evaluation.ssim_window},
                     {"hi_mse_threshold", cfg.evaluation.hi_threshold},
                     {"hi_mse_direction", "lower is better"},
                     {"csi_rule", "event iff value > threshold"},
                     {"undefined_values", "written as nan and excluded from means; see the 'excluded' rows"},
                     {"pairs", pred_files.size()}};
  io::write_text(out / "report_meta.json", meta.dump(2) + "\n");

  const auto& m = result.model.aggregate.mean;
  log() << "evaluate: " << method << " rmse " << fixed(m.rmse, 5) << " csi_avg "
        << (m.csi_avg ? fixed(*m.csi_avg, 5) : "nan");
  if (result.bicubic) {
    const auto& b = result.bicubic->aggregate.mean;
    log() << " | bicubic rmse " << fixed(b.rmse, 5) << " csi_avg " << (b.csi_avg ? fixed(*b.csi_avg, 5) : "nan");
  }
  log() << "\n";
  return result;
}

// --------------------------------------------------------------------- bench

BenchResult cmd_bench(const RunConfig& cfg) {
  const auto& b = cfg.bench;
  const int factor = cfg.data.factor;
  if (b.height % factor || b.width % factor) throw ConfigError("bench: dims must be multiples of data.factor");
  std::vector<GridField> inputs;
  for (int i = 0; i < b.samples; ++i)
    inputs.push_back(block_average_downsample(
        synth_storm_field(stream_seed(b.seed, static_cast<std::uint64_t>(i)), b.height, b.width, cfg.data.generator),
        factor));

  BenchResult result;
  result.repetitions = b.repetitions;
  for (const auto& name : b.transforms) {
    const DomainTransform t = DomainTransform::parse(name);
    Architecture arch = cfg.architecture();
    arch.data_channels = t.channels();
    UNet net(arch);
    // Timing does not depend on weight values, so untrained weights suffice.
    DiffusionModel model{net, net.init_params<float>(b.seed), cfg.schedule, t, NormStats{20.0, 15.0}, factor};
    BenchEntry e;
    e.transform = t.name();
    e.parameters = net.parameter_count();
    downscale(inputs.front(), model, 2, 0);  // warm-up
    for (int r = 0; r < b.repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < b.samples; ++i) downscale(inputs[i], model, b.steps, stream_seed(b.seed, i));
      e.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    e.mean = std::accumulate(e.seconds.begin(), e.seconds.end(), 0.0) / e.seconds.size();
    double ss = 0.0;
    for (double s : e.seconds) ss += (s - e.mean) * (s - e.mean);
    e.std = std::sqrt(ss / std::max<std::size_t>(1, e.seconds.size() - 1));
    log() << "bench: " << e.transform << " mean " << fixed(e.mean, 5) << " s, std " << fixed(e.std, 3) << " s\n";
    result.entries.push_back(std::move(e));
  }
  double reference = 0.0;
  for (const auto& e : result.entries)
    if (e.transform == "identity") reference = e.mean;
  for (auto& e : result.entries) e.speedup = reference > 0.0 ? reference / e.mean : std::nan("");

  const fs::path dir = cfg.bench_dir();
  std::ostringstream runs, summary;
  runs << "transform,parameters,repetition,seconds\n";
  summary << "transform,parameters,height,width,samples,steps,repetitions,mean_seconds,std_seconds,"
             "speedup_vs_identity\n";
  for (const auto& e : result.entries) {
    for (std::size_t r = 0; r < e.seconds.size(); ++r)
      runs << e.transform << ',' << e.parameters << ',' << r << ',' << fixed(e.seconds[r]) << '\n';
    summary << e.transform << ',' << e.parameters << ',' << b.height << ',' << b.width << ',' << b.samples << ','
            << b.steps << ',' << b.repetitions << ',' << fixed(e.mean) << ',' << fixed(e.std) << ','
            << fixed(e.speedup) << '\n';
  }
  io::write_text(dir / "bench_runs.csv", runs.str());
  result.summary = dir / "bench.csv";
  io::write_text(result.summary, summary.str());
  io::write_text(dir / "config.json", dump_config(cfg));
  return result;
}

}  // namespace wdm
