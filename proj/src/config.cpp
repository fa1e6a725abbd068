#include "wdm/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wdm/io.hpp"

namespace wdm {

using nlohmann::json;

namespace {

// Reads `key` into `out` if present; unknown keys are rejected so typos
// do not silently fall back to defaults.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("config: section '" + section_ + "' must be an object");
  }

  template <typename T>
  Reader& get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: " + section_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  const json* child(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), k) == seen_.end())
        throw ConfigError("config: unknown key '" + section_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string section_;
  std::vector<std::string> seen_;
};

void read_generator(const json& j, StormParams& g) {
  Reader r(j, "data.generator");
  r.get("background", g.background).get("min_bands", g.min_bands).get("max_bands", g.max_bands);
  r.get("band_length", g.band_length).get("band_width", g.band_width).get("base_level", g.base_level);
  r.get("min_cells", g.min_cells).get("max_cells", g.max_cells);
  r.get("cell_amplitude_lo", g.cell_amplitude_lo).get("cell_amplitude_hi", g.cell_amplitude_hi);
  r.get("cell_radius_lo", g.cell_radius_lo).get("cell_radius_hi", g.cell_radius_hi);
  r.get("texture_sigma", g.texture_sigma).get("texture_length", g.texture_length);
  r.get("rain_threshold", g.rain_threshold).get("value_max", g.value_max);
  r.finish();
}

json generator_json(const StormParams& g) {
  return {{"background", g.background},
          {"min_bands", g.min_bands},
          {"max_bands", g.max_bands},
          {"band_length", g.band_length},
          {"band_width", g.band_width},
          {"base_level", g.base_level},
          {"min_cells", g.min_cells},
          {"max_cells", g.max_cells},
          {"cell_amplitude_lo", g.cell_amplitude_lo},
          {"cell_amplitude_hi", g.cell_amplitude_hi},
          {"cell_radius_lo", g.cell_radius_lo},
          {"cell_radius_hi", g.cell_radius_hi},
          {"texture_sigma", g.texture_sigma},
          {"texture_length", g.texture_length},
          {"rain_threshold", g.rain_threshold},
          {"value_max", g.value_max}};
}

std::string expand(std::string s, const std::string& transform) {
  const std::string key = "{transform}";
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key)) s.replace(pos, key.size(), transform);
  return s;
}

}  // namespace

Architecture RunConfig::architecture() const {
  Architecture a;
  a.data_channels = transform().channels();
  a.widths = model.widths;
  a.blocks_per_stage = model.blocks_per_stage;
  a.attention = model.attention;
  a.embed_dim = model.embed_dim;
  a.groups = model.groups;
  return a;
}

std::filesystem::path RunConfig::data_dir() const { return paths.data_dir; }
std::filesystem::path RunConfig::run_dir() const { return expand(paths.run_dir, transform().name()); }
std::filesystem::path RunConfig::bench_dir() const { return paths.bench_dir; }

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  DomainTransform t;
  try {
    t = transform();
  } catch (const ArgumentError& e) {
    fail(e.what());
  }
  const auto& d = data;
  if (d.hr_height < 16 || d.hr_width < 16) fail("data.hr_height/hr_width must be >= 16");
  if (d.factor < 1) fail("data.factor must be >= 1");
  if (d.hr_height % d.factor || d.hr_width % d.factor) fail("data: HR dims must be multiples of factor");
  if (d.gen_height && d.gen_height < d.hr_height) fail("data.gen_height smaller than hr_height");
  if (d.gen_width && d.gen_width < d.hr_width) fail("data.gen_width smaller than hr_width");
  if (d.train_count < 1 || d.test_count < 0) fail("data: train_count must be >= 1 and test_count >= 0");
  if (d.min_nonzero_fraction < 0.0 || d.min_nonzero_fraction > 1.0) fail("data.min_nonzero_fraction outside [0,1]");
  if (d.max_attempts_per_sample < 1) fail("data.max_attempts_per_sample must be >= 1");
  if (model.widths.empty()) fail("model.widths must not be empty");
  for (int w : model.widths)
    if (w < 1 || w % std::min(model.groups, w) != 0) fail("model.widths must be positive multiples of groups");
  if (model.embed_dim < 2 || model.embed_dim % 2) fail("model.embed_dim must be even");
  if (model.blocks_per_stage < 1) fail("model.blocks_per_stage must be >= 1");
  const int div = t.divisor() * architecture().spatial_divisor();
  if (d.hr_height % div || d.hr_width % div)
    fail("HR dims must be divisible by " + std::to_string(div) + " for transform " + t.name() + " and " +
         std::to_string(model.widths.size()) + " stages");
  if (!(schedule.total_time > 0.0) || schedule.steps < 2 || !(schedule.sigma_data > 0.0) || schedule.s_shift < 0.0)
    fail("schedule parameters out of range");
  try {
    training.validate();
  } catch (const ArgumentError& e) {
    fail(e.what());
  }
  if (training.epochs < 0) fail("training.epochs must be >= 0");
  if (sampling.steps < 2) fail("sampling.steps must be >= 2");
  if (sampling.workers < 1) fail("sampling.workers must be >= 1");
  if (bench.repetitions < 3) fail("bench.repetitions must be >= 3");
  if (bench.samples < 1 || bench.steps < 2) fail("bench.samples >= 1 and bench.steps >= 2 required");
  for (const auto& name : bench.transforms) {
    try {
      const auto bt = DomainTransform::parse(name);
      const int bdiv = bt.divisor() * architecture().spatial_divisor();
      if (bench.height % bdiv || bench.width % bdiv) fail("bench dims not divisible for " + name);
    } catch (const ArgumentError& e) {
      fail(e.what());
    }
  }
  if (evaluation.ssim_window < 1 || !(evaluation.quantile_step > 0.0)) fail("evaluation parameters out of range");
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  RunConfig c;
  Reader root(j, "root");
  if (const json* s = root.child("data")) {
    Reader r(*s, "data");
    r.get("hr_height", c.data.hr_height).get("hr_width", c.data.hr_width).get("factor", c.data.factor);
    r.get("gen_height", c.data.gen_height).get("gen_width", c.data.gen_width);
    r.get("train_count", c.data.train_count).get("test_count", c.data.test_count).get("seed", c.data.seed);
    r.get("min_nonzero_fraction", c.data.min_nonzero_fraction);
    r.get("max_attempts_per_sample", c.data.max_attempts_per_sample);
    if (const json* g = r.child("generator")) read_generator(*g, c.data.generator);
    r.finish();
  }
  if (const json* s = root.child("model")) {
    Reader r(*s, "model");
    r.get("transform", c.model.transform).get("widths", c.model.widths);
    r.get("blocks_per_stage", c.model.blocks_per_stage).get("attention", c.model.attention);
    r.get("embed_dim", c.model.embed_dim).get("groups", c.model.groups);
    r.finish();
  }
  if (const json* s = root.child("schedule")) {
    Reader r(*s, "schedule");
    r.get("total_time", c.schedule.total_time).get("steps", c.schedule.steps);
    r.get("sigma_data", c.schedule.sigma_data).get("s_shift", c.schedule.s_shift);
    r.finish();
  }
  if (const json* s = root.child("training")) {
    Reader r(*s, "training");
    auto& t = c.training;
    r.get("tv_weight", t.tv_weight).get("learning_rate", t.learning_rate).get("ema_decay", t.ema_decay);
    r.get("batch_size", t.batch_size).get("epochs", t.epochs).get("seed", t.seed);
    r.get("adam_beta1", t.adam_beta1).get("adam_beta2", t.adam_beta2).get("adam_eps", t.adam_eps);
    r.get("weight_decay", t.weight_decay).get("checkpoint_every", c.checkpoint_every).get("max_steps", c.max_steps);
    r.finish();
  }
  if (const json* s = root.child("sampling")) {
    Reader r(*s, "sampling");
    r.get("steps", c.sampling.steps).get("seed", c.sampling.seed).get("workers", c.sampling.workers);
    r.get("limit", c.sampling.limit);
    r.finish();
  }
  if (const json* s = root.child("evaluation")) {
    Reader r(*s, "evaluation");
    auto& e = c.evaluation;
    r.get("psnr_squared_max", e.psnr_squared_max).get("hi_threshold", e.hi_threshold);
    r.get("ssim_window", e.ssim_window).get("quantile_step", e.quantile_step).get("value_max", e.value_max);
    r.finish();
  }
  if (const json* s = root.child("bench")) {
    Reader r(*s, "bench");
    auto& b = c.bench;
    r.get("height", b.height).get("width", b.width).get("samples", b.samples).get("steps", b.steps);
    r.get("repetitions", b.repetitions).get("seed", b.seed).get("transforms", b.transforms);
    r.finish();
  }
  if (const json* s = root.child("paths")) {
    Reader r(*s, "paths");
    r.get("data_dir", c.paths.data_dir).get("run_dir", c.paths.run_dir).get("bench_dir", c.paths.bench_dir);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

void apply_overrides(RunConfig& cfg, const Overrides& o, Command cmd) {
  if (o.transform) cfg.model.transform = *o.transform;
  if (o.seed) {
    switch (cmd) {
      case Command::kGenData: cfg.data.seed = *o.seed; break;
      case Command::kTrain: cfg.training.seed = *o.seed; break;
      case Command::kSample:
      case Command::kEvaluate: cfg.sampling.seed = *o.seed; break;
      case Command::kBench: cfg.bench.seed = *o.seed; break;
    }
  }
  if (o.steps) {
    if (cmd == Command::kTrain) cfg.max_steps = *o.steps;
    else if (cmd == Command::kBench) cfg.bench.steps = *o.steps;
    else cfg.sampling.steps = *o.steps;
  }
  cfg.validate();
}

std::string dump_config(const RunConfig& c) {
  json j;
  j["data"] = {{"hr_height", c.data.hr_height},
               {"hr_width", c.data.hr_width},
               {"factor", c.data.factor},
               {"gen_height", c.data.gen_height},
               {"gen_width", c.data.gen_width},
               {"train_count", c.data.train_count},
               {"test_count", c.data.test_count},
               {"seed", c.data.seed},
               {"min_nonzero_fraction", c.data.min_nonzero_fraction},
               {"max_attempts_per_sample", c.data.max_attempts_per_sample},
               {"generator", generator_json(c.data.generator)}};
  j["model"] = {{"transform", c.model.transform},
                {"widths", c.model.widths},
                {"blocks_per_stage", c.model.blocks_per_stage},
                {"attention", c.model.attention},
                {"embed_dim", c.model.embed_dim},
                {"groups", c.model.groups}};
  j["schedule"] = {{"total_time", c.schedule.total_time},
                   {"steps", c.schedule.steps},
                   {"sigma_data", c.schedule.sigma_data},
                   {"s_shift", c.schedule.s_shift}};
  const auto& t = c.training;
  j["training"] = {{"tv_weight", t.tv_weight},     {"learning_rate", t.learning_rate},
                   {"ema_decay", t.ema_decay},     {"batch_size", t.batch_size},
                   {"epochs", t.epochs},           {"seed", t.seed},
                   {"adam_beta1", t.adam_beta1},   {"adam_beta2", t.adam_beta2},
                   {"adam_eps", t.adam_eps},       {"weight_decay", t.weight_decay},
                   {"checkpoint_every", c.checkpoint_every}, {"max_steps", c.max_steps}};
  j["sampling"] = {{"steps", c.sampling.steps},
                   {"seed", c.sampling.seed},
                   {"workers", c.sampling.workers},
                   {"limit", c.sampling.limit}};
  j["evaluation"] = {{"psnr_squared_max", c.evaluation.psnr_squared_max},
                     {"hi_threshold", c.evaluation.hi_threshold},
                     {"ssim_window", c.evaluation.ssim_window},
                     {"quantile_step", c.evaluation.quantile_step},
                     {"value_max", c.evaluation.value_max}};
  j["bench"] = {{"height", c.bench.height},
                {"width", c.bench.width},
                {"samples", c.bench.samples},
                {"steps", c.bench.steps},
                {"repetitions", c.bench.repetitions},
                {"seed", c.bench.seed},
                {"transforms", c.bench.transforms}};
  j["paths"] = {{"data_dir", c.paths.data_dir}, {"run_dir", c.paths.run_dir}, {"bench_dir", c.paths.bench_dir}};
  return j.dump(2) + "\n";
}

}  // namespace wdm
