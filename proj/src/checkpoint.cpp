#include "wdm/checkpoint.hpp"

#include <fstream>

#include "json.hpp"
#include "wdm/io.hpp"

namespace wdm {

using nlohmann::json;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto n = c.state.params.size();
  if (c.state.ema.size() != n || c.state.adam_m.size() != n || c.state.adam_v.size() != n)
    throw ArgumentError("save_checkpoint: inconsistent state vector sizes");
  const auto& a = c.architecture;
  const json meta = {
      {"architecture",
       {{"data_channels", a.data_channels},
        {"widths", a.widths},
        {"blocks_per_stage", a.blocks_per_stage},
        {"attention", a.attention},
        {"embed_dim", a.embed_dim},
        {"groups", a.groups},
        {"periodic", a.padding == nn::Padding::kPeriodic}}},
      {"transform", c.transform},
      {"norm", {{"mean", c.norm.mean}, {"std", c.norm.std}}},
      {"schedule",
       {{"total_time", c.schedule.total_time},
        {"steps", c.schedule.steps},
        {"sigma_data", c.schedule.sigma_data},
        {"s_shift", c.schedule.s_shift}}},
      {"factor", c.factor},
      {"hr_height", c.hr_height},
      {"hr_width", c.hr_width},
      {"epochs_done", c.epochs_done},
      {"step", c.state.step},
      {"parameter_count", n}};
  const std::string text = meta.dump();

  auto tmp = path;
  tmp += ".tmp";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint: " + tmp.string());
    os.write("WDMC", 4);
    io::put_u32(os, Checkpoint::kVersion);
    io::put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    io::put_u64(os, static_cast<std::uint64_t>(n));
    for (const auto* v : {&c.state.params, &c.state.ema, &c.state.adam_m, &c.state.adam_v})
      io::put_f32(os, std::span<const float>(v->data(), static_cast<std::size_t>(n)));
    if (!os) throw DataError("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "WDMC") throw FormatError(path.string() + ": not a checkpoint");
  const auto version = io::get_u32(is);
  if (version != Checkpoint::kVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto len = io::get_u64(is);
  if (len > (1u << 24)) throw FormatError(path.string() + ": metadata too large");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError(path.string() + ": truncated metadata");

  Checkpoint c;
  try {
    const json m = json::parse(text);
    const auto& a = m.at("architecture");
    c.architecture.data_channels = a.at("data_channels").get<int>();
    c.architecture.widths = a.at("widths").get<std::vector<int>>();
    c.architecture.blocks_per_stage = a.at("blocks_per_stage").get<int>();
    c.architecture.attention = a.at("attention").get<bool>();
    c.architecture.embed_dim = a.at("embed_dim").get<int>();
    c.architecture.groups = a.at("groups").get<int>();
    c.architecture.padding = a.at("periodic").get<bool>() ? nn::Padding::kPeriodic : nn::Padding::kZero;
    c.transform = m.at("transform").get<std::string>();
    c.norm = {m.at("norm").at("mean").get<double>(), m.at("norm").at("std").get<double>()};
    const auto& s = m.at("schedule");
    c.schedule.total_time = s.at("total_time").get<double>();
    c.schedule.steps = s.at("steps").get<int>();
    c.schedule.sigma_data = s.at("sigma_data").get<double>();
    c.schedule.s_shift = s.at("s_shift").get<double>();
    c.factor = m.at("factor").get<int>();
    c.hr_height = m.at("hr_height").get<int>();
    c.hr_width = m.at("hr_width").get<int>();
    c.epochs_done = m.at("epochs_done").get<int>();
    c.state.step = m.at("step").get<long>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad metadata: " + e.what());
  }

  const auto n = static_cast<Eigen::Index>(io::get_u64(is));
  const UNet net(c.architecture);
  if (n != net.parameter_count())
    throw FormatError(path.string() + ": parameter count does not match the stored architecture");
  for (auto* v : {&c.state.params, &c.state.ema, &c.state.adam_m, &c.state.adam_v}) {
    v->resize(n);
    io::get_f32(is, std::span<float>(v->data(), static_cast<std::size_t>(n)));
  }
  return c;
}

}  // namespace wdm
