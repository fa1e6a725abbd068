#pragma once

#include <filesystem>
#include <string>

#include "wdm/denoiser.hpp"
#include "wdm/grid.hpp"
#include "wdm/schedule.hpp"
#include "wdm/trainer.hpp"

namespace wdm {

/// Container: "WDMC" | u32 version | u64 metadata length | JSON metadata |
/// u64 parameter count | params | ema | adam m | adam v (all LE f32).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  Architecture architecture;
  std::string transform = "haar-1";
  NormStats norm;
  NoiseSchedule schedule;
  int factor = 8;
  int hr_height = 0;
  int hr_width = 0;
  int epochs_done = 0;
  TrainState<float> state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wdm
