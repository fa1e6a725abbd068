#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wdm/grid.hpp"
#include "wdm/wavelet.hpp"

namespace wdm::io {

namespace fs = std::filesystem;

// Little-endian primitives shared by every binary format in the project.
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f32(std::ostream& os, std::span<const float> values);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
void get_f32(std::istream& is, std::span<float> out);

/// "WGF1" | u32 height | u32 width | u32 reserved | row-major f32 values.
void write_wgf(const fs::path& path, const GridField& field);
GridField read_wgf(const fs::path& path);

/// "WCT1" | u32 level | u32 base_height | u32 base_width | channel-major f32.
void write_wct(const fs::path& path, const CoeffTensor<float>& coeffs);
CoeffTensor<float> read_wct(const fs::path& path);

/// 8-bit binary PGM with [0, value_max] mapped linearly onto [0, 255].
void write_pgm(const fs::path& path, const GridField& field);

/// Sorted list of regular files in `dir` with the given extension.
std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace wdm::io
