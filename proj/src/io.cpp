#include "wdm/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace wdm::io {
namespace {

constexpr std::size_t kMaxElements = std::size_t(1) << 31;

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  return is;
}

void expect_magic(std::istream& is, const char* magic, const fs::path& path) {
  char buf[4] = {};
  is.read(buf, 4);
  if (!is || std::memcmp(buf, magic, 4) != 0)
    throw FormatError(path.string() + ": bad magic, expected " + std::string(magic, 4));
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f32(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float f : values) {
      const float g = byteswap_if_big(f);
      os.write(reinterpret_cast<const char*>(&g), sizeof g);
    }
  }
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("unexpected end of file");
  return byteswap_if_big(v);
}

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("unexpected end of file");
  return byteswap_if_big(v);
}

void get_f32(std::istream& is, std::span<float> out) {
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
  if (!is) throw FormatError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big)
    for (float& f : out) f = byteswap_if_big(f);
}

void write_wgf(const fs::path& path, const GridField& field) {
  auto os = open_out(path);
  os.write("WGF1", 4);
  put_u32(os, static_cast<std::uint32_t>(field.height()));
  put_u32(os, static_cast<std::uint32_t>(field.width()));
  put_u32(os, 0);
  put_f32(os, std::span<const float>(field.values.data(), static_cast<std::size_t>(field.size())));
  if (!os) throw DataError("write failed: " + path.string());
}

GridField read_wgf(const fs::path& path) {
  auto is = open_in(path);
  expect_magic(is, "WGF1", path);
  const std::uint32_t h = get_u32(is), w = get_u32(is);
  get_u32(is);
  if (h == 0 || w == 0 || std::size_t(h) * w > kMaxElements) throw FormatError(path.string() + ": bad dimensions");
  Plane<float> values(h, w);
  get_f32(is, std::span<float>(values.data(), static_cast<std::size_t>(values.size())));
  if (!values.allFinite()) throw DataError(path.string() + ": non-finite values");
  return GridField(std::move(values));
}

void write_wct(const fs::path& path, const CoeffTensor<float>& coeffs) {
  validate_coeffs(coeffs);
  auto os = open_out(path);
  os.write("WCT1", 4);
  put_u32(os, static_cast<std::uint32_t>(coeffs.level));
  put_u32(os, static_cast<std::uint32_t>(coeffs.base_height));
  put_u32(os, static_cast<std::uint32_t>(coeffs.base_width));
  put_f32(os, std::span<const float>(coeffs.bands.data.data(), static_cast<std::size_t>(coeffs.bands.size())));
  if (!os) throw DataError("write failed: " + path.string());
}

CoeffTensor<float> read_wct(const fs::path& path) {
  auto is = open_in(path);
  expect_magic(is, "WCT1", path);
  const auto level = static_cast<int>(get_u32(is));
  const auto bh = static_cast<int>(get_u32(is));
  const auto bw = static_cast<int>(get_u32(is));
  if (level < 0 || level > 8 || bh <= 0 || bw <= 0 || std::size_t(bh) * std::size_t(bw) > kMaxElements)
    throw FormatError(path.string() + ": bad header");
  const int d = 1 << level;
  if (bh % d != 0 || bw % d != 0) throw FormatError(path.string() + ": dims not divisible by 2^level");
  CoeffTensor<float> c{level, bh, bw, Tensor<float>(pow4(level), bh / d, bw / d)};
  get_f32(is, std::span<float>(c.bands.data.data(), static_cast<std::size_t>(c.bands.size())));
  return c;
}

void write_pgm(const fs::path& path, const GridField& field) {
  auto os = open_out(path);
  os << "P5\n" << field.width() << ' ' << field.height() << "\n255\n";
  std::vector<unsigned char> px(static_cast<std::size_t>(field.size()));
  const double scale = 255.0 / field.value_max;
  for (std::size_t k = 0; k < px.size(); ++k) {
    const double v = std::clamp(double(field.values.data()[k]), 0.0, double(field.value_max));
    px[k] = static_cast<unsigned char>(std::lround(v * scale));
  }
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == extension) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw DataError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace wdm::io
