#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace chainfuse {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Timestamped pinhole depth frame. Depths are meters, NaN means no return.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;  // row-major, width*height
  double timestamp = 0.0;
  std::int64_t frame_id = 0;

  float at(int x, int y) const { return depth[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return depth[static_cast<size_t>(y) * width + x]; }
  size_t pixel_count() const { return depth.size(); }
};

static_assert(std::endian::native == std::endian::little,
              "depth frame files are little-endian");

// Binary frame format: magic "DPTH", u32 width, u32 height, f64 timestamp,
// then width*height f32 depths in meters (NaN = no return).
inline void save_depth_frame(const std::filesystem::path& path, const DepthImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write("DPTH", 4);
  const std::uint32_t w = static_cast<std::uint32_t>(img.width);
  const std::uint32_t h = static_cast<std::uint32_t>(img.height);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&img.timestamp), 8);
  f.write(reinterpret_cast<const char*>(img.depth.data()),
          static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
  if (!f) throw IoError("write failed: " + path.string());
}

inline DepthImage load_depth_frame(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "DPTH", 4) != 0)
    throw IoError("bad depth frame magic: " + path.string());
  std::uint32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  DepthImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  f.read(reinterpret_cast<char*>(&img.timestamp), 8);
  if (!f || w == 0 || h == 0 || w > 1 << 16 || h > 1 << 16)
    throw IoError("bad depth frame header: " + path.string());
  img.depth.resize(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(img.depth.data()),
         static_cast<std::streamsize>(img.depth.size() * sizeof(float)));
  if (!f) throw IoError("truncated depth frame: " + path.string());
  return img;
}

}  // namespace chainfuse
