#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowcaps/errors.hpp"

namespace fc {

// Dense 2-channel flow field, row-major, (u, v) interleaved per pixel.
struct FlowField {
  int32_t width = 0, height = 0;
  std::vector<float> data;  // size 2 * width * height

  FlowField() = default;
  FlowField(int32_t w, int32_t h) : width(w), height(h), data(static_cast<size_t>(2) * w * h, 0.f) {}

  float& u(int x, int y) { return data[2 * (static_cast<size_t>(y) * width + x)]; }
  float& v(int x, int y) { return data[2 * (static_cast<size_t>(y) * width + x) + 1]; }
  float u(int x, int y) const { return data[2 * (static_cast<size_t>(y) * width + x)]; }
  float v(int x, int y) const { return data[2 * (static_cast<size_t>(y) * width + x) + 1]; }
};

// 8-bit image, row-major, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  int width = 0, height = 0, channels = 1;
  std::vector<uint8_t> data;

  Image8() = default;
  Image8(int w, int h, int ch)
      : width(w), height(h), channels(ch), data(static_cast<size_t>(w) * h * ch, 0) {}

  uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

// .flo: 4-byte float magic 202021.25, int32 width, int32 height, then
// height*width (u, v) float pairs in row-major order. Little-endian throughout.
std::vector<uint8_t> flo_bytes(const FlowField& f);
FlowField parse_flo(const uint8_t* bytes, size_t size);
void write_flo(const std::string& path, const FlowField& f);
FlowField read_flo(const std::string& path);

// Binary PPM (P6), header "P6\n<w> <h>\n255\n". Gray images are expanded to RGB
// on write; reads always return 3 channels.
std::vector<uint8_t> ppm_bytes(const Image8& img);
Image8 parse_ppm(const uint8_t* bytes, size_t size);
void write_ppm(const std::string& path, const Image8& img);
Image8 read_ppm(const std::string& path);

// Color-wheel flow rendering: hue from direction, saturation from magnitude,
// zero flow maps to white. max_rad <= 0 normalizes by the field's own maximum.
Image8 flow_to_color(const FlowField& f, float max_rad = -1.f);

// File helpers shared across modules.
std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const void* bytes, size_t size);

}  // namespace fc
