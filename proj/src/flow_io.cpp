#include "flowcaps/flow_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fc {

namespace {

constexpr float kFloMagic = 202021.25f;

void put_f32(std::vector<uint8_t>& out, float v) {
  uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

void put_i32(std::vector<uint8_t>& out, int32_t v) {
  uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

}  // namespace

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file(const std::string& path, const void* bytes, size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<uint8_t> flo_bytes(const FlowField& f) {
  if (f.width <= 0 || f.height <= 0)
    throw DomainError("flow field extents must be positive");
  if (f.data.size() != static_cast<size_t>(2) * f.width * f.height)
    throw DomainError("flow field data size does not match extents");
  std::vector<uint8_t> out;
  out.reserve(12 + f.data.size() * 4);
  put_f32(out, kFloMagic);
  put_i32(out, f.width);
  put_i32(out, f.height);
  for (float v : f.data) put_f32(out, v);
  return out;
}

FlowField parse_flo(const uint8_t* bytes, size_t size) {
  if (size < 12) throw FormatError("flo data truncated: header needs 12 bytes");
  float magic;
  int32_t w, h;
  std::memcpy(&magic, bytes, 4);
  std::memcpy(&w, bytes + 4, 4);
  std::memcpy(&h, bytes + 8, 4);
  if (magic != kFloMagic) throw FormatError("bad flo magic");
  if (w <= 0 || h <= 0 || w > 100000 || h > 100000)
    throw FormatError("implausible flo extents " + std::to_string(w) + "x" + std::to_string(h));
  size_t need = 12 + static_cast<size_t>(8) * w * h;
  if (size != need)
    throw FormatError("flo size mismatch: expected " + std::to_string(need) + " bytes, got " +
                      std::to_string(size));
  FlowField f(w, h);
  std::memcpy(f.data.data(), bytes + 12, f.data.size() * 4);
  return f;
}

void write_flo(const std::string& path, const FlowField& f) {
  auto bytes = flo_bytes(f);
  write_file(path, bytes.data(), bytes.size());
}

FlowField read_flo(const std::string& path) {
  auto bytes = read_file(path);
  return parse_flo(bytes.data(), bytes.size());
}

std::vector<uint8_t> ppm_bytes(const Image8& img) {
  if (img.width <= 0 || img.height <= 0) throw DomainError("image extents must be positive");
  if (img.channels != 1 && img.channels != 3) throw DomainError("ppm needs 1 or 3 channels");
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<size_t>(3) * img.width * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.push_back(img.at(x, y, img.channels == 1 ? 0 : c));
  return out;
}

Image8 parse_ppm(const uint8_t* bytes, size_t size) {
  size_t pos = 0;
  auto token = [&]() -> std::string {
    // skip whitespace and '#' comments per the PNM grammar
    while (pos < size) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < size && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < size && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    if (t.empty()) throw FormatError("ppm header truncated");
    return t;
  };
  if (token() != "P6") throw FormatError("not a binary ppm (P6)");
  int w, h, maxval;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError("bad ppm header");
  }
  if (w <= 0 || h <= 0) throw FormatError("bad ppm extents");
  if (maxval != 255) throw FormatError("only maxval 255 supported");
  ++pos;  // single whitespace after maxval
  size_t need = static_cast<size_t>(3) * w * h;
  if (size - pos < need) throw FormatError("ppm pixel data truncated");
  Image8 img(w, h, 3);
  std::memcpy(img.data.data(), bytes + pos, need);
  return img;
}

void write_ppm(const std::string& path, const Image8& img) {
  auto bytes = ppm_bytes(img);
  write_file(path, bytes.data(), bytes.size());
}

Image8 read_ppm(const std::string& path) {
  auto bytes = read_file(path);
  return parse_ppm(bytes.data(), bytes.size());
}

namespace {

// 55-entry color wheel: RY 15, YG 6, GC 4, CB 11, BM 13, MR 6.
std::vector<std::array<float, 3>> make_wheel() {
  const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
  std::vector<std::array<float, 3>> w;
  w.reserve(RY + YG + GC + CB + BM + MR);
  for (int i = 0; i < RY; ++i) w.push_back({255.f, 255.f * i / RY, 0.f});
  for (int i = 0; i < YG; ++i) w.push_back({255.f - 255.f * i / YG, 255.f, 0.f});
  for (int i = 0; i < GC; ++i) w.push_back({0.f, 255.f, 255.f * i / GC});
  for (int i = 0; i < CB; ++i) w.push_back({0.f, 255.f - 255.f * i / CB, 255.f});
  for (int i = 0; i < BM; ++i) w.push_back({255.f * i / BM, 0.f, 255.f});
  for (int i = 0; i < MR; ++i) w.push_back({255.f, 0.f, 255.f - 255.f * i / MR});
  return w;
}

}  // namespace

Image8 flow_to_color(const FlowField& f, float max_rad) {
  static const auto wheel = make_wheel();
  const int ncols = static_cast<int>(wheel.size());
  if (max_rad <= 0.f) {
    max_rad = 0.f;
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x)
        max_rad = std::max(max_rad, std::hypot(f.u(x, y), f.v(x, y)));
  }
  if (max_rad <= 0.f) max_rad = 1.f;  // all-zero field renders white
  constexpr float kTwoPi = 6.28318530717958647692f;
  Image8 img(f.width, f.height, 3);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      float u = f.u(x, y) / max_rad, v = f.v(x, y) / max_rad;
      float rad = std::min(std::hypot(u, v), 1.f);
      float ang = std::atan2(v, u);
      if (ang < 0.f) ang += kTwoPi;
      float fk = ang / kTwoPi * ncols;
      int k0 = static_cast<int>(fk) % ncols;
      int k1 = (k0 + 1) % ncols;
      float t = fk - std::floor(fk);
      for (int c = 0; c < 3; ++c) {
        float col = ((1.f - t) * wheel[k0][c] + t * wheel[k1][c]) / 255.f;
        col = 1.f - rad * (1.f - col);  // desaturate toward white at zero flow
        img.at(x, y, c) = static_cast<uint8_t>(std::lround(255.f * col));
      }
    }
  }
  return img;
}

}  // namespace fc
