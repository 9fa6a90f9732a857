#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "flowcaps/flow_io.hpp"
#include "flowcaps/rng.hpp"

using fc::FlowField;
using fc::Image8;

namespace {

std::filesystem::path tmpdir() {
  auto p = std::filesystem::temp_directory_path() / "fc_io_test";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("flo byte layout is pinned") {
  FlowField f(1, 1);
  f.u(0, 0) = 1.5f;
  f.v(0, 0) = -2.0f;
  std::vector<uint8_t> b = fc::flo_bytes(f);
  REQUIRE(b.size() == 20);  // 4 magic + 4 width + 4 height + 2 floats
  float magic;
  int32_t w, h;
  std::memcpy(&magic, b.data(), 4);
  std::memcpy(&w, b.data() + 4, 4);
  std::memcpy(&h, b.data() + 8, 4);
  CHECK(magic == 202021.25f);
  CHECK(w == 1);
  CHECK(h == 1);
  float uv[2];
  std::memcpy(uv, b.data() + 12, 8);
  CHECK(uv[0] == 1.5f);
  CHECK(uv[1] == -2.0f);
}

TEST_CASE("flo round-trips bit-exactly through files") {
  fc::Rng rng(31);
  FlowField f(7, 5);
  for (auto& v : f.data) v = static_cast<float>(rng.normal(0.0, 10.0));
  auto path = (tmpdir() / "a.flo").string();
  fc::write_flo(path, f);
  FlowField g = fc::read_flo(path);
  CHECK(g.width == 7);
  CHECK(g.height == 5);
  CHECK(std::memcmp(f.data.data(), g.data.data(), f.data.size() * 4) == 0);
}

TEST_CASE("flo parser rejects bad magic, truncation, and absurd extents") {
  FlowField f(2, 2);
  std::vector<uint8_t> b = fc::flo_bytes(f);
  CHECK_THROWS_AS(fc::parse_flo(b.data(), 8), fc::FormatError);          // header cut
  CHECK_THROWS_AS(fc::parse_flo(b.data(), b.size() - 1), fc::FormatError);  // payload cut
  std::vector<uint8_t> bad = b;
  bad[0] ^= 0xff;
  CHECK_THROWS_AS(fc::parse_flo(bad.data(), bad.size()), fc::FormatError);
  std::vector<uint8_t> neg = b;
  int32_t w = -2;
  std::memcpy(neg.data() + 4, &w, 4);
  CHECK_THROWS_AS(fc::parse_flo(neg.data(), neg.size()), fc::FormatError);
}

TEST_CASE("ppm header is byte-exact") {
  Image8 img(1, 1, 1);
  img.at(0, 0) = 7;
  std::vector<uint8_t> b = fc::ppm_bytes(img);
  const char* want = "P6\n1 1\n255\n";
  REQUIRE(b.size() == 11 + 3);  // header + one RGB pixel
  CHECK(std::memcmp(b.data(), want, 11) == 0);
  CHECK(b[11] == 7);  // gray expanded to RGB
  CHECK(b[12] == 7);
  CHECK(b[13] == 7);

  Image8 wide(640, 480, 3);
  std::vector<uint8_t> b2 = fc::ppm_bytes(wide);
  CHECK(std::memcmp(b2.data(), "P6\n640 480\n255\n", 15) == 0);
  CHECK(b2.size() == 15 + 640u * 480u * 3u);
}

TEST_CASE("ppm round-trips and the parser skips comments") {
  fc::Rng rng(37);
  Image8 img(9, 4, 3);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
  auto path = (tmpdir() / "a.ppm").string();
  fc::write_ppm(path, img);
  Image8 back = fc::read_ppm(path);
  REQUIRE(back.channels == 3);
  CHECK(back.width == 9);
  CHECK(back.height == 4);
  CHECK(back.data == img.data);

  std::string text = "P6\n# a comment\n2 # another\n1\n255\nabcdef";
  Image8 c = fc::parse_ppm(reinterpret_cast<const uint8_t*>(text.data()), text.size());
  CHECK(c.width == 2);
  CHECK(c.height == 1);
  CHECK(c.at(0, 0, 0) == 'a');
  CHECK(c.at(1, 0, 2) == 'f');
}

TEST_CASE("ppm parser rejects wrong magic, maxval, truncation") {
  std::string bad1 = "P5\n1 1\n255\nabc";
  CHECK_THROWS_AS(fc::parse_ppm(reinterpret_cast<const uint8_t*>(bad1.data()), bad1.size()),
                  fc::FormatError);
  std::string bad2 = "P6\n1 1\n65535\nabc";
  CHECK_THROWS_AS(fc::parse_ppm(reinterpret_cast<const uint8_t*>(bad2.data()), bad2.size()),
                  fc::FormatError);
  std::string bad3 = "P6\n2 2\n255\nabc";
  CHECK_THROWS_AS(fc::parse_ppm(reinterpret_cast<const uint8_t*>(bad3.data()), bad3.size()),
                  fc::FormatError);
}

TEST_CASE("flow colors: zero flow is white, +u is red, hue varies with angle") {
  FlowField f(4, 1);
  f.u(0, 0) = 0.f;
  f.v(0, 0) = 0.f;   // zero -> white
  f.u(1, 0) = 1.f;   // +u at max radius -> pure red
  f.u(2, 0) = -1.f;  // opposite direction -> different hue
  f.v(3, 0) = 1.f;
  Image8 img = fc::flow_to_color(f, 1.0f);
  CHECK(img.channels == 3);
  CHECK(img.at(0, 0, 0) == 255);
  CHECK(img.at(0, 0, 1) == 255);
  CHECK(img.at(0, 0, 2) == 255);
  CHECK(img.at(1, 0, 0) == 255);
  CHECK(img.at(1, 0, 1) == 0);
  CHECK(img.at(1, 0, 2) == 0);
  // Opposite directions land on distinct hues.
  bool differs = img.at(2, 0, 0) != img.at(1, 0, 0) || img.at(2, 0, 1) != img.at(1, 0, 1) ||
                 img.at(2, 0, 2) != img.at(1, 0, 2);
  CHECK(differs);
  // Short vectors are paler (closer to white) than unit ones.
  FlowField g(1, 1);
  g.u(0, 0) = 0.25f;
  Image8 pale = fc::flow_to_color(g, 1.0f);
  CHECK(pale.at(0, 0, 1) > img.at(1, 0, 1));
  CHECK(pale.at(0, 0, 2) > img.at(1, 0, 2));
}

TEST_CASE("flow_to_color auto-normalizes by the max radius") {
  FlowField f(2, 1);
  f.u(0, 0) = 8.f;  // max radius pixel -> saturated red
  f.u(1, 0) = 4.f;
  Image8 img = fc::flow_to_color(f);
  CHECK(img.at(0, 0, 0) == 255);
  CHECK(img.at(0, 0, 1) == 0);
  Image8 scaled = fc::flow_to_color(f, 8.f);
  CHECK(img.data == scaled.data);
}

TEST_CASE("file helpers raise IoError on missing paths") {
  CHECK_THROWS_AS(fc::read_file("/nonexistent/fc/file.bin"), fc::IoError);
  CHECK_THROWS_AS(fc::read_flo("/nonexistent/fc/file.flo"), fc::IoError);
}
