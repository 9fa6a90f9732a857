#include "flowcaps/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fc {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::kRectangle: return "rectangle";
    case ShapeKind::kDisk: return "disk";
    case ShapeKind::kTriangle: return "triangle";
    case ShapeKind::kRing: return "ring";
    case ShapeKind::kBar: return "bar";
  }
  throw DomainError("bad shape kind");
}

ShapeKind shape_from_name(const std::string& name) {
  for (ShapeKind k : all_shapes())
    if (shape_name(k) == name) return k;
  throw DomainError("unknown shape: " + name);
}

std::vector<ShapeKind> all_shapes() {
  return {ShapeKind::kRectangle, ShapeKind::kDisk, ShapeKind::kTriangle, ShapeKind::kRing,
          ShapeKind::kBar};
}

void SceneSpec::validate() const {
  if (max_disp < 1) throw ConfigError("displacement range must be >= 1");
  if (width < 32 || height < 32) throw ConfigError("canvas must be at least 32x32");
  if (shapes.empty()) throw ConfigError("shape set is empty");
  for (ShapeKind k : holdout_shapes)
    if (std::find(shapes.begin(), shapes.end(), k) == shapes.end())
      throw ConfigError("holdout shape not in shape set: " + shape_name(k));
}

int direction_label(int dx, int dy) {
  if (dx == 0 && dy == 0) throw DomainError("zero displacement has no direction");
  double ang = std::atan2(static_cast<double>(dy), static_cast<double>(dx));
  constexpr double kTwoPi = 6.283185307179586;
  if (ang < 0) ang += kTwoPi;
  return static_cast<int>(std::lround(ang / (kTwoPi / kNumClasses))) % kNumClasses;
}

namespace {

// Smoothed uniform noise around `base`, two 3x3 box-blur passes.
std::vector<uint8_t> smooth_noise(int w, int h, int base, int amp, Rng& rng) {
  std::vector<float> a(static_cast<size_t>(w) * h), b(a.size());
  for (auto& v : a) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = 0.f;
        int n = 0;
        for (int oy = -1; oy <= 1; ++oy)
          for (int ox = -1; ox <= 1; ++ox) {
            int xx = x + ox, yy = y + oy;
            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
            s += a[static_cast<size_t>(yy) * w + xx];
            ++n;
          }
        b[static_cast<size_t>(y) * w + x] = s / static_cast<float>(n);
      }
    std::swap(a, b);
  }
  std::vector<uint8_t> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    int v = base + static_cast<int>(std::lround(a[i] * 2.0f * static_cast<float>(amp)));
    out[i] = static_cast<uint8_t>(std::clamp(v, 0, 255));
  }
  return out;
}

bool shape_mask(ShapeKind kind, int sw, int sh, int x, int y) {
  double fx = (x + 0.5) / sw - 0.5, fy = (y + 0.5) / sh - 0.5;
  switch (kind) {
    case ShapeKind::kRectangle:
    case ShapeKind::kBar:
      return true;  // whole bounding box; bar just has an elongated box
    case ShapeKind::kDisk:
      return fx * fx + fy * fy <= 0.25;
    case ShapeKind::kRing: {
      double r2 = fx * fx + fy * fy;
      return r2 <= 0.25 && r2 >= 0.0625;
    }
    case ShapeKind::kTriangle:
      return std::abs(fx) <= (y + 1.0) / (2.0 * sh);
  }
  return false;
}

struct ShapeGeom {
  int sw = 0, sh = 0;
};

ShapeGeom sample_geom(ShapeKind kind, int smin, int smax, Rng& rng) {
  int s = static_cast<int>(rng.uniform_int(smin, smax));
  ShapeGeom g{s, s};
  if (kind == ShapeKind::kRectangle) {
    g.sh = std::max(smin, static_cast<int>(std::lround(s * rng.uniform(0.6, 1.0))));
  } else if (kind == ShapeKind::kBar) {
    g.sh = std::max(3, s / 4);
  }
  return g;
}

void draw_shape(Image8& frame, ShapeKind kind, const std::vector<uint8_t>& tex, int sw, int sh,
                int px, int py) {
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x)
      if (shape_mask(kind, sw, sh, x, y)) {
        uint8_t v = tex[static_cast<size_t>(y) * sw + x];
        for (int c = 0; c < 3; ++c) frame.at(px + x, py + y, c) = v;
      }
}

}  // namespace

Sample gen_sample(const SceneSpec& spec, Rng& rng, int forced_label,
                  const std::vector<ShapeKind>& allowed) {
  spec.validate();
  const auto& pool = allowed.empty() ? spec.shapes : allowed;
  const int W = spec.width, H = spec.height, D = spec.max_disp;

  ShapeKind kind = pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
  int smax = std::min(28, std::min(W, H) - 2 * D - 4);
  int smin = std::min(12, smax);
  if (smax < 8) throw ConfigError("canvas too small for shape plus displacement range");
  ShapeGeom g = sample_geom(kind, smin, smax, rng);

  int dx = 0, dy = 0;
  do {
    dx = static_cast<int>(rng.uniform_int(-D, D));
    dy = static_cast<int>(rng.uniform_int(-D, D));
  } while ((dx == 0 && dy == 0) ||
           (forced_label >= 0 && direction_label(dx, dy) != forced_label));

  if (W - 2 * D - g.sw < 0 || H - 2 * D - g.sh < 0)
    throw ConfigError("canvas too small for shape plus displacement range");
  int px = static_cast<int>(rng.uniform_int(D, W - D - g.sw));
  int py = static_cast<int>(rng.uniform_int(D, H - D - g.sh));

  int bu = 0, bv = 0;
  if (spec.background == BackgroundMode::kGlobalTranslation) {
    bu = static_cast<int>(rng.uniform_int(-D, D));
    bv = static_cast<int>(rng.uniform_int(-D, D));
  }

  // Background on a padded canvas so both crops sample real texture.
  int pw = W + 2 * D, ph = H + 2 * D;
  int bg_base = static_cast<int>(rng.uniform_int(60, 120));
  auto bg = smooth_noise(pw, ph, bg_base, 35, rng);
  int fg_base = std::min(235, bg_base + static_cast<int>(rng.uniform_int(60, 100)));
  auto fg = smooth_noise(g.sw, g.sh, fg_base, 18, rng);

  Sample s;
  s.shape = kind;
  s.label = direction_label(dx, dy);
  s.frame1 = Image8(W, H, 3);
  s.frame2 = Image8(W, H, 3);
  s.flow = FlowField(W, H);

  auto blit_bg = [&](Image8& frame, int ox, int oy) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        uint8_t v = bg[static_cast<size_t>(y + oy) * pw + (x + ox)];
        for (int c = 0; c < 3; ++c) frame.at(x, y, c) = v;
      }
  };
  blit_bg(s.frame1, D, D);
  blit_bg(s.frame2, D - bu, D - bv);
  draw_shape(s.frame1, kind, fg, g.sw, g.sh, px, py);
  draw_shape(s.frame2, kind, fg, g.sw, g.sh, px + dx, py + dy);

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      s.flow.u(x, y) = static_cast<float>(bu);
      s.flow.v(x, y) = static_cast<float>(bv);
    }
  for (int y = 0; y < g.sh; ++y)
    for (int x = 0; x < g.sw; ++x)
      if (shape_mask(kind, g.sw, g.sh, x, y)) {
        s.flow.u(px + x, py + y) = static_cast<float>(dx);
        s.flow.v(px + x, py + y) = static_cast<float>(dy);
      }
  return s;
}

std::vector<int> Dataset::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

ordered_json spec_to_json(const SceneSpec& spec) {
  ordered_json j;
  j["width"] = spec.width;
  j["height"] = spec.height;
  j["background"] = spec.background == BackgroundMode::kStatic ? "static" : "global";
  j["max_disp"] = spec.max_disp;
  std::vector<std::string> names, holdout;
  for (auto k : spec.shapes) names.push_back(shape_name(k));
  for (auto k : spec.holdout_shapes) holdout.push_back(shape_name(k));
  j["shapes"] = names;
  j["holdout_shapes"] = holdout;
  return j;
}

SceneSpec spec_from_json(const ordered_json& j) {
  SceneSpec spec;
  spec.width = j.at("width").get<int>();
  spec.height = j.at("height").get<int>();
  spec.background = j.at("background").get<std::string>() == "global"
                        ? BackgroundMode::kGlobalTranslation
                        : BackgroundMode::kStatic;
  spec.max_disp = j.at("max_disp").get<int>();
  spec.shapes.clear();
  for (const auto& n : j.at("shapes")) spec.shapes.push_back(shape_from_name(n.get<std::string>()));
  spec.holdout_shapes.clear();
  for (const auto& n : j.at("holdout_shapes"))
    spec.holdout_shapes.push_back(shape_from_name(n.get<std::string>()));
  return spec;
}

}  // namespace

Dataset gen_dataset(const SceneSpec& spec, int n_train, int n_test, uint64_t seed,
                    const std::string& out_dir) {
  spec.validate();
  if (n_train < 0 || n_test < 0) throw ConfigError("split sizes must be non-negative");

  std::vector<ShapeKind> train_pool;
  for (ShapeKind k : spec.shapes)
    if (std::find(spec.holdout_shapes.begin(), spec.holdout_shapes.end(), k) ==
        spec.holdout_shapes.end())
      train_pool.push_back(k);
  if (n_train > 0 && train_pool.empty())
    throw ConfigError("all shapes held out: nothing left to train on");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "data", ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  Dataset ds;
  ds.dir = out_dir;
  ds.spec = spec;

  Rng master(seed);
  int total = n_train + n_test;
  for (int i = 0; i < total; ++i) {
    bool train = i < n_train;
    int within = train ? i : i - n_train;
    int label = within % kNumClasses;
    Rng rng = master.fork(static_cast<uint64_t>(i));
    Sample s = gen_sample(spec, rng, label, train ? train_pool : spec.shapes);

    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "s%05d", i);
    SampleRef ref;
    ref.id = idbuf;
    ref.frame1 = std::string("data/") + idbuf + "_f1.ppm";
    ref.frame2 = std::string("data/") + idbuf + "_f2.ppm";
    ref.flo = std::string("data/") + idbuf + ".flo";
    ref.label = s.label;
    ref.split = train ? "train" : "test";
    ref.shape = s.shape;

    write_ppm(out_dir + "/" + ref.frame1, s.frame1);
    write_ppm(out_dir + "/" + ref.frame2, s.frame2);
    write_flo(out_dir + "/" + ref.flo, s.flow);
    ds.samples.push_back(std::move(ref));
  }

  ordered_json j;
  j["spec"] = spec_to_json(spec);
  j["samples"] = ordered_json::array();
  for (const auto& r : ds.samples) {
    ordered_json e;
    e["id"] = r.id;
    e["frame1"] = r.frame1;
    e["frame2"] = r.frame2;
    e["flo"] = r.flo;
    e["label"] = r.label;
    e["split"] = r.split;
    e["shape"] = shape_name(r.shape);
    j["samples"].push_back(e);
  }
  std::string text = j.dump(2) + "\n";
  write_file(out_dir + "/manifest.json", text.data(), text.size());
  return ds;
}

Dataset load_manifest(const std::string& manifest_path) {
  auto bytes = read_file(manifest_path);
  ordered_json j;
  try {
    j = ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const std::exception& e) {
    throw FormatError("bad manifest " + manifest_path + ": " + e.what());
  }
  Dataset ds;
  ds.dir = fs::path(manifest_path).parent_path().string();
  if (ds.dir.empty()) ds.dir = ".";
  try {
    ds.spec = spec_from_json(j.at("spec"));
    for (const auto& e : j.at("samples")) {
      SampleRef r;
      r.id = e.at("id").get<std::string>();
      r.frame1 = e.at("frame1").get<std::string>();
      r.frame2 = e.at("frame2").get<std::string>();
      r.flo = e.at("flo").get<std::string>();
      r.label = e.at("label").get<int>();
      r.split = e.at("split").get<std::string>();
      r.shape = shape_from_name(e.at("shape").get<std::string>());
      ds.samples.push_back(std::move(r));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError("bad manifest " + manifest_path + ": " + e.what());
  }
  return ds;
}

template <class T>
Batch<T> load_batch(const Dataset& ds, const std::vector<int>& indices) {
  if (indices.empty()) throw DataError("empty batch");
  int64_t N = static_cast<int64_t>(indices.size());
  int64_t H = ds.spec.height, W = ds.spec.width;
  Batch<T> batch;
  batch.frames = Tensor<T>::zeros({N, 6, H, W});
  batch.flow = Tensor<T>::zeros({N, 2, H, W});
  T* fr = batch.frames.raw_data();
  T* fl = batch.flow.raw_data();
  for (int64_t n = 0; n < N; ++n) {
    int idx = indices[static_cast<size_t>(n)];
    if (idx < 0 || idx >= static_cast<int>(ds.samples.size()))
      throw DataError("batch index out of range: " + std::to_string(idx));
    const SampleRef& r = ds.samples[static_cast<size_t>(idx)];
    Image8 f1, f2;
    FlowField flow;
    try {
      f1 = read_ppm(ds.dir + "/" + r.frame1);
      f2 = read_ppm(ds.dir + "/" + r.frame2);
      flow = read_flo(ds.dir + "/" + r.flo);
    } catch (const Error& e) {
      throw DataError("sample " + r.id + ": " + e.what());
    }
    if (f1.width != W || f1.height != H || f2.width != W || f2.height != H ||
        flow.width != W || flow.height != H)
      throw DataError("sample " + r.id + " extents do not match manifest spec");
    auto put = [&](const Image8& img, int64_t c0) {
      for (int c = 0; c < 3; ++c)
        for (int64_t y = 0; y < H; ++y)
          for (int64_t x = 0; x < W; ++x)
            fr[((n * 6 + c0 + c) * H + y) * W + x] =
                static_cast<T>(img.at(static_cast<int>(x), static_cast<int>(y), c)) / T(127.5) -
                T(1);
    };
    put(f1, 0);
    put(f2, 3);
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        fl[((n * 2 + 0) * H + y) * W + x] =
            static_cast<T>(flow.u(static_cast<int>(x), static_cast<int>(y)));
        fl[((n * 2 + 1) * H + y) * W + x] =
            static_cast<T>(flow.v(static_cast<int>(x), static_cast<int>(y)));
      }
    batch.labels.push_back(r.label);
  }
  return batch;
}

template Batch<float> load_batch<float>(const Dataset&, const std::vector<int>&);
template Batch<double> load_batch<double>(const Dataset&, const std::vector<int>&);

}  // namespace fc
