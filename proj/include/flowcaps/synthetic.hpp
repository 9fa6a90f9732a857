#pragma once

#include <string>
#include <vector>

#include "flowcaps/flow_io.hpp"
#include "flowcaps/rng.hpp"
#include "flowcaps/tensor.hpp"

namespace fc {

constexpr int kNumClasses = 8;  // motion direction quantized into octants

enum class ShapeKind { kRectangle, kDisk, kTriangle, kRing, kBar };

std::string shape_name(ShapeKind k);
ShapeKind shape_from_name(const std::string& name);
std::vector<ShapeKind> all_shapes();

enum class BackgroundMode { kStatic, kGlobalTranslation };

struct SceneSpec {
  int width = 64, height = 64;
  BackgroundMode background = BackgroundMode::kStatic;
  std::vector<ShapeKind> shapes = all_shapes();
  std::vector<ShapeKind> holdout_shapes;  // excluded from the train split
  int max_disp = 5;                       // D: displacements in [-D, D]^2 \ {0}

  void validate() const;
};

struct Sample {
  Image8 frame1, frame2;  // 3-channel gray
  FlowField flow;         // exact by construction
  int label = 0;          // direction octant of the shape motion
  ShapeKind shape = ShapeKind::kRectangle;
};

// Octant label for an integer displacement (dx, dy) != (0, 0).
int direction_label(int dx, int dy);

// One moving-shape frame pair. forced_label >= 0 constrains the motion octant;
// allowed (if nonempty) restricts the shape set.
Sample gen_sample(const SceneSpec& spec, Rng& rng, int forced_label = -1,
                  const std::vector<ShapeKind>& allowed = {});

struct SampleRef {
  std::string id, frame1, frame2, flo, split;
  int label = 0;
  ShapeKind shape = ShapeKind::kRectangle;
};

struct Dataset {
  std::string dir;
  SceneSpec spec;
  std::vector<SampleRef> samples;

  std::vector<int> split_indices(const std::string& split) const;
};

// Writes PPM frames, .flo flows, and manifest.json under out_dir. Class labels
// are balanced cyclically within each split; holdout shapes appear only in the
// test split. Deterministic per seed.
Dataset gen_dataset(const SceneSpec& spec, int n_train, int n_test, uint64_t seed,
                    const std::string& out_dir);

Dataset load_manifest(const std::string& manifest_path);

template <class T>
struct Batch {
  Tensor<T> frames;  // [N, 6, H, W], pixels mapped to [-1, 1]
  Tensor<T> flow;    // [N, 2, H, W]
  std::vector<int> labels;
};

template <class T>
Batch<T> load_batch(const Dataset& ds, const std::vector<int>& indices);

}  // namespace fc
