#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowcaps/capsules.hpp"
#include "flowcaps/tensor.hpp"

namespace fc {

// Ordered named parameters and buffers of a model. Buffers (batchnorm running
// stats) are checkpointed but not trained or counted.
template <class T>
class ParamStore {
 public:
  Tensor<T> add_param(const std::string& name, const Shape& shape, const Init& init, Rng& rng);
  Tensor<T> add_buffer(const std::string& name, Tensor<T> value);

  std::vector<std::pair<std::string, Tensor<T>>>& params() { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor<T>>>& buffers() { return buffers_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& buffers() const { return buffers_; }

  Tensor<T>* find_param(const std::string& name);
  Tensor<T>* find_buffer(const std::string& name);
  int64_t count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;
};

enum class EncoderKind { kCapsule, kConv, kFlowNetSRef };

struct CapsSpec {
  int types = 0, dim = 0, kernel = 3, stride = 1, routing = 0;  // routing 0: primary (no routing)
};

struct ConvSpec {
  int out = 0, kernel = 3, stride = 1;
};

struct ModelConfig {
  std::string preset;
  EncoderKind encoder = EncoderKind::kCapsule;
  int in_channels = 6;
  ConvSpec conv1{32, 7, 2};
  std::vector<CapsSpec> caps;              // capsule encoder: Caps1..Caps3
  std::vector<ConvSpec> conv_encoder;      // conv encoder blocks after conv1
  std::vector<int> contracting_width;      // 7 blocks
  std::vector<int> contracting_stride;     // 7 blocks
  std::vector<int> expanding_width;        // 4 blocks, each x2 upsampling
  double leaky_slope = 0.1;
  int head_kernel = 3;

  void validate() const;
  int total_downsample() const;   // input extent must divide this
  int head_downsample() const;    // flow scale factor applied after resize
  std::string to_kv() const;
  static ModelConfig from_kv(const std::string& text);
  static ModelConfig preset_config(const std::string& name);
  static std::vector<std::string> preset_names();
};

struct ParamCount {
  int64_t total = 0;
  std::vector<std::pair<std::string, int64_t>> by_section;  // encoder/contracting/expanding/head
};

enum class Mode { kTrain, kEval };

template <class T>
class FlowModel {
 public:
  virtual ~FlowModel() = default;
  // frames [N, 6, H, W] normalized to [-1, 1]; returns flow [N, 2, H, W] in pixels.
  virtual Tensor<T> forward(const Tensor<T>& frames) = 0;
  virtual ParamStore<T>& store() = 0;
  const ParamStore<T>& store() const { return const_cast<FlowModel*>(this)->store(); }
  virtual const ModelConfig& config() const = 0;
  void set_mode(Mode m) { mode_ = m; }
  Mode mode() const { return mode_; }
  ParamCount count_params() const;

 protected:
  Mode mode_ = Mode::kTrain;
};

template <class T>
std::unique_ptr<FlowModel<T>> build_flow_model(const ModelConfig& cfg, uint64_t seed);

template <class T>
std::unique_ptr<FlowModel<T>> build_flow_model(const std::string& preset, uint64_t seed);

}  // namespace fc
