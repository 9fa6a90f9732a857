#include "flowcaps/networks.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace fc {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> ParamStore<T>::add_param(const std::string& name, const Shape& shape, const Init& init,
                                   Rng& rng) {
  if (find_param(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor<T> t = create<T>(shape, init, rng);
  t.set_requires_grad(true);
  params_.emplace_back(name, t);
  return t;
}

template <class T>
Tensor<T> ParamStore<T>::add_buffer(const std::string& name, Tensor<T> value) {
  if (find_buffer(name)) throw ConfigError("duplicate buffer name: " + name);
  buffers_.emplace_back(name, value);
  return value;
}

template <class T>
Tensor<T>* ParamStore<T>::find_param(const std::string& name) {
  for (auto& [n, t] : params_)
    if (n == name) return &t;
  return nullptr;
}

template <class T>
Tensor<T>* ParamStore<T>::find_buffer(const std::string& name) {
  for (auto& [n, t] : buffers_)
    if (n == name) return &t;
  return nullptr;
}

template <class T>
int64_t ParamStore<T>::count() const {
  int64_t c = 0;
  for (const auto& [n, t] : params_) c += t.numel();
  return c;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& [n, t] : params_) t.zero_grad();
}

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (encoder == EncoderKind::kFlowNetSRef) return;  // fixed reference table
  if (contracting_width.size() != 7 || contracting_stride.size() != 7)
    throw ConfigError("exactly 7 contracting blocks required");
  for (int i = 0; i < 7; ++i) {
    int expect = (i == 1 || i == 3 || i == 5) ? 2 : 1;
    if (contracting_stride[static_cast<size_t>(i)] != expect)
      throw ConfigError("contracting downsampling must occur at blocks 2, 4, 6");
  }
  if (expanding_width.size() != 4) throw ConfigError("exactly 4 expanding blocks required");
  if (encoder == EncoderKind::kCapsule) {
    if (caps.size() != 3) throw ConfigError("capsule encoder requires Caps1-3");
    if (caps[2].types != 1 || caps[2].dim != 8)
      throw ConfigError("Caps3 must have 1 capsule type of dimension 8");
    if (caps[0].routing != 0) throw ConfigError("Caps1 is a primary capsule layer (no routing)");
  } else {
    if (conv_encoder.size() != 3) throw ConfigError("conv encoder requires 3 blocks after conv1");
  }
}

int ModelConfig::total_downsample() const {
  if (encoder == EncoderKind::kFlowNetSRef) return 64;
  int ds = conv1.stride;
  if (encoder == EncoderKind::kCapsule)
    for (const auto& c : caps) ds *= c.stride;
  else
    for (const auto& c : conv_encoder) ds *= c.stride;
  for (int s : contracting_stride) ds *= s;
  return ds;
}

int ModelConfig::head_downsample() const {
  if (encoder == EncoderKind::kFlowNetSRef) return 4;
  int ds = total_downsample();
  for (size_t i = 0; i < expanding_width.size(); ++i) ds /= 2;
  return ds;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

std::string ModelConfig::to_kv() const {
  std::ostringstream os;
  os << "preset=" << preset << "\n";
  os << "encoder=" << (encoder == EncoderKind::kCapsule ? "capsule"
                       : encoder == EncoderKind::kConv  ? "conv"
                                                        : "flownets_ref")
     << "\n";
  os << "in_channels=" << in_channels << "\n";
  os << "conv1=" << conv1.out << "," << conv1.kernel << "," << conv1.stride << "\n";
  for (size_t i = 0; i < caps.size(); ++i)
    os << "caps" << (i + 1) << "=" << caps[i].types << "," << caps[i].dim << "," << caps[i].kernel
       << "," << caps[i].stride << "," << caps[i].routing << "\n";
  for (size_t i = 0; i < conv_encoder.size(); ++i)
    os << "enc" << (i + 2) << "=" << conv_encoder[i].out << "," << conv_encoder[i].kernel << ","
       << conv_encoder[i].stride << "\n";
  os << "contracting_width=" << join_ints(contracting_width) << "\n";
  os << "contracting_stride=" << join_ints(contracting_stride) << "\n";
  os << "expanding_width=" << join_ints(expanding_width) << "\n";
  os << "leaky_slope=" << leaky_slope << "\n";
  os << "head_kernel=" << head_kernel << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_kv(const std::string& text) {
  ModelConfig cfg;
  cfg.caps.clear();
  cfg.conv_encoder.clear();
  cfg.contracting_width.clear();
  cfg.contracting_stride.clear();
  cfg.expanding_width.clear();
  std::stringstream ss(text);
  std::string line;
  std::map<std::string, std::string> kv;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> std::string {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError("missing config key: " + k);
    return it->second;
  };
  cfg.preset = kv.count("preset") ? kv["preset"] : "";
  std::string enc = get("encoder");
  cfg.encoder = enc == "capsule" ? EncoderKind::kCapsule
              : enc == "conv"    ? EncoderKind::kConv
                                 : EncoderKind::kFlowNetSRef;
  cfg.in_channels = std::stoi(get("in_channels"));
  if (cfg.encoder == EncoderKind::kFlowNetSRef) return cfg;
  {
    auto v = split_ints(get("conv1"));
    cfg.conv1 = {v[0], v[1], v[2]};
  }
  if (cfg.encoder == EncoderKind::kCapsule) {
    for (int i = 1; i <= 3; ++i) {
      auto v = split_ints(get("caps" + std::to_string(i)));
      cfg.caps.push_back({v[0], v[1], v[2], v[3], v[4]});
    }
  } else {
    for (int i = 2; i <= 4; ++i) {
      auto v = split_ints(get("enc" + std::to_string(i)));
      cfg.conv_encoder.push_back({v[0], v[1], v[2]});
    }
  }
  cfg.contracting_width = split_ints(get("contracting_width"));
  cfg.contracting_stride = split_ints(get("contracting_stride"));
  cfg.expanding_width = split_ints(get("expanding_width"));
  cfg.leaky_slope = std::stod(get("leaky_slope"));
  cfg.head_kernel = std::stoi(get("head_kernel"));
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::preset_config(const std::string& name) {
  ModelConfig cfg;
  cfg.preset = name;
  if (name == "flowcaps-paper") {
    cfg.encoder = EncoderKind::kCapsule;
    cfg.conv1 = {32, 7, 2};
    cfg.caps = {{32, 8, 3, 2, 0}, {16, 8, 3, 2, 3}, {1, 8, 3, 2, 3}};
    cfg.contracting_width = {32, 64, 64, 128, 128, 256, 256};
    cfg.contracting_stride = {1, 2, 1, 2, 1, 2, 1};
    cfg.expanding_width = {128, 64, 32, 16};
  } else if (name == "flowcaps-mini") {
    cfg.encoder = EncoderKind::kCapsule;
    cfg.conv1 = {16, 7, 1};
    cfg.caps = {{16, 8, 3, 2, 0}, {8, 8, 3, 2, 3}, {1, 8, 3, 1, 3}};
    cfg.contracting_width = {16, 32, 32, 64, 64, 128, 128};
    cfg.contracting_stride = {1, 2, 1, 2, 1, 2, 1};
    cfg.expanding_width = {64, 32, 16, 8};
  } else if (name == "flownets-mini") {
    cfg.encoder = EncoderKind::kConv;
    cfg.conv1 = {32, 7, 1};
    cfg.conv_encoder = {{64, 5, 2}, {64, 5, 2}, {32, 3, 1}};
    cfg.contracting_width = {32, 64, 64, 128, 128, 256, 256};
    cfg.contracting_stride = {1, 2, 1, 2, 1, 2, 1};
    cfg.expanding_width = {128, 64, 32, 16};
  } else if (name == "flownets-ref") {
    cfg.encoder = EncoderKind::kFlowNetSRef;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> ModelConfig::preset_names() {
  return {"flowcaps-paper", "flowcaps-mini", "flownets-mini", "flownets-ref"};
}

// ---------------------------------------------------------------------------
// param counting
// ---------------------------------------------------------------------------

template <class T>
ParamCount FlowModel<T>::count_params() const {
  ParamCount pc;
  std::vector<std::string> order;
  std::map<std::string, int64_t> sec;
  for (const auto& [name, t] : store().params()) {
    std::string s = name.substr(0, name.find('/'));
    if (!sec.count(s)) order.push_back(s);
    sec[s] += t.numel();
    pc.total += t.numel();
  }
  for (const auto& s : order) pc.by_section.emplace_back(s, sec[s]);
  return pc;
}

// ---------------------------------------------------------------------------
// capsule / conv encoder-decoder network
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct Conv {
  Tensor<T> w, b;
  int stride = 1, pad = 0, groups = 1;
  bool has_bias = true;
  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, w, has_bias ? &b : nullptr, stride, pad, groups);
  }
};

template <class T>
struct Deconv {
  Tensor<T> w, b;
  int stride = 2, pad = 1;
  bool has_bias = true;
  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv_transpose2d(x, w, has_bias ? &b : nullptr, stride, pad);
  }
};

template <class T>
struct BatchNorm {
  Tensor<T> gamma, beta, rmean, rvar;
  Tensor<T> operator()(const Tensor<T>& x, bool train) const {
    auto& rm = const_cast<Tensor<T>&>(rmean);
    auto& rv = const_cast<Tensor<T>&>(rvar);
    return batchnorm2d(x, gamma, beta, rm, rv, train);
  }
};

// Feature available for a skip connection, identified by downsample factor.
struct SkipSlot {
  int ds = 1;
  int channels = 0;
};

}  // namespace

template <class T>
class EncoderDecoderNet : public FlowModel<T> {
 public:
  EncoderDecoderNet(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    std::vector<SkipSlot> slots;

    auto add_conv = [&](const std::string& name, int in, int out, int k, int stride, int groups,
                        bool bias) {
      Conv<T> c;
      c.stride = stride;
      c.pad = (k - 1) / 2;
      c.groups = groups;
      c.has_bias = bias;
      c.w = store_.add_param(name + ".w", {out, in / groups, k, k},
                             Init::he_fan_in((in / groups) * k * k), rng);
      if (bias) c.b = store_.add_param(name + ".b", {out}, Init::zeros(), rng);
      return c;
    };

    int ds = cfg_.conv1.stride;
    conv1_ = add_conv("encoder/conv1", cfg_.in_channels, cfg_.conv1.out, cfg_.conv1.kernel,
                      cfg_.conv1.stride, 1, true);
    slots.push_back({ds, cfg_.conv1.out});
    int ch = cfg_.conv1.out;

    if (cfg_.encoder == EncoderKind::kCapsule) {
      const auto& c1 = cfg_.caps[0];
      caps_primary_ = add_conv("encoder/caps1", ch, c1.types * c1.dim, c1.kernel, c1.stride, 1,
                               /*bias=*/false);
      ds *= c1.stride;
      slots.push_back({ds, c1.types * c1.dim});
      int types = c1.types, dim = c1.dim;
      for (int i = 1; i < 3; ++i) {
        const auto& cs = cfg_.caps[static_cast<size_t>(i)];
        // grouped prediction conv: [c1*c2*n2, n1, k, k], groups = c1
        Conv<T> pc;
        pc.stride = cs.stride;
        pc.pad = (cs.kernel - 1) / 2;
        pc.groups = types;
        pc.has_bias = false;
        pc.w = store_.add_param("encoder/caps" + std::to_string(i + 1) + ".w",
                                {static_cast<int64_t>(types) * cs.types * cs.dim, dim, cs.kernel,
                                 cs.kernel},
                                Init::he_fan_in(static_cast<int64_t>(dim) * cs.kernel * cs.kernel),
                                rng);
        caps_pred_.push_back(pc);
        caps_spec_.push_back(cs);
        ds *= cs.stride;
        slots.push_back({ds, cs.types * cs.dim});
        types = cs.types;
        dim = cs.dim;
      }
      ch = types * dim;
    } else {
      for (size_t i = 0; i < cfg_.conv_encoder.size(); ++i) {
        const auto& es = cfg_.conv_encoder[i];
        enc_convs_.push_back(add_conv("encoder/enc" + std::to_string(i + 2), ch, es.out, es.kernel,
                                      es.stride, 1, true));
        ds *= es.stride;
        slots.push_back({ds, es.out});
        ch = es.out;
      }
    }

    for (int i = 0; i < 7; ++i) {
      int out = cfg_.contracting_width[static_cast<size_t>(i)];
      int stride = cfg_.contracting_stride[static_cast<size_t>(i)];
      std::string name = "contracting/b" + std::to_string(i + 1);
      contracting_.push_back(add_conv(name + ".conv", ch, out, 3, stride, 1, /*bias=*/false));
      BatchNorm<T> bn;
      bn.gamma = store_.add_param(name + ".bn.gamma", {out}, Init::constant(1.0), rng);
      bn.beta = store_.add_param(name + ".bn.beta", {out}, Init::zeros(), rng);
      bn.rmean = store_.add_buffer(name + ".bn.running_mean", Tensor<T>::zeros({out}));
      bn.rvar = store_.add_buffer(name + ".bn.running_var", Tensor<T>::full({out}, T(1)));
      bns_.push_back(bn);
      ds *= stride;
      slots.push_back({ds, out});
      ch = out;
    }

    for (int i = 0; i < 4; ++i) {
      int out = cfg_.expanding_width[static_cast<size_t>(i)];
      Deconv<T> dc;
      dc.w = store_.add_param("expanding/d" + std::to_string(i + 1) + ".w", {ch, out, 4, 4},
                              Init::he_fan_in(static_cast<int64_t>(ch) * 4), rng);
      dc.b = store_.add_param("expanding/d" + std::to_string(i + 1) + ".b", {out}, Init::zeros(), rng);
      expanding_.push_back(dc);
      ds /= 2;
      // Skip source: last recorded feature at this downsample factor.
      skip_slot_.push_back(-1);
      ch = out;
      for (int s = static_cast<int>(slots.size()) - 1; s >= 0; --s) {
        if (slots[static_cast<size_t>(s)].ds == ds) {
          skip_slot_.back() = s;
          ch += slots[static_cast<size_t>(s)].channels;
          break;
        }
      }
    }
    head_ = add_conv("head/conv", ch, 2, cfg_.head_kernel, 1, 1, true);
  }

  Tensor<T> forward(const Tensor<T>& frames) override {
    if (frames.rank() != 4 || frames.dim(1) != cfg_.in_channels)
      throw ShapeError("expected [N," + std::to_string(cfg_.in_channels) + ",H,W], got " +
                       shape_str(frames.shape()));
    int dsf = cfg_.total_downsample();
    int64_t H = frames.dim(2), W = frames.dim(3);
    if (H % dsf != 0 || W % dsf != 0)
      throw ShapeError("input extents must be multiples of " + std::to_string(dsf) + ", got " +
                       shape_str(frames.shape()));
    bool train = this->mode_ == Mode::kTrain;
    double slope = cfg_.leaky_slope;

    std::vector<Tensor<T>> feats;
    Tensor<T> x = leaky_relu(conv1_(frames), slope);
    feats.push_back(x);

    if (cfg_.encoder == EncoderKind::kCapsule) {
      const auto& c1 = cfg_.caps[0];
      CapsuleGrid<T> grid(caps_primary_(x), c1.types, c1.dim);
      feats.push_back(grid.tensor);
      for (size_t i = 0; i < caps_pred_.size(); ++i) {
        const auto& cs = caps_spec_[i];
        Tensor<T> pred = caps_predictions(grid, caps_pred_[i].w, cs.types, cs.dim,
                                          caps_pred_[i].stride, caps_pred_[i].pad);
        grid = dynamic_route(pred, cs.routing);
        feats.push_back(grid.tensor);
      }
      x = grid.tensor;
    } else {
      for (const auto& c : enc_convs_) {
        x = leaky_relu(c(x), slope);
        feats.push_back(x);
      }
    }

    for (size_t i = 0; i < contracting_.size(); ++i) {
      x = leaky_relu(bns_[i](contracting_[i](x), train), slope);
      feats.push_back(x);
    }

    for (size_t i = 0; i < expanding_.size(); ++i) {
      x = leaky_relu(expanding_[i](x), slope);
      int s = skip_slot_[i];
      if (s >= 0) {
        const Tensor<T>& skip = feats[static_cast<size_t>(s)];
        if (skip.dim(2) != x.dim(2) || skip.dim(3) != x.dim(3))
          throw ConfigError("skip connection shape mismatch: " + shape_str(skip.shape()) +
                            " vs " + shape_str(x.shape()));
        x = concat(std::vector<Tensor<T>>{x, skip}, 1);
      }
    }
    Tensor<T> flow = head_(x);
    int hd = cfg_.head_downsample();
    if (hd > 1) flow = scale(bilinear_resize(flow, H, W), static_cast<T>(hd));
    return flow;
  }

  ParamStore<T>& store() override { return store_; }
  const ModelConfig& config() const override { return cfg_; }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  Conv<T> conv1_, caps_primary_, head_;
  std::vector<Conv<T>> caps_pred_;
  std::vector<CapsSpec> caps_spec_;  // Caps2..Caps3 specs
  std::vector<Conv<T>> enc_convs_;
  std::vector<Conv<T>> contracting_;
  std::vector<BatchNorm<T>> bns_;
  std::vector<Deconv<T>> expanding_;
  std::vector<int> skip_slot_;
};

// ---------------------------------------------------------------------------
// FlowNetS reference replica (original layer table, multiscale refinement)
// ---------------------------------------------------------------------------

template <class T>
class FlowNetSRef : public FlowModel<T> {
 public:
  explicit FlowNetSRef(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    auto conv = [&](const std::string& n, int in, int out, int k, int s) {
      Conv<T> c;
      c.stride = s;
      c.pad = (k - 1) / 2;
      c.w = store_.add_param(n + ".w", {out, in, k, k}, Init::he_fan_in(), rng);
      c.b = store_.add_param(n + ".b", {out}, Init::zeros(), rng);
      return c;
    };
    auto deconv = [&](const std::string& n, int in, int out, bool bias) {
      Deconv<T> d;
      d.w = store_.add_param(n + ".w", {in, out, 4, 4}, Init::he_fan_in(static_cast<int64_t>(in) * 4), rng);
      if (bias) d.b = store_.add_param(n + ".b", {out}, Init::zeros(), rng);
      d.has_bias = bias;
      return d;
    };
    convs_ = {conv("encoder/conv1", 6, 64, 7, 2),      conv("encoder/conv2", 64, 128, 5, 2),
              conv("encoder/conv3", 128, 256, 5, 2),   conv("contracting/conv3_1", 256, 256, 3, 1),
              conv("contracting/conv4", 256, 512, 3, 2), conv("contracting/conv4_1", 512, 512, 3, 1),
              conv("contracting/conv5", 512, 512, 3, 2), conv("contracting/conv5_1", 512, 512, 3, 1),
              conv("contracting/conv6", 512, 1024, 3, 2), conv("contracting/conv6_1", 1024, 1024, 3, 1)};
    deconvs_ = {deconv("expanding/deconv5", 1024, 512, true), deconv("expanding/deconv4", 1026, 256, true),
                deconv("expanding/deconv3", 770, 128, true), deconv("expanding/deconv2", 386, 64, true)};
    upflows_ = {deconv("expanding/upflow6", 2, 2, false), deconv("expanding/upflow5", 2, 2, false),
                deconv("expanding/upflow4", 2, 2, false), deconv("expanding/upflow3", 2, 2, false)};
    predicts_ = {conv("head/predict6", 1024, 2, 3, 1), conv("head/predict5", 1026, 2, 3, 1),
                 conv("head/predict4", 770, 2, 3, 1), conv("head/predict3", 386, 2, 3, 1),
                 conv("head/predict2", 194, 2, 3, 1)};
  }

  Tensor<T> forward(const Tensor<T>& frames) override {
    if (frames.rank() != 4 || frames.dim(1) != 6)
      throw ShapeError("expected [N,6,H,W], got " + shape_str(frames.shape()));
    int64_t H = frames.dim(2), W = frames.dim(3);
    if (H % 64 != 0 || W % 64 != 0)
      throw ShapeError("input extents must be multiples of 64, got " + shape_str(frames.shape()));
    auto lrelu = [&](const Tensor<T>& t) { return leaky_relu(t, 0.1); };
    Tensor<T> c1 = lrelu(convs_[0](frames));
    Tensor<T> c2 = lrelu(convs_[1](c1));
    Tensor<T> c3 = lrelu(convs_[3](lrelu(convs_[2](c2))));
    Tensor<T> c4 = lrelu(convs_[5](lrelu(convs_[4](c3))));
    Tensor<T> c5 = lrelu(convs_[7](lrelu(convs_[6](c4))));
    Tensor<T> c6 = lrelu(convs_[9](lrelu(convs_[8](c5))));

    Tensor<T> flow6 = predicts_[0](c6);
    Tensor<T> cat5 = concat(std::vector<Tensor<T>>{lrelu(deconvs_[0](c6)), c5, upflows_[0](flow6)}, 1);
    Tensor<T> flow5 = predicts_[1](cat5);
    Tensor<T> cat4 = concat(std::vector<Tensor<T>>{lrelu(deconvs_[1](cat5)), c4, upflows_[1](flow5)}, 1);
    Tensor<T> flow4 = predicts_[2](cat4);
    Tensor<T> cat3 = concat(std::vector<Tensor<T>>{lrelu(deconvs_[2](cat4)), c3, upflows_[2](flow4)}, 1);
    Tensor<T> flow3 = predicts_[3](cat3);
    Tensor<T> cat2 = concat(std::vector<Tensor<T>>{lrelu(deconvs_[3](cat3)), c2, upflows_[3](flow3)}, 1);
    Tensor<T> flow2 = predicts_[4](cat2);
    return scale(bilinear_resize(flow2, H, W), T(4));
  }

  ParamStore<T>& store() override { return store_; }
  const ModelConfig& config() const override { return cfg_; }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  std::vector<Conv<T>> convs_;
  std::vector<Deconv<T>> deconvs_, upflows_;
  std::vector<Conv<T>> predicts_;
};

template <class T>
std::unique_ptr<FlowModel<T>> build_flow_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (cfg.encoder == EncoderKind::kFlowNetSRef)
    return std::make_unique<FlowNetSRef<T>>(cfg, seed);
  return std::make_unique<EncoderDecoderNet<T>>(cfg, seed);
}

template <class T>
std::unique_ptr<FlowModel<T>> build_flow_model(const std::string& preset, uint64_t seed) {
  return build_flow_model<T>(ModelConfig::preset_config(preset), seed);
}

#define FC_INSTANTIATE_NET(T)                                                              \
  template class ParamStore<T>;                                                            \
  template class FlowModel<T>;                                                             \
  template class EncoderDecoderNet<T>;                                                     \
  template class FlowNetSRef<T>;                                                           \
  template std::unique_ptr<FlowModel<T>> build_flow_model<T>(const ModelConfig&, uint64_t); \
  template std::unique_ptr<FlowModel<T>> build_flow_model<T>(const std::string&, uint64_t);

FC_INSTANTIATE_NET(float)
FC_INSTANTIATE_NET(double)

#undef FC_INSTANTIATE_NET

}  // namespace fc
