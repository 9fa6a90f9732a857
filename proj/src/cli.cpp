#include "flowcaps/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>

#include <CLI11.hpp>

#include "flowcaps/classifier.hpp"
#include "flowcaps/trainer.hpp"

namespace fc {

namespace {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// gradient checks
// ---------------------------------------------------------------------------

using Td = Tensor<double>;
using OpFn = std::function<Td(Td&)>;

struct GradcheckCtx {
  Rng rng{0x9c0ffee1};
  int fails = 0;
  bool verbose = false;

  Td sum_all(const Td& t) {
    std::vector<int> axes(static_cast<size_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) axes[static_cast<size_t>(i)] = i;
    return reduce_sum(t, axes, false);
  }

  void check(const std::string& name, Td x, const OpFn& op, double tol = 1e-4,
             int sample = -1, double eps = 1e-4) {
    Td y0 = op(x);
    Td r = create<double>(y0.shape(), Init::uniform(-1.0, 1.0), rng);
    auto f = [&op, &r, this](Td& t) { return sum_all(mul(op(t), r)); };
    double rel = finite_diff_check<double>(f, x, eps, sample, 77);
    bool ok = rel < tol;
    if (!ok) ++fails;
    if (verbose || !ok)
      std::printf("%-28s rel_err %.3e  tol %.0e  %s\n", name.c_str(), rel, tol,
                  ok ? "ok" : "FAIL");
  }

  // Raw scalar function (already reduced), e.g. losses.
  void check_scalar(const std::string& name, Td x, const OpFn& f, double tol = 1e-4,
                    int sample = -1, double eps = 1e-4) {
    double rel = finite_diff_check<double>(f, x, eps, sample, 77);
    bool ok = rel < tol;
    if (!ok) ++fails;
    if (verbose || !ok)
      std::printf("%-28s rel_err %.3e  tol %.0e  %s\n", name.c_str(), rel, tol,
                  ok ? "ok" : "FAIL");
  }

  Td rand(const Shape& s, double lo, double hi) {
    return create<double>(s, Init::uniform(lo, hi), rng);
  }
};

}  // namespace

int run_gradcheck(bool verbose) {
  GradcheckCtx c;
  c.verbose = verbose;

  {  // elementwise binary ops with broadcasting, both operands
    Td b = c.rand({1, 3, 1}, 0.5, 1.5);
    Td a = c.rand({2, 3, 4}, -1.0, 1.0);
    c.check("add(x,b)", c.rand({2, 3, 4}, -1, 1), [&](Td& t) { return add(t, b); });
    c.check("add(a,x)", c.rand({1, 3, 1}, -1, 1), [&](Td& t) { return add(a, t); });
    c.check("sub(x,b)", c.rand({2, 3, 4}, -1, 1), [&](Td& t) { return sub(t, b); });
    c.check("mul(x,b)", c.rand({2, 3, 4}, -1, 1), [&](Td& t) { return mul(t, b); });
    c.check("mul(a,x)", c.rand({1, 3, 1}, -1, 1), [&](Td& t) { return mul(a, t); });
    c.check("divide(x,b)", c.rand({2, 3, 4}, -1, 1), [&](Td& t) { return divide(t, b); });
    c.check("divide(a,x)", c.rand({1, 3, 1}, 0.5, 1.5), [&](Td& t) { return divide(a, t); });
  }
  c.check("add_scalar", c.rand({2, 5}, -1, 1), [](Td& t) { return add_scalar(t, 0.7); });
  c.check("scale", c.rand({2, 5}, -1, 1), [](Td& t) { return scale(t, -1.3); });
  c.check("exp", c.rand({2, 5}, -1, 1), [](Td& t) { return exp(t); });
  c.check("log", c.rand({2, 5}, 0.5, 2.0), [](Td& t) { return log(t); });
  c.check("sqrt", c.rand({2, 5}, 0.5, 2.0), [](Td& t) { return sqrt(t); });
  c.check("cosh", c.rand({2, 5}, -1, 1), [](Td& t) { return cosh(t); });
  c.check("square", c.rand({2, 5}, -1, 1), [](Td& t) { return square(t); });
  c.check("neg", c.rand({2, 5}, -1, 1), [](Td& t) { return neg(t); });
  c.check("abs_pos", c.rand({2, 5}, 0.3, 1.0), [](Td& t) { return abs(t); });
  c.check("abs_neg", c.rand({2, 5}, -1.0, -0.3), [](Td& t) { return abs(t); });
  c.check("relu", c.rand({3, 8}, -1.0, 1.0), [](Td& t) { return relu(t); });
  c.check("leaky_relu", c.rand({3, 8}, -1.0, 1.0), [](Td& t) { return leaky_relu(t, 0.1); });
  c.check("reshape", c.rand({2, 3, 4}, -1, 1), [](Td& t) { return reshape(t, {4, 6}); });
  {
    Td other = c.rand({2, 2, 4}, -1, 1);
    c.check("concat", c.rand({2, 3, 4}, -1, 1),
            [&](Td& t) { return concat(std::vector<Td>{t, other}, 1); });
  }
  c.check("reduce_sum_keep", c.rand({2, 3, 4}, -1, 1),
          [](Td& t) { return reduce_sum(t, {0, 2}, true); });
  c.check("reduce_sum", c.rand({2, 3, 4}, -1, 1),
          [](Td& t) { return reduce_sum(t, {1}, false); });
  c.check("reduce_mean", c.rand({2, 3, 4}, -1, 1),
          [](Td& t) { return reduce_mean(t, {1, 2}, false); });
  {
    Td A = c.rand({3, 4}, -1, 1), B = c.rand({4, 5}, -1, 1);
    c.check("matmul_a", c.rand({3, 4}, -1, 1), [&](Td& t) { return matmul(t, B); });
    c.check("matmul_b", c.rand({4, 5}, -1, 1), [&](Td& t) { return matmul(A, t); });
  }
  c.check("softmax", c.rand({3, 5}, -2, 2), [](Td& t) { return softmax(t, 1); });
  {
    Td x = c.rand({2, 4, 6, 6}, -1, 1);
    Td w = c.rand({3, 4, 3, 3}, -0.5, 0.5);
    Td bias = c.rand({3}, -0.5, 0.5);
    c.check("conv2d_x", c.rand({2, 4, 6, 6}, -1, 1),
            [&](Td& t) { return conv2d(t, w, &bias, 2, 1, 1); });
    c.check("conv2d_w", c.rand({3, 4, 3, 3}, -0.5, 0.5),
            [&](Td& t) { return conv2d(x, t, &bias, 2, 1, 1); });
    c.check("conv2d_b", c.rand({3}, -0.5, 0.5),
            [&](Td& t) { return conv2d(x, w, &t, 2, 1, 1); });
    Td wg = c.rand({6, 2, 3, 3}, -0.5, 0.5);
    c.check("conv2d_grouped_x", c.rand({2, 4, 6, 6}, -1, 1),
            [&](Td& t) { return conv2d(t, wg, static_cast<const Td*>(nullptr), 1, 1, 2); });
    c.check("conv2d_grouped_w", c.rand({6, 2, 3, 3}, -0.5, 0.5),
            [&](Td& t) { return conv2d(x, t, static_cast<const Td*>(nullptr), 1, 1, 2); });
  }
  {
    Td x = c.rand({2, 3, 5, 5}, -1, 1);
    Td w = c.rand({3, 4, 4, 4}, -0.5, 0.5);
    Td bias = c.rand({4}, -0.5, 0.5);
    c.check("deconv_x", c.rand({2, 3, 5, 5}, -1, 1),
            [&](Td& t) { return conv_transpose2d(t, w, &bias, 2, 1); });
    c.check("deconv_w", c.rand({3, 4, 4, 4}, -0.5, 0.5),
            [&](Td& t) { return conv_transpose2d(x, t, &bias, 2, 1); });
    c.check("deconv_b", c.rand({4}, -0.5, 0.5),
            [&](Td& t) { return conv_transpose2d(x, w, &t, 2, 1); });
  }
  {
    // Distinct values with gaps well above 2*eps keep every window's argmax
    // stable under the finite-difference perturbation.
    std::vector<double> mp(96);
    for (size_t i = 0; i < mp.size(); ++i)
      mp[i] = static_cast<double>((i * 37) % 96) / 48.0 - 1.0;
    c.check("maxpool2d", Td::from_data({2, 3, 4, 4}, mp), [](Td& t) { return maxpool2d(t); });
  }
  {
    Td x = c.rand({4, 3, 5, 5}, -1, 1);
    Td gamma = c.rand({3}, 0.5, 1.5), beta = c.rand({3}, -0.5, 0.5);
    auto bn = [&](Td& xx, Td& g, Td& b) {
      Td rm = Tensor<double>::zeros({3});
      Td rv = Tensor<double>::full({3}, 1.0);
      return batchnorm2d(xx, g, b, rm, rv, /*train=*/true);
    };
    c.check("batchnorm_x", c.rand({4, 3, 5, 5}, -1, 1),
            [&](Td& t) { return bn(t, gamma, beta); });
    c.check("batchnorm_gamma", c.rand({3}, 0.5, 1.5), [&](Td& t) { return bn(x, t, beta); });
    c.check("batchnorm_beta", c.rand({3}, -0.5, 0.5), [&](Td& t) { return bn(x, gamma, t); });
  }
  c.check("bilinear_up", c.rand({2, 3, 4, 4}, -1, 1),
          [](Td& t) { return bilinear_resize(t, 8, 8); });
  c.check("bilinear_down", c.rand({2, 3, 8, 8}, -1, 1),
          [](Td& t) { return bilinear_resize(t, 4, 4); });
  {
    const int c1 = 4, n1 = 8, c2 = 3, n2 = 8;
    Td w = c.rand({c1 * c2 * n2, n1, 3, 3}, -0.3, 0.3);
    Td x = c.rand({1, c1 * n1, 6, 6}, -1, 1);
    auto route = [&](Td& xx, Td& ww) {
      CapsuleGrid<double> grid(xx, c1, n1);
      return caps_layer(grid, ww, c2, n2, 1, 1, 3).tensor;
    };
    c.check("caps_layer_x", c.rand({1, c1 * n1, 6, 6}, -1, 1),
            [&](Td& t) { return route(t, w); });
    c.check("caps_layer_w", c.rand({c1 * c2 * n2, n1, 3, 3}, -0.3, 0.3),
            [&](Td& t) { return route(x, t); });
  }
  {
    Rng g(31);
    Td gt = create<double>({2, 2, 8, 8}, Init::uniform(-2.0, 2.0), g);
    // carve out a zero-flow region so the |T|=0 path is exercised
    double* gv = gt.raw_data();
    for (int i = 0; i < 2 * 2 * 8 * 3; ++i) gv[i] = 0.0;
    c.check_scalar("loss_epe", c.rand({2, 2, 8, 8}, -2, 2),
                   [&](Td& t) { return epe(t, gt); });
    c.check_scalar("loss_l_mag", c.rand({2, 2, 8, 8}, -2, 2),
                   [&](Td& t) { return l_mag(t, gt); });
    c.check_scalar("loss_l_ang", c.rand({2, 2, 8, 8}, -2, 2),
                   [&](Td& t) { return l_ang(t, gt); });
    c.check_scalar("loss_combined", c.rand({2, 2, 8, 8}, -2, 2),
                   [&](Td& t) { return combined_loss(t, gt, 0.15); });
  }
  {
    std::vector<int> labels = {0, 3, 7, 5};
    c.check_scalar("cross_entropy", c.rand({4, 8}, -2, 2),
                   [&](Td& t) { return cross_entropy(t, labels); });
  }
  {  // classifier composition
    Rng g(41);
    Classifier<double> cls(ClassifierConfig{}, 11);
    std::vector<int> labels = {1, 6};
    Td flow = create<double>({2, 2, 32, 32}, Init::uniform(-3.0, 3.0), g);
    c.check_scalar("classifier_full", flow,
                   [&](Td& t) { return cross_entropy(cls.forward(t), labels); }, 1e-3, 16, 1e-5);
  }
  {  // full flow model + combined loss
    auto model = build_flow_model<double>("flowcaps-mini", 5);
    model->set_mode(Mode::kTrain);
    Rng g(9);
    Td frames = create<double>({2, 6, 32, 32}, Init::uniform(-1.0, 1.0), g);
    Td gt = create<double>({2, 2, 32, 32}, Init::uniform(-2.0, 2.0), g);
    auto loss_fn = [&]() { return combined_loss(model->forward(frames), gt, 0.15); };
    c.check_scalar("flowcaps_mini_frames", frames,
                   [&](Td& t) { return combined_loss(model->forward(t), gt, 0.15); }, 1e-3, 16,
                   1e-5);
    for (const char* pname :
         {"head/conv.w", "encoder/caps2.w", "contracting/b1.bn.gamma", "expanding/d2.w"}) {
      Td p = *model->store().find_param(pname);
      c.check_scalar(std::string("flowcaps_mini ") + pname, p,
                     [&](Td& t) { (void)t; return loss_fn(); }, 1e-3, 8, 1e-5);
    }
  }
  return c.fails;
}

// ---------------------------------------------------------------------------
// command implementations
// ---------------------------------------------------------------------------

namespace {

struct Global {
  uint64_t seed = 0;
  std::string precision = "f32";
  std::string out = "out";
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, text.data(), text.size());
}

LossKind parse_loss(const std::string& s) {
  if (s == "epe") return LossKind::kEpe;
  if (s == "combined") return LossKind::kCombined;
  throw ConfigError("unknown loss: " + s);
}

template <class T>
Tensor<T> frames_tensor(const Image8& a, const Image8& b) {
  if (a.width != b.width || a.height != b.height)
    throw DataError("frame pair extents differ");
  int64_t H = a.height, W = a.width;
  Tensor<T> t = Tensor<T>::zeros({1, 6, H, W});
  T* d = t.raw_data();
  auto put = [&](const Image8& img, int64_t c0) {
    for (int c = 0; c < 3; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
          d[((c0 + c) * H + y) * W + x] =
              static_cast<T>(img.at(static_cast<int>(x), static_cast<int>(y),
                                    img.channels == 1 ? 0 : c)) /
                  T(127.5) -
              T(1);
  };
  put(a, 0);
  put(b, 3);
  return t;
}

template <class T>
int do_train_flow(const Global& g, const std::string& manifest, const std::string& preset,
                  const TrainOptions& base) {
  Dataset ds = load_manifest(manifest);
  auto model = build_flow_model<T>(preset, g.seed);
  TrainOptions opts = base;
  opts.seed = g.seed;
  ensure_dir(g.out);
  opts.checkpoint_best = g.out + "/best.ckpt";
  opts.checkpoint_last = g.out + "/last.ckpt";
  double baseline = zero_flow_epe(ds, ds.split_indices("test").empty() ? "train" : "test");
  std::printf("zero_flow_epe=%.6f\n", baseline);
  TrainRecord rec = train_flow(*model, ds, opts);
  write_text(g.out + "/train_record.csv", rec.to_csv());
  std::printf("epochs_run=%zu\nbest_epe=%.6f\nbest_epoch=%d\n", rec.epochs.size(), rec.best_epe,
              rec.best_epoch);
  std::printf("record=%s\ncheckpoint=%s\n", (g.out + "/train_record.csv").c_str(),
              opts.checkpoint_best.c_str());
  return 0;
}

template <class T>
int do_eval_flow(const Global& g, const std::string& ckpt, const std::string& manifest,
                 const std::string& split) {
  Dataset ds = load_manifest(manifest);
  CheckpointState<T> st = load_checkpoint<T>(ckpt);
  EvalResult r = evaluate(*st.model, ds, split);
  std::ostringstream os;
  os << "class,count,epe\n";
  for (int k = 0; k < kNumClasses; ++k) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%d,%lld,%.6f\n", k,
                  static_cast<long long>(r.per_class_n[static_cast<size_t>(k)]),
                  r.per_class_epe[static_cast<size_t>(k)]);
    os << buf;
  }
  ensure_dir(g.out);
  write_text(g.out + "/eval.csv", os.str());
  std::printf("%s", os.str().c_str());
  std::printf("mean_epe=%.6f\n", r.mean_epe);
  return 0;
}

template <class T>
int do_predict(const std::string& ckpt, const std::string& f1, const std::string& f2,
               const std::string& out_flo) {
  CheckpointState<T> st = load_checkpoint<T>(ckpt);
  st.model->set_mode(Mode::kEval);
  Tensor<T> frames = frames_tensor<T>(read_ppm(f1), read_ppm(f2));
  Tensor<T> pred = st.model->forward(frames);
  int64_t H = pred.dim(2), W = pred.dim(3);
  FlowField flow(static_cast<int32_t>(W), static_cast<int32_t>(H));
  const T* p = pred.raw_data();
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      flow.u(static_cast<int>(x), static_cast<int>(y)) = static_cast<float>(p[(0 * H + y) * W + x]);
      flow.v(static_cast<int>(x), static_cast<int>(y)) = static_cast<float>(p[(1 * H + y) * W + x]);
    }
  write_flo(out_flo, flow);
  std::printf("flo=%s\n", out_flo.c_str());
  return 0;
}

// Classifier checkpoints: parameters plus config, single binary blob.
template <class T>
void save_cls(const std::string& path, Classifier<T>& cls) {
  std::vector<uint8_t> out;
  auto put = [&](const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  };
  auto put_u32 = [&](uint32_t v) { put(&v, 4); };
  auto put_i64 = [&](int64_t v) { put(&v, 8); };
  auto put_str = [&](const std::string& s) {
    put_u32(static_cast<uint32_t>(s.size()));
    put(s.data(), s.size());
  };
  put("FCCLS001", 8);
  put_u32(static_cast<uint32_t>(sizeof(T)));
  const auto& cfg = cls.config();
  put_u32(static_cast<uint32_t>(cfg.conv_widths.size()));
  for (int w : cfg.conv_widths) put_u32(static_cast<uint32_t>(w));
  put_u32(static_cast<uint32_t>(cfg.dense_width));
  put_u32(static_cast<uint32_t>(cfg.num_classes));
  put_u32(static_cast<uint32_t>(cfg.in_channels));
  put_u32(static_cast<uint32_t>(cls.store().params().size()));
  for (auto& [name, p] : cls.store().params()) {
    put_str(name);
    put_u32(static_cast<uint32_t>(p.rank()));
    for (int i = 0; i < p.rank(); ++i) put_i64(p.dim(i));
    put(p.raw_data(), static_cast<size_t>(p.numel()) * sizeof(T));
  }
  write_file(path, out.data(), out.size());
}

template <class T>
Classifier<T> load_cls(const std::string& path) {
  auto buf = read_file(path);
  size_t pos = 0;
  auto get = [&](void* p, size_t n) {
    if (pos + n > buf.size()) throw FormatError("classifier checkpoint truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  };
  auto get_u32 = [&]() { uint32_t v; get(&v, 4); return v; };
  auto get_i64 = [&]() { int64_t v; get(&v, 8); return v; };
  char magic[8];
  get(magic, 8);
  if (std::memcmp(magic, "FCCLS001", 8) != 0) throw FormatError("bad classifier checkpoint magic");
  if (get_u32() != sizeof(T)) throw FormatError("classifier checkpoint precision mismatch");
  ClassifierConfig cfg;
  cfg.conv_widths.assign(get_u32(), 0);
  for (auto& w : cfg.conv_widths) w = static_cast<int>(get_u32());
  cfg.dense_width = static_cast<int>(get_u32());
  cfg.num_classes = static_cast<int>(get_u32());
  cfg.in_channels = static_cast<int>(get_u32());
  Classifier<T> cls(cfg, 0);
  uint32_t np = get_u32();
  Rng rng(0);
  for (uint32_t i = 0; i < np; ++i) {
    uint32_t len = get_u32();
    std::string name(len, '\0');
    get(name.data(), len);
    Shape shape(get_u32());
    for (auto& d : shape) d = get_i64();
    Tensor<T>* p = cls.store().find_param(name);
    if (!p) {
      cls.store().add_param(name, shape, Init::zeros(), rng);
      p = cls.store().find_param(name);
      p->set_requires_grad(true);
    }
    if (p->shape() != shape) throw FormatError("classifier checkpoint shape mismatch: " + name);
    get(p->raw_data(), static_cast<size_t>(p->numel()) * sizeof(T));
  }
  return cls;
}

template <class T>
std::vector<FlowField> resolve_flows(const Dataset& ds, const std::string& source,
                                     const std::string& flow_ckpt) {
  if (source == "gt") return gt_flows<T>(ds);
  if (source == "pred") {
    if (flow_ckpt.empty()) throw ConfigError("--flow-ckpt required with --flow-source pred");
    CheckpointState<T> st = load_checkpoint<T>(flow_ckpt);
    return predicted_flows<T>(*st.model, ds);
  }
  throw ConfigError("unknown flow source: " + source);
}

template <class T>
int do_train_cls(const Global& g, const std::string& manifest, const std::string& source,
                 const std::string& flow_ckpt, const ClsOptions& base) {
  Dataset ds = load_manifest(manifest);
  auto flows = resolve_flows<T>(ds, source, flow_ckpt);
  Classifier<T> cls(ClassifierConfig{}, g.seed);
  ClsOptions opts = base;
  opts.seed = g.seed;
  ClsRecord rec = train_classifier(cls, ds, flows, opts);
  ensure_dir(g.out);
  write_text(g.out + "/cls_record.csv", rec.to_csv());
  ClsEval ev = evaluate_classifier(cls, ds, flows, "test");
  write_text(g.out + "/cls_confusion.csv", ev.to_csv());
  save_cls(g.out + "/cls.ckpt", cls);
  std::printf("accuracy=%.6f\ncheckpoint=%s\n", ev.accuracy, (g.out + "/cls.ckpt").c_str());
  return 0;
}

template <class T>
int do_eval_cls(const Global& g, const std::string& cls_ckpt, const std::string& manifest,
                const std::string& source, const std::string& flow_ckpt,
                const std::string& split) {
  Dataset ds = load_manifest(manifest);
  auto flows = resolve_flows<T>(ds, source, flow_ckpt);
  Classifier<T> cls = load_cls<T>(cls_ckpt);
  ClsEval ev = evaluate_classifier(cls, ds, flows, split);
  ensure_dir(g.out);
  write_text(g.out + "/cls_confusion.csv", ev.to_csv());
  std::printf("%saccuracy=%.6f\n", ev.to_csv().c_str(), ev.accuracy);
  return 0;
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
  std::vector<uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.empty()) throw ConfigError("empty fraction list");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// argv wiring
// ---------------------------------------------------------------------------

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"flowcaps: capsule optical-flow laboratory"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value defaults; flags override");

  Global g;
  app.add_option("--seed", g.seed, "global RNG seed")->capture_default_str();
  app.add_option("--precision", g.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  app.add_option("--out", g.out, "output directory")->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  SceneSpec spec;
  int n_train = 800, n_test = 200;
  std::string background = "static";
  std::vector<std::string> holdout;
  gen->add_option("--width", spec.width)->capture_default_str();
  gen->add_option("--height", spec.height)->capture_default_str();
  gen->add_option("--disp", spec.max_disp, "max displacement D")->capture_default_str();
  gen->add_option("--n-train", n_train)->capture_default_str();
  gen->add_option("--n-test", n_test)->capture_default_str();
  gen->add_option("--background", background)->check(CLI::IsMember({"static", "global"}));
  gen->add_option("--holdout", holdout, "shape names excluded from the train split");

  // train-flow
  auto* trainf = app.add_subcommand("train-flow", "train a flow model");
  std::string manifest, preset = "flowcaps-mini", loss_name = "epe", resume;
  TrainOptions topts;
  trainf->add_option("--manifest", manifest, "dataset manifest.json")->required();
  trainf->add_option("--preset", preset)->check(CLI::IsMember(ModelConfig::preset_names()));
  trainf->add_option("--epochs", topts.epochs)->capture_default_str();
  trainf->add_option("--batch", topts.batch)->capture_default_str();
  trainf->add_option("--loss", loss_name)->check(CLI::IsMember({"epe", "combined"}));
  trainf->add_option("--alpha", topts.alpha)->capture_default_str();
  trainf->add_option("--lr", topts.adam.lr)->capture_default_str();
  trainf->add_option("--patience", topts.patience)->capture_default_str();
  trainf->add_option("--target-epe", topts.target_epe)->capture_default_str();
  trainf->add_option("--max-steps", topts.max_steps)->capture_default_str();
  trainf->add_option("--resume", resume, "checkpoint to resume from");
  trainf->add_flag("--hflip", topts.hflip, "horizontal-flip augmentation");
  trainf->add_flag("--verbose", topts.verbose);

  // eval-flow
  auto* evalf = app.add_subcommand("eval-flow", "evaluate a flow checkpoint");
  std::string eckpt, emanifest, esplit = "test";
  evalf->add_option("--ckpt", eckpt)->required();
  evalf->add_option("--manifest", emanifest)->required();
  evalf->add_option("--split", esplit)->capture_default_str();

  // predict
  auto* pred = app.add_subcommand("predict", "predict flow for a frame pair");
  std::string pckpt, pout = "pred.flo";
  std::vector<std::string> pair;
  pred->add_option("--ckpt", pckpt)->required();
  pred->add_option("--pair", pair, "frame1.ppm frame2.ppm")->expected(2)->required();
  pred->add_option("--out", pout, "output .flo path")->capture_default_str();

  // viz
  auto* viz = app.add_subcommand("viz", "render a .flo as a color-wheel PPM");
  std::string vflo, vout;
  double vmax = -1.0;
  viz->add_option("flo", vflo, "input .flo")->required();
  viz->add_option("--out", vout, "output .ppm (default: input with .ppm)");
  viz->add_option("--max-rad", vmax, "normalization magnitude; <=0 auto");

  // params
  auto* par = app.add_subcommand("params", "print parameter counts");
  std::string ppreset;
  par->add_option("--preset", ppreset)->required()->check(CLI::IsMember(ModelConfig::preset_names()));

  // train-cls / eval-cls
  auto* tcls = app.add_subcommand("train-cls", "train the action classifier");
  std::string cmanifest, csource = "gt", cflow_ckpt;
  ClsOptions copts;
  tcls->add_option("--manifest", cmanifest)->required();
  tcls->add_option("--flow-source", csource)->check(CLI::IsMember({"gt", "pred"}));
  tcls->add_option("--flow-ckpt", cflow_ckpt, "flow checkpoint for --flow-source pred");
  tcls->add_option("--epochs", copts.epochs)->capture_default_str();
  tcls->add_option("--batch", copts.batch)->capture_default_str();
  tcls->add_option("--lr", copts.lr)->capture_default_str();
  tcls->add_option("--max-steps", copts.max_steps)->capture_default_str();
  tcls->add_flag("--verbose", copts.verbose);

  auto* ecls = app.add_subcommand("eval-cls", "evaluate a classifier checkpoint");
  std::string ecls_ckpt, ecls_manifest, ecls_source = "gt", ecls_flow_ckpt, ecls_split = "test";
  ecls->add_option("--cls-ckpt", ecls_ckpt)->required();
  ecls->add_option("--manifest", ecls_manifest)->required();
  ecls->add_option("--flow-source", ecls_source)->check(CLI::IsMember({"gt", "pred"}));
  ecls->add_option("--flow-ckpt", ecls_flow_ckpt);
  ecls->add_option("--split", ecls_split)->capture_default_str();

  // protocols
  auto* lowd = app.add_subcommand("protocol-lowdata", "training-set-size sweep");
  std::string lmanifest, lfractions = "0.5,0.6,0.7,0.8,0.9,1.0", lmodels = "flownets-mini,flowcaps-mini",
              lseeds = "1,2,3";
  TrainOptions lopts;
  lopts.epochs = 8;
  lopts.patience = 0;
  lowd->add_option("--manifest", lmanifest)->required();
  lowd->add_option("--fractions", lfractions)->capture_default_str();
  lowd->add_option("--models", lmodels)->capture_default_str();
  lowd->add_option("--seeds", lseeds)->capture_default_str();
  lowd->add_option("--epochs", lopts.epochs)->capture_default_str();
  lowd->add_option("--batch", lopts.batch)->capture_default_str();
  lowd->add_option("--max-steps", lopts.max_steps)->capture_default_str();

  auto* ood = app.add_subcommand("protocol-ood", "held-out-shape generalization");
  std::string omanifest, omodels = "flownets-mini,flowcaps-mini", oseeds = "1";
  TrainOptions oopts;
  oopts.epochs = 8;
  oopts.patience = 0;
  ood->add_option("--manifest", omanifest)->required();
  ood->add_option("--models", omodels)->capture_default_str();
  ood->add_option("--seeds", oseeds)->capture_default_str();
  ood->add_option("--epochs", oopts.epochs)->capture_default_str();
  ood->add_option("--batch", oopts.batch)->capture_default_str();
  ood->add_option("--max-steps", oopts.max_steps)->capture_default_str();

  auto* gch = app.add_subcommand("gradcheck", "finite-difference gradient checks (f64)");
  bool gquiet = false;
  gch->add_flag("--quiet", gquiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::printf("command=%s\nseed=%llu\nprecision=%s\nout=%s\n", sub->get_name().c_str(),
              static_cast<unsigned long long>(g.seed), g.precision.c_str(), g.out.c_str());
  for (const auto* opt : sub->get_options())
    if (!opt->get_name().empty() && opt->get_name() != "--help")
      std::printf("%s=%s\n", opt->get_name().c_str(),
                  opt->count() ? opt->as<std::string>().c_str() : opt->get_default_str().c_str());
  std::fflush(stdout);

  bool f64 = g.precision == "f64";
  try {
    if (*gen) {
      spec.background =
          background == "global" ? BackgroundMode::kGlobalTranslation : BackgroundMode::kStatic;
      spec.holdout_shapes.clear();
      for (const auto& h : holdout) spec.holdout_shapes.push_back(shape_from_name(h));
      ensure_dir(g.out);
      gen_dataset(spec, n_train, n_test, g.seed, g.out);
      std::printf("manifest=%s/manifest.json\n", g.out.c_str());
      return 0;
    }
    if (*trainf) {
      topts.loss = parse_loss(loss_name);
      topts.resume_from = resume;
      return f64 ? do_train_flow<double>(g, manifest, preset, topts)
                 : do_train_flow<float>(g, manifest, preset, topts);
    }
    if (*evalf) {
      return checkpoint_precision(eckpt) == 8 ? do_eval_flow<double>(g, eckpt, emanifest, esplit)
                                              : do_eval_flow<float>(g, eckpt, emanifest, esplit);
    }
    if (*pred) {
      return checkpoint_precision(pckpt) == 8 ? do_predict<double>(pckpt, pair[0], pair[1], pout)
                                              : do_predict<float>(pckpt, pair[0], pair[1], pout);
    }
    if (*viz) {
      FlowField f = read_flo(vflo);
      Image8 img = flow_to_color(f, static_cast<float>(vmax));
      std::string outp = vout.empty() ? fs::path(vflo).replace_extension(".ppm").string() : vout;
      write_ppm(outp, img);
      std::printf("ppm=%s\n", outp.c_str());
      return 0;
    }
    if (*par) {
      auto model = build_flow_model<float>(ppreset, g.seed);
      ParamCount pc = model->count_params();
      for (const auto& [sec, n] : pc.by_section)
        std::printf("%s=%lld\n", sec.c_str(), static_cast<long long>(n));
      std::printf("total=%lld\nmillions=%.2f\n", static_cast<long long>(pc.total),
                  static_cast<double>(pc.total) / 1e6);
      return 0;
    }
    if (*tcls)
      return f64 ? do_train_cls<double>(g, cmanifest, csource, cflow_ckpt, copts)
                 : do_train_cls<float>(g, cmanifest, csource, cflow_ckpt, copts);
    if (*ecls)
      return f64 ? do_eval_cls<double>(g, ecls_ckpt, ecls_manifest, ecls_source, ecls_flow_ckpt,
                                       ecls_split)
                 : do_eval_cls<float>(g, ecls_ckpt, ecls_manifest, ecls_source, ecls_flow_ckpt,
                                      ecls_split);
    if (*lowd) {
      Dataset ds = load_manifest(lmanifest);
      std::vector<std::string> models;
      std::stringstream ss(lmodels);
      std::string tok;
      while (std::getline(ss, tok, ',')) models.push_back(tok);
      LowDataReport rep =
          f64 ? protocol_low_data<double>(ds, parse_fractions(lfractions), models,
                                          parse_seeds(lseeds), lopts)
              : protocol_low_data<float>(ds, parse_fractions(lfractions), models,
                                         parse_seeds(lseeds), lopts);
      ensure_dir(g.out);
      write_text(g.out + "/lowdata.csv", rep.to_csv());
      std::printf("%s", rep.to_csv().c_str());
      return 0;
    }
    if (*ood) {
      Dataset ds = load_manifest(omanifest);
      std::vector<std::string> models;
      std::stringstream ss(omodels);
      std::string tok;
      while (std::getline(ss, tok, ',')) models.push_back(tok);
      OodReport rep = f64 ? protocol_ood<double>(ds, models, parse_seeds(oseeds), oopts)
                          : protocol_ood<float>(ds, models, parse_seeds(oseeds), oopts);
      ensure_dir(g.out);
      write_text(g.out + "/ood.csv", rep.to_csv());
      std::printf("%s", rep.to_csv().c_str());
      return 0;
    }
    if (*gch) {
      int fails = run_gradcheck(!gquiet);
      std::printf("gradcheck_failures=%d\n", fails);
      return fails ? 1 : 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.category().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 2;
}

int cli_run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("flowcaps");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace fc
