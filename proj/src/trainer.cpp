#include "flowcaps/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace fc {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <class T>
Adam<T>::Adam(ParamStore<T>& store, const AdamConfig& cfg) : store_(&store), cfg_(cfg) {
  for (const auto& [name, p] : store.params()) {
    m_.emplace_back(static_cast<size_t>(p.numel()), T(0));
    v_.emplace_back(static_cast<size_t>(p.numel()), T(0));
  }
}

template <class T>
void Adam<T>::step() {
  if (!store_) throw StateError("Adam not bound to a parameter store");
  ++step_;
  const T lr = static_cast<T>(cfg_.lr), b1 = static_cast<T>(cfg_.beta1),
          b2 = static_cast<T>(cfg_.beta2), eps = static_cast<T>(cfg_.eps);
  const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(step_)));
  const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(step_)));
  auto& params = store_->params();
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = params[i].second;
    const T* g = p.raw_grad();
    if (!g) continue;  // no gradient reached this parameter: unchanged
    T* w = p.raw_data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const int64_t n = p.numel();
    for (int64_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

namespace {

template <class T>
struct GradGuard {
  // Disables parameter gradients for the scope (evaluation must not build
  // backprop graphs or touch parameter state).
  ParamStore<T>& store;
  std::vector<bool> saved;
  explicit GradGuard(ParamStore<T>& s) : store(s) {
    for (auto& [n, p] : store.params()) {
      saved.push_back(p.requires_grad());
      p.set_requires_grad(false);
    }
  }
  ~GradGuard() {
    size_t i = 0;
    for (auto& [n, p] : store.params()) p.set_requires_grad(saved[i++]);
  }
};

// Per-sample mean EPE over the given dataset indices, in manifest order.
template <class T>
std::vector<double> per_sample_epe(FlowModel<T>& model, const Dataset& ds,
                                   const std::vector<int>& indices, int batch) {
  Mode prev = model.mode();
  model.set_mode(Mode::kEval);
  GradGuard<T> guard(model.store());
  std::vector<double> out;
  for (size_t pos = 0; pos < indices.size(); pos += static_cast<size_t>(batch)) {
    std::vector<int> chunk(indices.begin() + static_cast<long>(pos),
                           indices.begin() + static_cast<long>(std::min(
                                                 indices.size(), pos + static_cast<size_t>(batch))));
    Batch<T> b = load_batch<T>(ds, chunk);
    Tensor<T> pred = model.forward(b.frames);
    const T* p = pred.raw_data();
    const T* g = b.flow.raw_data();
    int64_t H = pred.dim(2), W = pred.dim(3);
    for (int64_t n = 0; n < pred.dim(0); ++n) {
      double sum = 0.0;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          double du = static_cast<double>(p[((n * 2 + 0) * H + y) * W + x] -
                                          g[((n * 2 + 0) * H + y) * W + x]);
          double dv = static_cast<double>(p[((n * 2 + 1) * H + y) * W + x] -
                                          g[((n * 2 + 1) * H + y) * W + x]);
          sum += std::sqrt(du * du + dv * dv);
        }
      out.push_back(sum / static_cast<double>(H * W));
    }
  }
  model.set_mode(prev);
  return out;
}

}  // namespace

template <class T>
EvalResult evaluate(FlowModel<T>& model, const Dataset& ds, const std::string& split, int batch) {
  std::vector<int> idx = ds.split_indices(split);
  if (idx.empty()) throw DataError("no samples in split '" + split + "'");
  std::vector<double> se = per_sample_epe(model, ds, idx, batch);
  EvalResult r;
  r.per_class_epe.assign(kNumClasses, 0.0);
  r.per_class_n.assign(kNumClasses, 0);
  double total = 0.0;
  for (size_t i = 0; i < idx.size(); ++i) {
    int label = ds.samples[static_cast<size_t>(idx[i])].label;
    r.per_class_epe[static_cast<size_t>(label)] += se[i];
    r.per_class_n[static_cast<size_t>(label)] += 1;
    total += se[i];
  }
  r.mean_epe = total / static_cast<double>(idx.size());
  for (int c = 0; c < kNumClasses; ++c)
    if (r.per_class_n[static_cast<size_t>(c)] > 0)
      r.per_class_epe[static_cast<size_t>(c)] /= static_cast<double>(r.per_class_n[static_cast<size_t>(c)]);
  return r;
}

double zero_flow_epe(const Dataset& ds, const std::string& split) {
  std::vector<int> idx = ds.split_indices(split);
  if (idx.empty()) throw DataError("no samples in split '" + split + "'");
  double total = 0.0;
  for (int i : idx) {
    const SampleRef& r = ds.samples[static_cast<size_t>(i)];
    FlowField f = read_flo(ds.dir + "/" + r.flo);
    double sum = 0.0;
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) sum += std::hypot(f.u(x, y), f.v(x, y));
    total += sum / (static_cast<double>(f.width) * f.height);
  }
  return total / static_cast<double>(idx.size());
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'F', 'C', 'C', 'K', 'P', 'T', '0', '1'};

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary | std::ios::trunc) {
    if (!out) throw IoError("cannot open " + path + " for writing");
  }
  void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <class T>
  void vec(const T* p, size_t n) {
    u64(n);
    bytes(p, n * sizeof(T));
  }
};

struct Reader {
  std::vector<uint8_t> buf;
  size_t pos = 0;
  explicit Reader(const std::string& path) : buf(read_file(path)) {}
  void bytes(void* p, size_t n) {
    if (pos + n > buf.size()) throw FormatError("checkpoint truncated");
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
  uint64_t u64() { uint64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string str() {
    uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  template <class T>
  std::vector<T> vec() {
    uint64_t n = u64();
    std::vector<T> v(n);
    bytes(v.data(), n * sizeof(T));
    return v;
  }
};

}  // namespace

template <class T>
void save_checkpoint(const std::string& path, FlowModel<T>& model, const Adam<T>* adam,
                     const Rng& rng, int epoch, double best_epe) {
  Writer w(path);
  w.bytes(kCkptMagic, 8);
  w.u32(static_cast<uint32_t>(sizeof(T)));
  w.str(model.config().to_kv());
  auto& params = model.store().params();
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    w.str(name);
    w.vec(p.raw_data(), static_cast<size_t>(p.numel()));
  }
  auto& buffers = model.store().buffers();
  w.u32(static_cast<uint32_t>(buffers.size()));
  for (const auto& [name, b] : buffers) {
    w.str(name);
    w.vec(b.raw_data(), static_cast<size_t>(b.numel()));
  }
  w.u32(adam ? 1u : 0u);
  if (adam) {
    Adam<T>& a = *const_cast<Adam<T>*>(adam);
    w.f64(a.config().lr);
    w.f64(a.config().beta1);
    w.f64(a.config().beta2);
    w.f64(a.config().eps);
    w.u64(static_cast<uint64_t>(a.step_count()));
    w.u32(static_cast<uint32_t>(a.m().size()));
    for (size_t i = 0; i < a.m().size(); ++i) {
      w.vec(a.m()[i].data(), a.m()[i].size());
      w.vec(a.v()[i].data(), a.v()[i].size());
    }
  }
  auto st = rng.state();
  for (uint64_t s : st) w.u64(s);
  w.u32(static_cast<uint32_t>(epoch));
  w.f64(best_epe);
  if (!w.out) throw IoError("write failed: " + path);
}

int checkpoint_precision(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0) throw FormatError("bad checkpoint magic: " + path);
  return static_cast<int>(r.u32());
}

namespace {

// Shared restore: fills model params/buffers and optional optimizer/RNG state.
template <class T>
void read_state_into(Reader& r, FlowModel<T>& model, AdamConfig* acfg,
                     std::vector<std::vector<T>>* am, std::vector<std::vector<T>>* av,
                     int64_t* astep, std::array<uint64_t, 4>* rng_state, int* epoch,
                     double* best_epe) {
  uint32_t np = r.u32();
  auto& params = model.store().params();
  if (np != params.size()) throw FormatError("checkpoint parameter count mismatch");
  for (uint32_t i = 0; i < np; ++i) {
    std::string name = r.str();
    if (name != params[i].first) throw FormatError("checkpoint parameter order mismatch: " + name);
    auto vals = r.template vec<T>();
    if (static_cast<int64_t>(vals.size()) != params[i].second.numel())
      throw FormatError("checkpoint parameter size mismatch: " + name);
    std::copy(vals.begin(), vals.end(), params[i].second.raw_data());
  }
  uint32_t nb = r.u32();
  auto& buffers = model.store().buffers();
  if (nb != buffers.size()) throw FormatError("checkpoint buffer count mismatch");
  for (uint32_t i = 0; i < nb; ++i) {
    std::string name = r.str();
    if (name != buffers[i].first) throw FormatError("checkpoint buffer order mismatch: " + name);
    auto vals = r.template vec<T>();
    std::copy(vals.begin(), vals.end(), buffers[i].second.raw_data());
  }
  uint32_t has_adam = r.u32();
  if (has_adam) {
    AdamConfig cfg;
    cfg.lr = r.f64();
    cfg.beta1 = r.f64();
    cfg.beta2 = r.f64();
    cfg.eps = r.f64();
    int64_t step = static_cast<int64_t>(r.u64());
    uint32_t n = r.u32();
    std::vector<std::vector<T>> ms, vs;
    for (uint32_t i = 0; i < n; ++i) {
      ms.push_back(r.template vec<T>());
      vs.push_back(r.template vec<T>());
    }
    if (acfg) *acfg = cfg;
    if (am) *am = std::move(ms);
    if (av) *av = std::move(vs);
    if (astep) *astep = step;
  }
  std::array<uint64_t, 4> st{};
  for (auto& s : st) s = r.u64();
  if (rng_state) *rng_state = st;
  int ep = static_cast<int>(r.u32());
  double be = r.f64();
  if (epoch) *epoch = ep;
  if (best_epe) *best_epe = be;
}

template <class T>
Reader open_checkpoint(const std::string& path, std::string* kv) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0) throw FormatError("bad checkpoint magic: " + path);
  uint32_t prec = r.u32();
  if (prec != sizeof(T))
    throw FormatError("checkpoint precision is f" + std::to_string(prec * 8) + ", expected f" +
                      std::to_string(sizeof(T) * 8));
  *kv = r.str();
  return r;
}

}  // namespace

template <class T>
CheckpointState<T> load_checkpoint(const std::string& path) {
  std::string kv;
  Reader r = open_checkpoint<T>(path, &kv);
  CheckpointState<T> st;
  st.model = build_flow_model<T>(ModelConfig::from_kv(kv), /*seed=*/0);
  read_state_into<T>(r, *st.model, &st.adam_cfg, &st.adam_m, &st.adam_v, &st.adam_step,
                     &st.rng_state, &st.epoch, &st.best_epe);
  return st;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

std::string TrainRecord::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,test_epe,seconds\n";
  for (const auto& e : epochs) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss, e.test_epe,
                  e.seconds);
    os << buf;
  }
  return os.str();
}

namespace {

template <class T>
void hflip_sample(Batch<T>& b, int64_t n) {
  int64_t H = b.frames.dim(2), W = b.frames.dim(3);
  T* fr = b.frames.raw_data();
  T* fl = b.flow.raw_data();
  for (int64_t c = 0; c < 6; ++c)
    for (int64_t y = 0; y < H; ++y) {
      T* row = fr + ((n * 6 + c) * H + y) * W;
      std::reverse(row, row + W);
    }
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t y = 0; y < H; ++y) {
      T* row = fl + ((n * 2 + c) * H + y) * W;
      std::reverse(row, row + W);
      if (c == 0)
        for (int64_t x = 0; x < W; ++x) row[x] = -row[x];  // u flips sign
    }
}

inline void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
}

}  // namespace

template <class T>
TrainRecord train_flow(FlowModel<T>& model, const Dataset& ds, const TrainOptions& opts) {
  std::vector<int> train_idx = ds.split_indices("train");
  if (train_idx.empty()) throw DataError("train split is empty");
  bool has_test = !ds.split_indices("test").empty();

  Adam<T> adam(model.store(), opts.adam);
  Rng rng(opts.seed);
  TrainRecord rec;
  rec.seed = opts.seed;
  int start_epoch = 0;
  double best = 1e300;
  int best_epoch = -1;

  if (!opts.resume_from.empty()) {
    std::string kv;
    Reader r = open_checkpoint<T>(opts.resume_from, &kv);
    AdamConfig acfg;
    std::vector<std::vector<T>> am, av;
    int64_t astep = 0;
    std::array<uint64_t, 4> rst{};
    read_state_into<T>(r, model, &acfg, &am, &av, &astep, &rst, &start_epoch, &best);
    adam = Adam<T>(model.store(), acfg);
    adam.m() = std::move(am);
    adam.v() = std::move(av);
    adam.set_step_count(astep);
    rng.set_state(rst);
  }

  int since_best = 0;
  int steps = 0;
  bool stop = false;
  for (int epoch = start_epoch; epoch < opts.epochs && !stop; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    // Shuffle from canonical manifest order so the permutation depends only on
    // the (checkpointed) RNG state, keeping resumed runs bitwise identical.
    std::vector<int> order = ds.split_indices("train");
    shuffle_indices(order, rng);
    train_idx = std::move(order);
    model.set_mode(Mode::kTrain);
    double loss_sum = 0.0;
    int64_t loss_n = 0;
    for (size_t pos = 0; pos < train_idx.size(); pos += static_cast<size_t>(opts.batch)) {
      size_t end = std::min(train_idx.size(), pos + static_cast<size_t>(opts.batch));
      if (end - pos < 2) continue;  // batchnorm needs at least two samples
      std::vector<int> chunk(train_idx.begin() + static_cast<long>(pos),
                             train_idx.begin() + static_cast<long>(end));
      Batch<T> b = load_batch<T>(ds, chunk);
      if (opts.hflip)
        for (int64_t n = 0; n < b.frames.dim(0); ++n)
          if (rng.uniform01() < 0.5) hflip_sample(b, n);
      model.store().zero_grad();
      Tensor<T> pred = model.forward(b.frames);
      Tensor<T> loss = opts.loss == LossKind::kEpe ? epe(pred, b.flow)
                                                   : combined_loss(pred, b.flow, opts.alpha);
      double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv))
        throw DomainError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      backward(loss);
      adam.step();
      loss_sum += lv * static_cast<double>(end - pos);
      loss_n += static_cast<int64_t>(end - pos);
      rec.step_losses.push_back(lv);
      if (opts.max_steps > 0 && ++steps >= opts.max_steps) {
        stop = true;
        break;
      }
    }

    EpochStat st;
    st.epoch = epoch;
    st.train_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
    st.test_epe = has_test ? evaluate(model, ds, "test", opts.batch).mean_epe : st.train_loss;
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(st);
    if (opts.verbose)
      std::fprintf(stderr, "epoch %d train_loss %.4f test_epe %.4f (%.1fs)\n", epoch,
                   st.train_loss, st.test_epe, st.seconds);

    if (st.test_epe < best - 1e-9) {
      best = st.test_epe;
      best_epoch = epoch;
      since_best = 0;
      if (!opts.checkpoint_best.empty())
        save_checkpoint(opts.checkpoint_best, model, &adam, rng, epoch + 1, best);
    } else {
      ++since_best;
    }
    if (opts.target_epe >= 0 && st.test_epe <= opts.target_epe) break;
    if (opts.patience > 0 && since_best >= opts.patience) break;
    if (!opts.checkpoint_last.empty())
      save_checkpoint(opts.checkpoint_last, model, &adam, rng, epoch + 1, best);
  }
  if (!opts.checkpoint_last.empty())
    save_checkpoint(opts.checkpoint_last, model, &adam, rng,
                    rec.epochs.empty() ? start_epoch : rec.epochs.back().epoch + 1, best);
  rec.best_epe = best;
  rec.best_epoch = best_epoch;
  return rec;
}

// ---------------------------------------------------------------------------
// protocols
// ---------------------------------------------------------------------------

namespace {

// Copy with a seed-shuffled prefix of the train split kept; the rest of the
// train samples are marked "unused" so loaders skip them.
Dataset subset_train(const Dataset& ds, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("fraction must be in (0, 1]");
  Dataset out = ds;
  std::vector<int> idx = ds.split_indices("train");
  Rng rng(seed ^ 0x5e6d1337u);
  shuffle_indices(idx, rng);
  size_t keep = static_cast<size_t>(std::lround(fraction * static_cast<double>(idx.size())));
  keep = std::max<size_t>(keep, 2);
  for (size_t i = keep; i < idx.size(); ++i)
    out.samples[static_cast<size_t>(idx[i])].split = "unused";
  return out;
}

}  // namespace

std::string LowDataReport::to_csv() const {
  std::map<double, std::pair<std::pair<double, int>, std::pair<double, int>>> agg;
  for (const auto& r : rows) {
    auto& fa = agg[r.fraction];
    if (r.model.find("flownets") != std::string::npos) {
      fa.first.first += r.test_epe;
      fa.first.second += 1;
    } else {
      fa.second.first += r.test_epe;
      fa.second.second += 1;
    }
  }
  std::ostringstream os;
  os << "fraction,epe_flownets,epe_flowcaps,difference\n";
  for (const auto& [frac, fa] : agg) {
    double fn = fa.first.second ? fa.first.first / fa.first.second : 0.0;
    double fcps = fa.second.second ? fa.second.first / fa.second.second : 0.0;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.2f,%.6f,%.6f,%.6f\n", frac, fn, fcps, fn - fcps);
    os << buf;
  }
  return os.str();
}

template <class T>
LowDataReport protocol_low_data(const Dataset& ds, const std::vector<double>& fractions,
                                const std::vector<std::string>& presets,
                                const std::vector<uint64_t>& seeds, const TrainOptions& base) {
  LowDataReport rep;
  for (double frac : fractions) {
    for (const auto& preset : presets) {
      for (uint64_t seed : seeds) {
        Dataset sub = subset_train(ds, frac, seed);
        auto model = build_flow_model<T>(preset, seed);
        TrainOptions opts = base;
        opts.seed = seed;
        opts.checkpoint_best.clear();
        opts.checkpoint_last.clear();
        train_flow(*model, sub, opts);
        ProtocolRow row;
        row.fraction = frac;
        row.seed = seed;
        row.model = preset;
        row.test_epe = evaluate(*model, sub, "test", base.batch).mean_epe;
        rep.rows.push_back(row);
      }
    }
  }
  return rep;
}

std::string OodReport::to_csv() const {
  std::ostringstream os;
  os << "model,seed,in_domain_epe,held_out_epe";
  if (!rows.empty())
    for (const auto& [shape, _] : rows.front().per_shape_epe) os << ",epe_" << shape;
  os << "\n";
  for (const auto& r : rows) {
    os << r.model << "," << r.seed;
    char buf[64];
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", r.in_domain_epe, r.held_out_epe);
    os << buf;
    for (const auto& [shape, e] : r.per_shape_epe) {
      std::snprintf(buf, sizeof(buf), ",%.6f", e);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

template <class T>
OodReport protocol_ood(const Dataset& ds, const std::vector<std::string>& presets,
                       const std::vector<uint64_t>& seeds, const TrainOptions& base) {
  if (ds.spec.holdout_shapes.empty())
    throw ConfigError("out-of-domain protocol needs at least one held-out shape class");
  OodReport rep;
  auto held_out = [&](ShapeKind k) {
    return std::find(ds.spec.holdout_shapes.begin(), ds.spec.holdout_shapes.end(), k) !=
           ds.spec.holdout_shapes.end();
  };
  for (int i : ds.split_indices("train"))
    if (held_out(ds.samples[static_cast<size_t>(i)].shape)) ++rep.train_held_out_hits;
  if (rep.train_held_out_hits > 0)
    throw DataError("held-out shapes present in the train split");

  std::vector<int> test_idx = ds.split_indices("test");
  for (const auto& preset : presets) {
    for (uint64_t seed : seeds) {
      auto model = build_flow_model<T>(preset, seed);
      TrainOptions opts = base;
      opts.seed = seed;
      opts.checkpoint_best.clear();
      opts.checkpoint_last.clear();
      train_flow(*model, ds, opts);

      std::vector<double> se = per_sample_epe(*model, ds, test_idx, base.batch);
      typename OodReport::Row row;
      row.model = preset;
      row.seed = seed;
      double in_sum = 0, out_sum = 0;
      int64_t in_n = 0, out_n = 0;
      std::map<std::string, std::pair<double, int64_t>> per_shape;
      for (size_t i = 0; i < test_idx.size(); ++i) {
        const SampleRef& s = ds.samples[static_cast<size_t>(test_idx[i])];
        if (held_out(s.shape)) {
          out_sum += se[i];
          ++out_n;
          auto& ps = per_shape[shape_name(s.shape)];
          ps.first += se[i];
          ps.second += 1;
        } else {
          in_sum += se[i];
          ++in_n;
        }
      }
      if (in_n == 0 || out_n == 0)
        throw DataError("test split must contain both in-domain and held-out shapes");
      row.in_domain_epe = in_sum / static_cast<double>(in_n);
      row.held_out_epe = out_sum / static_cast<double>(out_n);
      for (const auto& [shape, acc] : per_shape)
        row.per_shape_epe.emplace_back(shape, acc.first / static_cast<double>(acc.second));
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

#define FC_INSTANTIATE_TRAINER(T)                                                            \
  template class Adam<T>;                                                                    \
  template EvalResult evaluate<T>(FlowModel<T>&, const Dataset&, const std::string&, int);   \
  template TrainRecord train_flow<T>(FlowModel<T>&, const Dataset&, const TrainOptions&);    \
  template void save_checkpoint<T>(const std::string&, FlowModel<T>&, const Adam<T>*,        \
                                   const Rng&, int, double);                                 \
  template CheckpointState<T> load_checkpoint<T>(const std::string&);                        \
  template LowDataReport protocol_low_data<T>(const Dataset&, const std::vector<double>&,    \
                                              const std::vector<std::string>&,               \
                                              const std::vector<uint64_t>&,                  \
                                              const TrainOptions&);                          \
  template OodReport protocol_ood<T>(const Dataset&, const std::vector<std::string>&,        \
                                     const std::vector<uint64_t>&, const TrainOptions&);

FC_INSTANTIATE_TRAINER(float)
FC_INSTANTIATE_TRAINER(double)

#undef FC_INSTANTIATE_TRAINER

}  // namespace fc
