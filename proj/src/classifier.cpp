#include "flowcaps/classifier.hpp"

#include "flowcaps/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fc {

void ClassifierConfig::validate() const {
  if (conv_widths.size() != 5) throw ConfigError("classifier needs exactly 5 conv blocks");
  if (dense_width != 32) throw ConfigError("penultimate dense layer must have 32 units");
  if (num_classes < 2) throw ConfigError("need at least 2 classes");
  if (in_channels < 1) throw ConfigError("need at least 1 input channel");
}

template <class T>
Classifier<T>::Classifier(const ClassifierConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int in = cfg_.in_channels;
  for (size_t i = 0; i < cfg_.conv_widths.size(); ++i) {
    int out = cfg_.conv_widths[i];
    std::string name = "conv" + std::to_string(i + 1);
    store_.add_param(name + ".w", {out, in, 3, 3}, Init::he_fan_in(), rng);
    store_.add_param(name + ".b", {out}, Init::zeros(), rng);
    in = out;
  }
  // Dense layer shapes depend only on channel count: global spatial extent is
  // folded in at forward time, so fix the expected post-pool extent at 2x2.
  // (He fan-in uses the true flattened input size.)
  flat_ch_ = in;
  dense_seed_ = rng.next_u64();
}

template <class T>
Tensor<T> Classifier<T>::forward(const Tensor<T>& flow) {
  if (flow.rank() != 4 || flow.dim(1) != cfg_.in_channels)
    throw ShapeError("expected [N," + std::to_string(cfg_.in_channels) + ",H,W], got " +
                     shape_str(flow.shape()));
  if (flow.dim(2) % 32 != 0 || flow.dim(3) % 32 != 0)
    throw ConfigError("classifier input extents must be divisible by 32, got " +
                      shape_str(flow.shape()));
  Tensor<T> x = flow;
  for (size_t i = 0; i < cfg_.conv_widths.size(); ++i) {
    std::string name = "conv" + std::to_string(i + 1);
    Tensor<T>& w = *store_.find_param(name + ".w");
    Tensor<T>& b = *store_.find_param(name + ".b");
    x = maxpool2d(relu(conv2d(x, w, &b, 1, 1, 1)));
  }
  int64_t flat = x.dim(1) * x.dim(2) * x.dim(3);
  ensure_dense(flat);
  x = reshape(x, {x.dim(0), flat});
  Tensor<T>& w1 = *store_.find_param("dense1.w");
  Tensor<T>& b1 = *store_.find_param("dense1.b");
  Tensor<T>& w2 = *store_.find_param("dense2.w");
  Tensor<T>& b2 = *store_.find_param("dense2.b");
  x = relu(add(matmul(x, w1), reshape(b1, {1, cfg_.dense_width})));
  return add(matmul(x, w2), reshape(b2, {1, cfg_.num_classes}));
}

template <class T>
void Classifier<T>::ensure_dense(int64_t flat) {
  if (Tensor<T>* w1 = store_.find_param("dense1.w")) {
    if (w1->dim(0) != flat)
      throw ShapeError("classifier was built for flattened size " + std::to_string(w1->dim(0)) +
                       ", got " + std::to_string(flat));
    return;
  }
  Rng rng(dense_seed_);
  store_.add_param("dense1.w", {flat, cfg_.dense_width}, Init::he_fan_in(flat), rng);
  store_.add_param("dense1.b", {cfg_.dense_width}, Init::zeros(), rng);
  store_.add_param("dense2.w", {cfg_.dense_width, cfg_.num_classes},
                   Init::he_fan_in(cfg_.dense_width), rng);
  store_.add_param("dense2.b", {cfg_.num_classes}, Init::zeros(), rng);
}

template <class T>
Tensor<T> Classifier<T>::probabilities(const Tensor<T>& flow) {
  return softmax(forward(flow), 1);
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("logits must be [N,K]");
  int64_t N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != N)
    throw ShapeError("label count does not match batch size");
  // Constant row-max shift keeps exp() in range without altering value or grad.
  const T* lv = logits.raw_data();
  Tensor<T> shift = Tensor<T>::zeros({N, 1});
  Tensor<T> onehot = Tensor<T>::zeros({N, K});
  T* sv = shift.raw_data();
  T* ov = onehot.raw_data();
  for (int64_t n = 0; n < N; ++n) {
    int lab = labels[static_cast<size_t>(n)];
    if (lab < 0 || lab >= K) throw DataError("label out of range: " + std::to_string(lab));
    ov[n * K + lab] = T(1);
    sv[n] = *std::max_element(lv + n * K, lv + (n + 1) * K);
  }
  Tensor<T> z = sub(logits, shift);
  Tensor<T> lse = add(log(reduce_sum(exp(z), {1}, true)), shift);     // [N,1]
  Tensor<T> picked = reduce_sum(mul(logits, onehot), {1}, true);      // [N,1]
  return scale(reduce_sum(sub(lse, picked), {0, 1}, false), T(1) / static_cast<T>(N));
}

// ---------------------------------------------------------------------------
// flow sources
// ---------------------------------------------------------------------------

template <class T>
std::vector<FlowField> gt_flows(const Dataset& ds) {
  std::vector<FlowField> out;
  out.reserve(ds.samples.size());
  for (const auto& s : ds.samples) out.push_back(read_flo(ds.dir + "/" + s.flo));
  return out;
}

template <class T>
std::vector<FlowField> predicted_flows(FlowModel<T>& flow_model, const Dataset& ds, int batch) {
  Mode prev = flow_model.mode();
  flow_model.set_mode(Mode::kEval);
  std::vector<bool> saved;
  for (auto& [n, p] : flow_model.store().params()) {
    saved.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
  std::vector<FlowField> out;
  std::vector<int> indices(ds.samples.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  for (size_t pos = 0; pos < indices.size(); pos += static_cast<size_t>(batch)) {
    std::vector<int> chunk(indices.begin() + static_cast<long>(pos),
                           indices.begin() + static_cast<long>(std::min(
                                                 indices.size(), pos + static_cast<size_t>(batch))));
    Batch<T> b = load_batch<T>(ds, chunk);
    Tensor<T> pred = flow_model.forward(b.frames);
    const T* p = pred.raw_data();
    int64_t H = pred.dim(2), W = pred.dim(3);
    for (int64_t n = 0; n < pred.dim(0); ++n) {
      FlowField f(static_cast<int32_t>(W), static_cast<int32_t>(H));
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          f.u(static_cast<int>(x), static_cast<int>(y)) =
              static_cast<float>(p[((n * 2 + 0) * H + y) * W + x]);
          f.v(static_cast<int>(x), static_cast<int>(y)) =
              static_cast<float>(p[((n * 2 + 1) * H + y) * W + x]);
        }
      out.push_back(std::move(f));
    }
  }
  size_t i = 0;
  for (auto& [n, p] : flow_model.store().params()) p.set_requires_grad(saved[i++]);
  flow_model.set_mode(prev);
  return out;
}

namespace {

template <class T>
Tensor<T> flow_batch(const std::vector<FlowField>& flows, const std::vector<int>& idx) {
  const FlowField& f0 = flows[static_cast<size_t>(idx[0])];
  int64_t N = static_cast<int64_t>(idx.size()), H = f0.height, W = f0.width;
  Tensor<T> t = Tensor<T>::zeros({N, 2, H, W});
  T* d = t.raw_data();
  for (int64_t n = 0; n < N; ++n) {
    const FlowField& f = flows[static_cast<size_t>(idx[static_cast<size_t>(n)])];
    if (f.height != H || f.width != W) throw DataError("flow extents differ within batch");
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        d[((n * 2 + 0) * H + y) * W + x] =
            static_cast<T>(f.u(static_cast<int>(x), static_cast<int>(y)));
        d[((n * 2 + 1) * H + y) * W + x] =
            static_cast<T>(f.v(static_cast<int>(x), static_cast<int>(y)));
      }
  }
  return t;
}

inline void shuffle_ints(std::vector<int>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
}

}  // namespace

std::string ClsRecord::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,test_acc,seconds\n";
  for (const auto& e : epochs) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.6f,%.3f\n", e.epoch, e.train_loss, e.test_acc,
                  e.seconds);
    os << buf;
  }
  return os.str();
}

std::string ClsEval::to_csv() const {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "accuracy,%.6f\n", accuracy);
  os << buf;
  for (const auto& row : confusion) {
    for (size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << row[j];
    os << "\n";
  }
  return os.str();
}

template <class T>
ClsRecord train_classifier(Classifier<T>& cls, const Dataset& ds,
                           const std::vector<FlowField>& flows, const ClsOptions& opts) {
  if (flows.size() != ds.samples.size())
    throw DataError("flow source count does not match dataset");
  std::vector<int> train_idx = ds.split_indices("train");
  if (train_idx.empty()) throw DataError("train split is empty");
  bool has_test = !ds.split_indices("test").empty();

  // Bind dense layer shapes (and the optimizer) before the first step.
  cls.forward(flow_batch<T>(flows, {train_idx[0]}));
  AdamConfig acfg;
  acfg.lr = opts.lr;
  Adam<T> adam(cls.store(), acfg);
  Rng rng(opts.seed);
  ClsRecord rec;
  rec.seed = opts.seed;
  int steps = 0;
  bool stop = false;
  for (int epoch = 0; epoch < opts.epochs && !stop; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    shuffle_ints(train_idx, rng);
    double loss_sum = 0.0;
    int64_t loss_n = 0;
    for (size_t pos = 0; pos < train_idx.size(); pos += static_cast<size_t>(opts.batch)) {
      size_t end = std::min(train_idx.size(), pos + static_cast<size_t>(opts.batch));
      std::vector<int> chunk(train_idx.begin() + static_cast<long>(pos),
                             train_idx.begin() + static_cast<long>(end));
      std::vector<int> labels;
      for (int i : chunk) labels.push_back(ds.samples[static_cast<size_t>(i)].label);
      cls.store().zero_grad();
      Tensor<T> logits = cls.forward(flow_batch<T>(flows, chunk));
      Tensor<T> loss = cross_entropy(logits, labels);
      double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv))
        throw DomainError("classifier diverged: non-finite loss at epoch " + std::to_string(epoch));
      backward(loss);
      adam.step();
      loss_sum += lv * static_cast<double>(chunk.size());
      loss_n += static_cast<int64_t>(chunk.size());
      if (opts.max_steps > 0 && ++steps >= opts.max_steps) {
        stop = true;
        break;
      }
    }
    ClsEpochStat st;
    st.epoch = epoch;
    st.train_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
    st.test_acc = has_test ? evaluate_classifier(cls, ds, flows, "test", opts.batch).accuracy : 0.0;
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(st);
    rec.best_acc = std::max(rec.best_acc, st.test_acc);
    if (opts.verbose)
      std::fprintf(stderr, "cls epoch %d loss %.4f acc %.4f (%.1fs)\n", epoch, st.train_loss,
                   st.test_acc, st.seconds);
  }
  return rec;
}

template <class T>
ClsEval evaluate_classifier(Classifier<T>& cls, const Dataset& ds,
                            const std::vector<FlowField>& flows, const std::string& split,
                            int batch) {
  if (flows.size() != ds.samples.size())
    throw DataError("flow source count does not match dataset");
  std::vector<int> idx = ds.split_indices(split);
  if (idx.empty()) throw DataError("no samples in split '" + split + "'");
  std::vector<bool> saved;
  for (auto& [n, p] : cls.store().params()) {
    saved.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
  int K = cls.config().num_classes;
  ClsEval ev;
  ev.confusion.assign(static_cast<size_t>(K), std::vector<int64_t>(static_cast<size_t>(K), 0));
  int64_t correct = 0;
  for (size_t pos = 0; pos < idx.size(); pos += static_cast<size_t>(batch)) {
    std::vector<int> chunk(idx.begin() + static_cast<long>(pos),
                           idx.begin() + static_cast<long>(std::min(idx.size(),
                                                                    pos + static_cast<size_t>(batch))));
    Tensor<T> logits = cls.forward(flow_batch<T>(flows, chunk));
    const T* lv = logits.raw_data();
    for (size_t n = 0; n < chunk.size(); ++n) {
      int pred = 0;
      for (int k = 1; k < K; ++k)
        if (lv[n * static_cast<size_t>(K) + static_cast<size_t>(k)] >
            lv[n * static_cast<size_t>(K) + static_cast<size_t>(pred)])
          pred = k;
      int truth = ds.samples[static_cast<size_t>(chunk[n])].label;
      ev.confusion[static_cast<size_t>(truth)][static_cast<size_t>(pred)] += 1;
      if (pred == truth) ++correct;
    }
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
  size_t i = 0;
  for (auto& [n, p] : cls.store().params()) p.set_requires_grad(saved[i++]);
  return ev;
}

#define FC_INSTANTIATE_CLS(T)                                                                  \
  template class Classifier<T>;                                                                \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<int>&);              \
  template std::vector<FlowField> gt_flows<T>(const Dataset&);                                 \
  template std::vector<FlowField> predicted_flows<T>(FlowModel<T>&, const Dataset&, int);      \
  template ClsRecord train_classifier<T>(Classifier<T>&, const Dataset&,                       \
                                         const std::vector<FlowField>&, const ClsOptions&);    \
  template ClsEval evaluate_classifier<T>(Classifier<T>&, const Dataset&,                      \
                                          const std::vector<FlowField>&, const std::string&,   \
                                          int);

FC_INSTANTIATE_CLS(float)
FC_INSTANTIATE_CLS(double)

#undef FC_INSTANTIATE_CLS

}  // namespace fc
