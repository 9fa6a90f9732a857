#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "flowcaps/trainer.hpp"

using fc::AdamConfig;
using fc::Dataset;
using fc::SceneSpec;
using Td = fc::Tensor<double>;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "fc_train_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small 32x32 dataset keeps trainer tests quick; extents divide the
// flowcaps-mini downsampling factor.
Dataset tiny_dataset(const std::string& name, int n_train, int n_test, uint64_t seed) {
  SceneSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.max_disp = 2;
  return fc::gen_dataset(spec, n_train, n_test, seed, fresh_dir(name).string());
}

// One-parameter store around an existing tensor.
fc::ParamStore<double> wrap_param(Td& x) {
  fc::ParamStore<double> store;
  fc::Rng rng(0);
  Td p = store.add_param("p", x.shape(), fc::Init::zeros(), rng);
  std::memcpy(p.raw_data(), x.raw_data(), sizeof(double) * x.numel());
  x = p;
  return store;
}

}  // namespace

TEST_CASE("adam first step approaches -lr * sign(gradient) as eps vanishes") {
  Td x = Td::from_data({3}, {1.0, -2.0, 0.5});
  auto store = wrap_param(x);
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.eps = 1e-12;
  fc::Adam<double> adam(store, cfg);
  Td loss = fc::reduce_sum(fc::mul(x, Td::from_data({3}, {3.0, -7.0, 0.001})), {0});
  fc::backward(loss);
  adam.step();
  CHECK(x.data()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(x.data()[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-9));
  CHECK(x.data()[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-9));
}

TEST_CASE("adam skips parameters that received no gradient") {
  Td x = Td::from_data({2}, {5.0, 6.0});
  auto store = wrap_param(x);
  fc::Adam<double> adam(store, AdamConfig{});
  adam.step();  // no backward happened
  CHECK(x.data()[0] == 5.0);
  CHECK(x.data()[1] == 6.0);
}

TEST_CASE("adam trajectory matches a scalar reference implementation") {
  Td x = Td::from_data({1}, {3.0});
  auto store = wrap_param(x);
  AdamConfig cfg;
  cfg.lr = 0.1;
  fc::Adam<double> adam(store, cfg);

  double rx = 3.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 25; ++t) {
    store.zero_grad();
    Td loss = fc::square(fc::add_scalar(x, -1.0));  // (x - 1)^2
    fc::backward(loss);
    adam.step();

    double g = 2.0 * (rx - 1.0);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    double mh = m / (1 - std::pow(cfg.beta1, t));
    double vh = v / (1 - std::pow(cfg.beta2, t));
    rx -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    CHECK(x.data()[0] == doctest::Approx(rx).epsilon(1e-12));
  }
}

TEST_CASE("zero_flow_epe equals the mean ground-truth magnitude") {
  Dataset ds = tiny_dataset("zf", 4, 4, 11);
  double want = 0.0;
  int64_t n = 0;
  for (int i : ds.split_indices("test")) {
    fc::FlowField f = fc::read_flo(ds.dir + "/" + ds.samples[static_cast<size_t>(i)].flo);
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        want += std::sqrt(static_cast<double>(f.u(x, y)) * f.u(x, y) +
                          static_cast<double>(f.v(x, y)) * f.v(x, y));
        ++n;
      }
  }
  want /= static_cast<double>(n);
  CHECK(fc::zero_flow_epe(ds, "test") == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("evaluate: zeroed head yields exactly the zero-flow baseline") {
  Dataset ds = tiny_dataset("ev", 4, 8, 13);
  auto m = fc::build_flow_model<double>("flowcaps-mini", 3);
  for (auto& [name, p] : m->store().params())
    if (name.rfind("head/", 0) == 0) std::memset(p.raw_data(), 0, sizeof(double) * p.numel());
  fc::EvalResult r = fc::evaluate(*m, ds, "test", 4);
  CHECK(r.mean_epe == doctest::Approx(fc::zero_flow_epe(ds, "test")).epsilon(1e-6));
  CHECK(m->mode() == fc::Mode::kTrain);  // evaluate restores the previous mode

  // Per-class results reassemble into the mean.
  double acc = 0.0;
  int64_t n = 0;
  REQUIRE(r.per_class_epe.size() == fc::kNumClasses);
  for (size_t k = 0; k < r.per_class_epe.size(); ++k) {
    acc += r.per_class_epe[k] * static_cast<double>(r.per_class_n[k]);
    n += r.per_class_n[k];
  }
  CHECK(n == 8);
  CHECK(acc / static_cast<double>(n) == doctest::Approx(r.mean_epe).epsilon(1e-6));
}

TEST_CASE("evaluate does not mutate parameters or running stats") {
  Dataset ds = tiny_dataset("nm", 4, 4, 17);
  auto m = fc::build_flow_model<double>("flowcaps-mini", 5);
  std::vector<std::vector<double>> before;
  for (auto& [name, p] : m->store().params())
    before.emplace_back(p.data().begin(), p.data().end());
  for (auto& [name, b] : m->store().buffers())
    before.emplace_back(b.data().begin(), b.data().end());
  fc::evaluate(*m, ds, "test", 4);
  size_t i = 0;
  for (auto& [name, p] : m->store().params())
    CHECK(std::memcmp(before[i++].data(), p.raw_data(), sizeof(double) * p.numel()) == 0);
  for (auto& [name, b] : m->store().buffers())
    CHECK(std::memcmp(before[i++].data(), b.raw_data(), sizeof(double) * b.numel()) == 0);
}

TEST_CASE("training overfits a single repeated batch") {
  Dataset ds = tiny_dataset("of", 8, 2, 19);
  auto m = fc::build_flow_model<float>("flowcaps-mini", 7);
  fc::TrainOptions opts;
  opts.epochs = 100;
  opts.batch = 8;  // all eight train samples in every step
  opts.max_steps = 100;
  opts.patience = 0;
  opts.seed = 1;
  opts.adam.lr = 2e-3;
  fc::TrainRecord rec = fc::train_flow(*m, ds, opts);
  REQUIRE(rec.step_losses.size() == 100);
  CHECK(rec.step_losses.back() < 0.1 * rec.step_losses.front());
  // The trend is decreasing: Adam may spike transiently but never blow up.
  double run_min = rec.step_losses.front();
  for (double l : rec.step_losses) {
    CHECK(l < 3.0 * run_min + 1e-6);
    run_min = std::min(run_min, l);
  }
  // Each quarter of the trace improves on the previous one on average.
  auto quarter_mean = [&](size_t q) {
    double s = 0;
    for (size_t i = q * 25; i < (q + 1) * 25; ++i) s += rec.step_losses[i];
    return s / 25.0;
  };
  for (size_t q = 1; q < 4; ++q) CHECK(quarter_mean(q) < quarter_mean(q - 1));
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  Dataset ds = tiny_dataset("det", 8, 4, 23);
  fc::TrainOptions opts;
  opts.epochs = 2;
  opts.batch = 4;
  opts.patience = 0;
  opts.seed = 5;
  auto m1 = fc::build_flow_model<double>("flowcaps-mini", 9);
  auto m2 = fc::build_flow_model<double>("flowcaps-mini", 9);
  fc::TrainRecord r1 = fc::train_flow(*m1, ds, opts);
  fc::TrainRecord r2 = fc::train_flow(*m2, ds, opts);
  REQUIRE(r1.step_losses.size() == r2.step_losses.size());
  for (size_t i = 0; i < r1.step_losses.size(); ++i)
    CHECK(std::memcmp(&r1.step_losses[i], &r2.step_losses[i], 8) == 0);
}

TEST_CASE("divergence raises a domain error") {
  Dataset ds = tiny_dataset("div", 4, 2, 29);
  auto m = fc::build_flow_model<float>("flowcaps-mini", 11);
  auto& p = m->store().params()[0].second;
  p.raw_data()[0] = std::numeric_limits<float>::quiet_NaN();
  fc::TrainOptions opts;
  opts.epochs = 1;
  opts.batch = 4;
  opts.seed = 1;
  CHECK_THROWS_AS(fc::train_flow(*m, ds, opts), fc::DomainError);
}

TEST_CASE("checkpoint round-trip restores training bitwise") {
  Dataset ds = tiny_dataset("ck", 8, 4, 31);
  auto dir = fresh_dir("ckpt");

  fc::TrainOptions opts;
  opts.batch = 4;
  opts.patience = 0;
  opts.seed = 3;

  // Uninterrupted two epochs.
  auto m1 = fc::build_flow_model<double>("flowcaps-mini", 13);
  opts.epochs = 2;
  fc::TrainRecord full = fc::train_flow(*m1, ds, opts);

  // One epoch, checkpoint, resume one more.
  auto m2 = fc::build_flow_model<double>("flowcaps-mini", 13);
  opts.epochs = 1;
  opts.checkpoint_last = (dir / "half.ckpt").string();
  fc::TrainRecord half = fc::train_flow(*m2, ds, opts);

  CHECK(fc::checkpoint_precision(opts.checkpoint_last) == 8);

  auto m3 = fc::build_flow_model<double>("flowcaps-mini", 999);  // seed overwritten by resume
  fc::TrainOptions resume = opts;
  resume.epochs = 2;
  resume.resume_from = opts.checkpoint_last;
  resume.checkpoint_last.clear();
  fc::TrainRecord rest = fc::train_flow(*m3, ds, resume);

  REQUIRE(half.step_losses.size() + rest.step_losses.size() == full.step_losses.size());
  for (size_t i = 0; i < rest.step_losses.size(); ++i)
    CHECK(std::memcmp(&rest.step_losses[i], &full.step_losses[half.step_losses.size() + i], 8) ==
          0);

  // Loaded checkpoint reproduces the saved model verbatim.
  fc::CheckpointState<double> st = fc::load_checkpoint<double>(opts.checkpoint_last);
  CHECK(st.epoch == 1);
  const auto& pa = m2->store().params();
  const auto& pb = st.model->store().params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(std::memcmp(pa[i].second.raw_data(), pb[i].second.raw_data(),
                      sizeof(double) * pa[i].second.numel()) == 0);
  }
  CHECK(st.model->config().preset == "flowcaps-mini");
}

TEST_CASE("train record CSV has one row per step and epoch summaries") {
  Dataset ds = tiny_dataset("csv", 4, 2, 37);
  auto m = fc::build_flow_model<float>("flowcaps-mini", 17);
  fc::TrainOptions opts;
  opts.epochs = 1;
  opts.batch = 4;
  opts.seed = 1;
  fc::TrainRecord rec = fc::train_flow(*m, ds, opts);
  std::string csv = rec.to_csv();
  CHECK(csv.find("epoch,train_loss,test_epe,seconds") == 0);
  CHECK(csv.find("\n0,") != std::string::npos);
  CHECK(rec.step_losses.size() == 1);  // 4 train samples / batch 4
}

TEST_CASE("low-data protocol marks dropped samples and keeps fractions") {
  Dataset ds = tiny_dataset("ld", 16, 8, 41);
  fc::TrainOptions base;
  base.epochs = 1;
  base.batch = 4;
  base.max_steps = 1;
  base.patience = 0;
  base.seed = 1;
  fc::LowDataReport rep =
      fc::protocol_low_data<float>(ds, {0.5, 1.0}, {"flowcaps-mini"}, {1, 2}, base);
  REQUIRE(rep.rows.size() == 4);  // 2 fractions x 1 model x 2 seeds
  for (const auto& r : rep.rows) {
    CHECK(r.test_epe > 0.0);
    CHECK((r.fraction == 0.5 || r.fraction == 1.0));
  }
  std::string csv = rep.to_csv();
  CHECK(csv.find("fraction") != std::string::npos);
}

TEST_CASE("ood protocol keeps held-out shapes out of training") {
  SceneSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.max_disp = 2;
  spec.holdout_shapes = {fc::ShapeKind::kRing};
  Dataset ds = fc::gen_dataset(spec, 16, 16, 43, fresh_dir("ood").string());
  fc::TrainOptions base;
  base.epochs = 1;
  base.batch = 4;
  base.max_steps = 1;
  base.patience = 0;
  base.seed = 1;
  fc::OodReport rep = fc::protocol_ood<float>(ds, {"flowcaps-mini"}, {1}, base);
  CHECK(rep.train_held_out_hits == 0);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].in_domain_epe > 0.0);
  CHECK(rep.rows[0].held_out_epe > 0.0);
  bool has_ring = false;
  for (auto& [name, epe] : rep.rows[0].per_shape_epe) has_ring |= name == "ring";
  CHECK(has_ring);
}
