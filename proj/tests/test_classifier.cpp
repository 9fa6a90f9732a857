#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "flowcaps/classifier.hpp"

using fc::ClassifierConfig;
using fc::ClsOptions;
using Td = fc::Tensor<double>;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "fc_cls_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fc::Dataset small_dataset(const std::string& name, int n_train, int n_test, uint64_t seed) {
  fc::SceneSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.max_disp = 2;
  return fc::gen_dataset(spec, n_train, n_test, seed, fresh_dir(name).string());
}

}  // namespace

TEST_CASE("classifier parameter count matches the closed form") {
  fc::Classifier<double> cls(ClassifierConfig{}, 1);
  Td flow = Td::zeros({1, 2, 64, 64});
  cls.forward(flow);  // binds the dense layer: 64x64 -> 2x2 after five pools

  int64_t want = 0;
  std::vector<int> w = {2, 16, 32, 64, 64, 64};
  for (size_t i = 1; i < w.size(); ++i) want += 9LL * w[i - 1] * w[i] + w[i];
  int64_t flat = 64LL * 2 * 2;
  want += flat * 32 + 32;      // dense hidden
  want += 32LL * 8 + 8;        // logits
  CHECK(cls.count_params() == want);
}

TEST_CASE("classifier validates config and input extents") {
  ClassifierConfig bad;
  bad.conv_widths.clear();
  CHECK_THROWS_AS(bad.validate(), fc::ConfigError);

  fc::Classifier<double> cls(ClassifierConfig{}, 1);
  CHECK_THROWS_AS(cls.forward(Td::zeros({1, 2, 48, 48})), fc::ConfigError);
  CHECK_THROWS_AS(cls.forward(Td::zeros({1, 3, 64, 64})), fc::ShapeError);
}

TEST_CASE("probabilities form a simplex") {
  fc::Rng rng(3);
  fc::Classifier<double> cls(ClassifierConfig{}, 2);
  Td flow = fc::create<double>({3, 2, 32, 32}, fc::Init::uniform(-4, 4), rng);
  Td p = cls.probabilities(flow);
  REQUIRE(p.shape() == fc::Shape{3, 8});
  for (int i = 0; i < 3; ++i) {
    double s = 0;
    for (int k = 0; k < 8; ++k) {
      CHECK(p.data()[i * 8 + k] > 0.0);
      s += p.data()[i * 8 + k];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("cross_entropy matches -log softmax at the true label") {
  Td logits = Td::from_data({2, 3}, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  std::vector<int> labels = {1, 2};
  double want = 0.0;
  for (int n = 0; n < 2; ++n) {
    double denom = 0.0;
    for (int k = 0; k < 3; ++k) denom += std::exp(logits.data()[n * 3 + k]);
    want += -std::log(std::exp(logits.data()[n * 3 + labels[static_cast<size_t>(n)]]) / denom);
  }
  want /= 2.0;
  CHECK(fc::cross_entropy(logits, labels).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cross_entropy is stable for huge logits and differentiable") {
  Td logits = Td::from_data({1, 2}, {1000.0, 994.0}).set_requires_grad(true);
  Td l = fc::cross_entropy(logits, {0});
  CHECK(std::isfinite(l.item()));
  CHECK(l.item() == doctest::Approx(std::log(1.0 + std::exp(-6.0))).epsilon(1e-9));
  fc::backward(l);
  CHECK(logits.grad()[0] == doctest::Approx(-std::exp(-6.0) / (1 + std::exp(-6.0))).epsilon(1e-6));

  CHECK_THROWS_AS(fc::cross_entropy(Td::zeros({2, 3}), std::vector<int>{0}), fc::ShapeError);
  CHECK_THROWS_AS(fc::cross_entropy(Td::zeros({1, 3}), std::vector<int>{5}), fc::DataError);
}

TEST_CASE("classifier gradient agrees with finite differences") {
  fc::Rng rng(5);
  fc::Classifier<double> cls(ClassifierConfig{}, 7);
  std::vector<int> labels = {3, 6};
  Td x0 = fc::create<double>({2, 2, 32, 32}, fc::Init::uniform(-2, 2), rng);
  auto f = [&](Td& t) { return fc::cross_entropy(cls.forward(t), labels); };
  CHECK(fc::finite_diff_check<double>(f, x0, 1e-5, 16) < 1e-4);
}

TEST_CASE("gt_flows aligns with the manifest") {
  fc::Dataset ds = small_dataset("gt", 8, 4, 7);
  auto flows = fc::gt_flows<float>(ds);
  REQUIRE(flows.size() == ds.samples.size());
  fc::FlowField direct = fc::read_flo(ds.dir + "/" + ds.samples[3].flo);
  CHECK(flows[3].data == direct.data);
}

TEST_CASE("predicted_flows matches per-sample forward passes") {
  fc::Dataset ds = small_dataset("pf", 4, 3, 9);
  auto model = fc::build_flow_model<float>("flowcaps-mini", 11);
  auto flows = fc::predicted_flows<float>(*model, ds, 2);
  REQUIRE(flows.size() == ds.samples.size());

  model->set_mode(fc::Mode::kEval);
  fc::Batch<float> b = fc::load_batch<float>(ds, {0});
  fc::Tensor<float> y = model->forward(b.frames);
  for (int x = 0; x < 5; ++x)
    CHECK(flows[0].u(x, 0) == doctest::Approx(y.data()[x]).epsilon(1e-5));
}

TEST_CASE("evaluate_classifier confusion matrix is consistent with accuracy") {
  fc::Dataset ds = small_dataset("ev", 8, 8, 11);
  fc::Classifier<float> cls(ClassifierConfig{}, 13);
  auto flows = fc::gt_flows<float>(ds);
  fc::ClsEval ev = fc::evaluate_classifier(cls, ds, flows, "test", 4);
  REQUIRE(ev.confusion.size() == fc::kNumClasses);
  int64_t total = 0, diag = 0;
  for (size_t i = 0; i < ev.confusion.size(); ++i)
    for (size_t j = 0; j < ev.confusion[i].size(); ++j) {
      total += ev.confusion[i][j];
      if (i == j) diag += ev.confusion[i][j];
    }
  CHECK(total == 8);
  CHECK(ev.accuracy == doctest::Approx(static_cast<double>(diag) / 8.0).epsilon(1e-12));
}

TEST_CASE("classifier learns ground-truth flows quickly") {
  // Direction from clean flow is near-trivial; a few epochs must separate it.
  fc::Dataset ds = small_dataset("learn", 128, 32, 13);
  fc::Classifier<float> cls(ClassifierConfig{}, 17);
  auto flows = fc::gt_flows<float>(ds);
  ClsOptions opts;
  opts.epochs = 25;
  opts.batch = 8;
  opts.seed = 3;
  fc::ClsRecord rec = fc::train_classifier(cls, ds, flows, opts);
  CHECK(rec.best_acc >= 0.9);
  std::string csv = rec.to_csv();
  CHECK(csv.find("epoch,train_loss,test_acc") == 0);
}
