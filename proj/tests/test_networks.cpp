#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "flowcaps/losses.hpp"
#include "flowcaps/networks.hpp"

using fc::ModelConfig;
using Td = fc::Tensor<double>;
using Tf = fc::Tensor<float>;

TEST_CASE("preset parameter counts are frozen") {
  // Totals enumerated independently from the layer tables.
  auto count = [](const char* name) {
    return fc::build_flow_model<float>(name, 1)->count_params().total;
  };
  CHECK(count("flowcaps-paper") == 2423858);
  CHECK(count("flowcaps-mini") == 613530);
  CHECK(count("flownets-mini") == 2223954);
  CHECK(count("flownets-ref") == 38676506);
}

TEST_CASE("count_params splits by section and matches the store") {
  auto m = fc::build_flow_model<float>("flowcaps-mini", 1);
  fc::ParamCount pc = m->count_params();
  int64_t sum = 0;
  bool has_encoder = false, has_head = false;
  for (const auto& [sec, n] : pc.by_section) {
    sum += n;
    if (sec == "encoder") has_encoder = true;
    if (sec == "head") has_head = true;
  }
  CHECK(sum == pc.total);
  CHECK(pc.total == m->store().count());
  CHECK(has_encoder);
  CHECK(has_head);
}

TEST_CASE("forward produces a full-resolution two-channel field") {
  fc::Rng rng(3);
  Td x = fc::create<double>({2, 6, 64, 64}, fc::Init::uniform(-1, 1), rng);
  for (const char* name : {"flowcaps-mini", "flownets-mini", "flownets-ref"}) {
    auto m = fc::build_flow_model<double>(name, 7);
    m->set_mode(fc::Mode::kEval);
    Td flow = m->forward(x);
    CHECK(flow.shape() == fc::Shape{2, 2, 64, 64});
  }
}

TEST_CASE("forward validates input rank, channels, and divisibility") {
  auto m = fc::build_flow_model<double>("flowcaps-mini", 7);
  m->set_mode(fc::Mode::kEval);
  CHECK_THROWS_AS(m->forward(Td::zeros({2, 6, 64})), fc::ShapeError);
  CHECK_THROWS_AS(m->forward(Td::zeros({2, 3, 64, 64})), fc::ShapeError);
  CHECK_THROWS_AS(m->forward(Td::zeros({2, 6, 48, 64})), fc::ShapeError);
}

TEST_CASE("zero head weights produce exactly zero flow") {
  auto m = fc::build_flow_model<double>("flowcaps-mini", 7);
  m->set_mode(fc::Mode::kEval);
  for (auto& [name, p] : m->store().params())
    if (name.rfind("head/", 0) == 0) std::memset(p.raw_data(), 0, sizeof(double) * p.numel());
  fc::Rng rng(4);
  Td x = fc::create<double>({1, 6, 64, 64}, fc::Init::uniform(-1, 1), rng);
  Td flow = m->forward(x);
  for (double v : flow.data()) CHECK(v == 0.0);
}

TEST_CASE("every parameter receives a gradient from the combined loss") {
  fc::Rng rng(5);
  for (const char* name : {"flowcaps-mini", "flownets-mini"}) {
    auto m = fc::build_flow_model<double>(name, 11);
    m->set_mode(fc::Mode::kTrain);
    Td x = fc::create<double>({2, 6, 64, 64}, fc::Init::uniform(-1, 1), rng);
    Td gt = fc::create<double>({2, 2, 64, 64}, fc::Init::uniform(-2, 2), rng);
    Td loss = fc::combined_loss(m->forward(x), gt, 0.15);
    fc::backward(loss);
    for (const auto& [pname, p] : m->store().params()) {
      INFO(name << " param " << pname);
      REQUIRE(p.raw_grad() != nullptr);
      double s = 0;
      for (int64_t i = 0; i < p.numel(); ++i) s += std::fabs(p.raw_grad()[i]);
      CHECK(s > 0.0);
    }
  }
}

TEST_CASE("eval-mode flow is covariant with input translation") {
  // Shift both frames by a multiple of the total downsampling factor; the
  // interior of the predicted field must shift identically.
  auto m = fc::build_flow_model<float>("flowcaps-mini", 13);
  m->set_mode(fc::Mode::kEval);
  const int64_t S = 384, shift = 32;
  fc::Rng rng(6);
  Tf base = fc::create<float>({1, 6, S, S}, fc::Init::uniform(-1, 1), rng);

  std::vector<float> shifted(base.data().begin(), base.data().end());
  for (int64_t c = 0; c < 6; ++c)
    for (int64_t y = S - 1; y >= 0; --y)
      for (int64_t x = S - 1; x >= 0; --x) {
        int64_t sy = y - shift, sx = x - shift;
        shifted[static_cast<size_t>((c * S + y) * S + x)] =
            (sy >= 0 && sx >= 0) ? base.data()[(c * S + sy) * S + sx]
                                 : base.data()[(c * S + y) * S + x];
      }
  Tf a = m->forward(base);
  Tf b = m->forward(Tf::from_data(base.shape(), shifted));

  // The receptive field reaches the border everywhere on this canvas, so the
  // comparison is asymptotic: deep in the interior the mismatch must be a tiny
  // fraction of the signal (a stride or alignment bug makes it order one).
  const int64_t m0 = 176, m1 = S - 176;
  double se = 0, sa = 0;
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t y = m0; y < m1; ++y)
      for (int64_t x = m0; x < m1; ++x) {
        double ref = a.data()[(c * S + y - shift) * S + x - shift];
        double d = b.data()[(c * S + y) * S + x] - ref;
        se += d * d;
        sa += ref * ref;
      }
  CHECK(std::sqrt(se / sa) < 5e-3);
}

TEST_CASE("config kv text round-trips every preset") {
  for (const auto& name : ModelConfig::preset_names()) {
    ModelConfig cfg = ModelConfig::preset_config(name);
    ModelConfig back = ModelConfig::from_kv(cfg.to_kv());
    CHECK(back.to_kv() == cfg.to_kv());
    CHECK(back.total_downsample() == cfg.total_downsample());
    CHECK(back.head_downsample() == cfg.head_downsample());
    back.validate();
  }
  CHECK_THROWS_AS(ModelConfig::preset_config("nope"), fc::ConfigError);
}

TEST_CASE("config validation rejects malformed trunks") {
  ModelConfig cfg = ModelConfig::preset_config("flowcaps-mini");
  cfg.contracting_width.pop_back();
  CHECK_THROWS_AS(cfg.validate(), fc::ConfigError);

  cfg = ModelConfig::preset_config("flowcaps-mini");
  cfg.contracting_stride[1] = 1;
  CHECK_THROWS_AS(cfg.validate(), fc::ConfigError);

  cfg = ModelConfig::preset_config("flowcaps-mini");
  cfg.expanding_width.push_back(4);
  CHECK_THROWS_AS(cfg.validate(), fc::ConfigError);

  cfg = ModelConfig::preset_config("flowcaps-mini");
  cfg.caps[2].types = 2;
  CHECK_THROWS_AS(cfg.validate(), fc::ConfigError);

  cfg = ModelConfig::preset_config("flowcaps-mini");
  cfg.caps[0].routing = 3;
  CHECK_THROWS_AS(cfg.validate(), fc::ConfigError);
}

TEST_CASE("same seed builds identical models, different seeds differ") {
  auto a = fc::build_flow_model<float>("flowcaps-mini", 99);
  auto b = fc::build_flow_model<float>("flowcaps-mini", 99);
  auto c = fc::build_flow_model<float>("flowcaps-mini", 100);
  bool same = true, diff = false;
  const auto& pa = a->store().params();
  const auto& pb = b->store().params();
  const auto& pc = c->store().params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    same = same && std::memcmp(pa[i].second.raw_data(), pb[i].second.raw_data(),
                               sizeof(float) * pa[i].second.numel()) == 0;
    diff = diff || std::memcmp(pa[i].second.raw_data(), pc[i].second.raw_data(),
                               sizeof(float) * pa[i].second.numel()) != 0;
  }
  CHECK(same);
  CHECK(diff);
}
