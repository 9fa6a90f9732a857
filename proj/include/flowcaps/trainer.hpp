#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowcaps/losses.hpp"
#include "flowcaps/networks.hpp"
#include "flowcaps/synthetic.hpp"

namespace fc {

struct AdamConfig {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Bias-corrected Adam over a ParamStore. Moment buffers are owned here and
// serialized into checkpoints.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(ParamStore<T>& store, const AdamConfig& cfg);

  void step();
  int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  std::vector<std::vector<T>>& m() { return m_; }
  std::vector<std::vector<T>>& v() { return v_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  ParamStore<T>* store_ = nullptr;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  int64_t step_ = 0;
};

enum class LossKind { kEpe, kCombined };

struct TrainOptions {
  int epochs = 30;
  int batch = 8;
  LossKind loss = LossKind::kEpe;
  double alpha = 0.15;
  uint64_t seed = 0;
  AdamConfig adam;
  int patience = 5;          // early stop when test EPE stops improving; <=0 disables
  double target_epe = -1.0;  // stop once test EPE <= target; <0 disables
  bool hflip = false;        // horizontal-flip augmentation
  int max_steps = -1;        // stop after this many optimizer steps; <0 disables
  std::string checkpoint_best;  // save best-EPE checkpoint here (optional)
  std::string checkpoint_last;  // save end-of-training state here (optional)
  std::string resume_from;      // load state before training (optional)
  bool verbose = false;
};

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0, test_epe = 0.0, seconds = 0.0;
};

struct TrainRecord {
  uint64_t seed = 0;
  std::vector<EpochStat> epochs;
  std::vector<double> step_losses;
  double best_epe = 0.0;
  int best_epoch = -1;

  std::string to_csv() const;
};

struct EvalResult {
  double mean_epe = 0.0;
  std::vector<double> per_class_epe;   // kNumClasses entries (NaN-free; 0 if absent)
  std::vector<int64_t> per_class_n;
};

template <class T>
TrainRecord train_flow(FlowModel<T>& model, const Dataset& ds, const TrainOptions& opts);

template <class T>
EvalResult evaluate(FlowModel<T>& model, const Dataset& ds, const std::string& split,
                    int batch = 8);

// EPE of predicting zero motion everywhere: the mean ground-truth magnitude.
double zero_flow_epe(const Dataset& ds, const std::string& split);

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

template <class T>
struct CheckpointState {
  std::unique_ptr<FlowModel<T>> model;
  AdamConfig adam_cfg;
  std::vector<std::vector<T>> adam_m, adam_v;
  int64_t adam_step = 0;
  std::array<uint64_t, 4> rng_state{};
  int epoch = 0;
  double best_epe = 0.0;
};

template <class T>
void save_checkpoint(const std::string& path, FlowModel<T>& model, const Adam<T>* adam,
                     const Rng& rng, int epoch, double best_epe);

template <class T>
CheckpointState<T> load_checkpoint(const std::string& path);

// Precision byte stored in a checkpoint header (4 = f32, 8 = f64).
int checkpoint_precision(const std::string& path);

// ---------------------------------------------------------------------------
// experiment protocols
// ---------------------------------------------------------------------------

struct ProtocolRow {
  double fraction = 1.0;
  uint64_t seed = 0;
  std::string model;
  double test_epe = 0.0;
};

struct LowDataReport {
  std::vector<ProtocolRow> rows;
  // per fraction: (fraction, mean epe flownets, mean epe flowcaps, difference)
  std::string to_csv() const;
};

struct OodReport {
  struct Row {
    std::string model;
    uint64_t seed = 0;
    double in_domain_epe = 0.0, held_out_epe = 0.0;
    std::vector<std::pair<std::string, double>> per_shape_epe;  // held-out shapes
  };
  std::vector<Row> rows;
  int64_t train_held_out_hits = 0;  // must stay 0: held-out samples seen in training
  std::string to_csv() const;
};

template <class T>
LowDataReport protocol_low_data(const Dataset& ds, const std::vector<double>& fractions,
                                const std::vector<std::string>& presets,
                                const std::vector<uint64_t>& seeds, const TrainOptions& base);

template <class T>
OodReport protocol_ood(const Dataset& ds, const std::vector<std::string>& presets,
                       const std::vector<uint64_t>& seeds, const TrainOptions& base);

}  // namespace fc
