#pragma once

#include <memory>
#include <string>
#include <vector>

#include "flowcaps/networks.hpp"
#include "flowcaps/synthetic.hpp"

namespace fc {

struct ClassifierConfig {
  std::vector<int> conv_widths = {16, 32, 64, 64, 64};  // 3x3 conv + 2x2 maxpool each
  int dense_width = 32;
  int num_classes = kNumClasses;
  int in_channels = 2;  // raw flow (u, v)

  void validate() const;
};

template <class T>
class Classifier {
 public:
  Classifier(const ClassifierConfig& cfg, uint64_t seed);

  // flow [N, 2, H, W] with H, W divisible by 2^5; returns logits [N, num_classes].
  Tensor<T> forward(const Tensor<T>& flow);
  Tensor<T> probabilities(const Tensor<T>& flow);  // softmax over classes

  ParamStore<T>& store() { return store_; }
  const ClassifierConfig& config() const { return cfg_; }
  int64_t count_params() const { return store_.count(); }

 private:
  void ensure_dense(int64_t flat);  // dense shapes bound on first forward

  ClassifierConfig cfg_;
  ParamStore<T> store_;
  int flat_ch_ = 0;
  uint64_t dense_seed_ = 0;
};

// Mean cross-entropy of logits [N, K] against integer labels, composed from
// differentiable primitives via a shifted log-sum-exp.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

// Flow inputs for the classifier: ground-truth .flo files, or predictions from
// a trained flow model (computed once, in eval mode). One field per dataset
// sample, aligned with ds.samples.
template <class T>
std::vector<FlowField> gt_flows(const Dataset& ds);

template <class T>
std::vector<FlowField> predicted_flows(FlowModel<T>& flow_model, const Dataset& ds, int batch = 8);

struct ClsOptions {
  int epochs = 50;
  int batch = 8;
  double lr = 1e-3;
  uint64_t seed = 0;
  int max_steps = -1;
  bool verbose = false;
};

struct ClsEpochStat {
  int epoch = 0;
  double train_loss = 0.0, test_acc = 0.0, seconds = 0.0;
};

struct ClsRecord {
  uint64_t seed = 0;
  std::vector<ClsEpochStat> epochs;
  double best_acc = 0.0;
  std::string to_csv() const;
};

struct ClsEval {
  double accuracy = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // [true][pred]
  std::string to_csv() const;
};

template <class T>
ClsRecord train_classifier(Classifier<T>& cls, const Dataset& ds,
                           const std::vector<FlowField>& flows, const ClsOptions& opts);

template <class T>
ClsEval evaluate_classifier(Classifier<T>& cls, const Dataset& ds,
                            const std::vector<FlowField>& flows, const std::string& split,
                            int batch = 8);

}  // namespace fc
