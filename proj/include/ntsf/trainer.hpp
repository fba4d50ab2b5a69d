#pragma once

#include <functional>

#include "ntsf/dataset.hpp"
#include "ntsf/heads.hpp"
#include "ntsf/optimizer.hpp"
#include "ntsf/split.hpp"

namespace ntsf {

struct TrainConfig {
  ModelConfig model;
  int64_t epochs = 300;
  int64_t batch_size = 1024;
  int64_t patience = 50;  // epochs without a validation improvement
  double lr = 2e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double st_weight = 1.0;   // self-teaching loss weight
  double moe_weight = 0.1;  // balance loss weight
  double p_miss = 1.0 / 3.0;
  bool st_labeled_only = false;     // restrict self-teaching to labeled rows
  bool st_detach_student = false;   // separate-student distillation ablation
  bool stratify = true;             // partition stratification (pipeline)
  uint64_t seed = 1;
  bool deterministic = false;  // single-threaded kernels, same-seed replay
  int threads = 0;             // 0 = auto
  int64_t log_every = 0;       // epochs between progress lines; 0 = silent
};

// Everything the training loop touches. Deliberately holds no adjacency:
// neighbor information enters only through the precomputed hop stacks.
struct TrainData {
  FeatureMatrix text, visual;  // padded to the shared input width
  HopStack hops_text, hops_visual;
  std::vector<int32_t> labels;
  SplitSpec split;
};

struct EpochStats {
  int64_t epoch = 0;  // 1-based
  double loss_ce = 0, loss_st = 0, loss_moe = 0;
  double val_acc = 0;
};
using History = std::vector<EpochStats>;

struct TrainResult {
  Model<float> model;  // checkpoint with the best validation accuracy
  History history;
  int64_t best_epoch = 0;
  double best_val_acc = 0;
};

// Called after every epoch; return false to stop training early.
using EpochObserver = std::function<bool(const Model<float>&, const EpochStats&)>;

TrainResult train(const TrainData& data, const TrainConfig& cfg,
                  const EpochObserver& observer = nullptr);

// Student accuracy under the four evaluation conditions. Evaluation runs
// the cold-start path only; the signature admits no graph structure.
struct EvalReport {
  double text_miss = 0, visual_miss = 0, no_miss = 0, all = 0;
  int64_t n_text_miss = 0, n_visual_miss = 0, n_no_miss = 0;
};

EvalReport evaluate(const Model<float>& model, const FeatureMatrix& text,
                    const FeatureMatrix& visual, const std::vector<int32_t>& labels,
                    const std::vector<int64_t>& ids, const std::vector<SplitSpec::Miss>& miss);

// Convenience: evaluate on a split's test (or validation) nodes.
EvalReport evaluate_split(const Model<float>& model, const FeatureMatrix& text,
                          const FeatureMatrix& visual, const std::vector<int32_t>& labels,
                          const SplitSpec& split, bool on_test = true);

// partition + pad + normalize + propagate for one seed
TrainData prepare_train_data(const Dataset& data, uint64_t seed, int64_t hops,
                             bool stratify = true);

struct ConditionStats {
  double mean = 0, stddev = 0;  // sample standard deviation, 0 for one seed
  std::vector<double> per_seed;
};

struct MultiseedReport {
  std::vector<uint64_t> seeds;
  ConditionStats text_miss, visual_miss, no_miss, all;
};

// Trains and evaluates once per seed; the seed controls the partition, so
// different configurations run on identical splits for the same seed.
MultiseedReport run_multiseed(const Dataset& data, const TrainConfig& base,
                              const std::vector<uint64_t>& seeds,
                              const EpochObserver& observer = nullptr);

}  // namespace ntsf
