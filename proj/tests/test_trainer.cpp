#include <cmath>

#include "doctest.h"
#include "ntsf/datagen.hpp"
#include "ntsf/trainer.hpp"

using namespace ntsf;

namespace {

Dataset easy_dataset(int64_t n = 100, uint64_t seed = 1) {
  SynthSpec spec;
  spec.n = n;
  spec.classes = 3;
  spec.text_dim = 16;
  spec.visual_dim = 12;
  spec.p_in = 0.25;
  spec.p_out = 0.02;
  spec.mean_sep = 6.0;
  spec.noise = 0.5;
  spec.seed = seed;
  return generate(spec);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.model.hidden_dim = 32;
  cfg.model.hops = 2;
  cfg.model.n_experts = 3;
  cfg.model.top_k = 2;
  cfg.model.n_layers = 1;
  cfg.model.n_heads = 2;
  cfg.epochs = 10;
  cfg.batch_size = 1024;
  cfg.patience = 1000;
  cfg.seed = 1;
  cfg.deterministic = true;
  return cfg;
}

}  // namespace

TEST_CASE("prepare_train_data: held-out nodes see only themselves") {
  auto data = easy_dataset(120, 2);
  auto prepared = prepare_train_data(data, 5, 2);
  // an isolated node's propagated features are its own padded features
  for (int64_t id : prepared.split.test)
    for (int64_t j = 0; j < prepared.text.d; ++j) {
      CHECK(prepared.hops_text.hops[0].row(id)[j] == prepared.text.row(id)[j]);
      CHECK(prepared.hops_text.hops[1].row(id)[j] == prepared.text.row(id)[j]);
      CHECK(prepared.hops_visual.hops[0].row(id)[j] == prepared.visual.row(id)[j]);
    }
}

TEST_CASE("train: loss decreases over the first steps on separable data") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 3, 2);
  auto cfg = small_config();
  cfg.epochs = 10;  // full batch: one step per epoch
  auto result = train(prepared, cfg);
  REQUIRE(result.history.size() == 10);
  CHECK(result.history.back().loss_ce < result.history.front().loss_ce);
}

TEST_CASE("train: history records the contracted tuple") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 4, 2);
  auto cfg = small_config();
  cfg.epochs = 4;
  auto result = train(prepared, cfg);
  REQUIRE(result.history.size() == 4);
  for (size_t i = 0; i < result.history.size(); ++i) {
    const auto& e = result.history[i];
    CHECK(e.epoch == static_cast<int64_t>(i + 1));
    CHECK(std::isfinite(e.loss_ce));
    CHECK(std::isfinite(e.loss_st));
    CHECK(std::isfinite(e.loss_moe));
    CHECK(e.val_acc >= 0.0);
    CHECK(e.val_acc <= 1.0);
  }
}

TEST_CASE("train: identical seeds give identical runs in deterministic mode") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 6, 2);
  auto cfg = small_config();
  cfg.epochs = 6;
  auto a = train(prepared, cfg);
  auto b = train(prepared, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].loss_ce == b.history[i].loss_ce);
    CHECK(a.history[i].loss_st == b.history[i].loss_st);
    CHECK(a.history[i].loss_moe == b.history[i].loss_moe);
    CHECK(a.history[i].val_acc == b.history[i].val_acc);
  }
  auto pa = a.model.named_parameters();
  auto pb = b.model.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].tensor.data == *pb[i].tensor.data);
}

TEST_CASE("train: the best checkpoint is the earliest epoch with maximal validation accuracy") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 7, 2);
  auto cfg = small_config();
  cfg.epochs = 8;
  auto result = train(prepared, cfg);
  double best = -1;
  int64_t first_best = 0;
  for (const auto& e : result.history)
    if (e.val_acc > best) {
      best = e.val_acc;
      first_best = e.epoch;
    }
  CHECK(result.best_val_acc == best);
  CHECK(result.best_epoch == first_best);
}

TEST_CASE("train: early stopping respects the patience window") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 8, 2);
  auto cfg = small_config();
  cfg.epochs = 50;
  cfg.patience = 3;
  auto result = train(prepared, cfg);
  CHECK(static_cast<int64_t>(result.history.size()) <= 50);
  // the run never continues more than patience epochs past the best one
  CHECK(result.history.back().epoch - result.best_epoch <= 3);
}

TEST_CASE("train: divergence aborts with a numeric error") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 9, 2);
  auto cfg = small_config();
  cfg.epochs = 30;
  cfg.lr = 1e9;
  CHECK_THROWS_AS(train(prepared, cfg), NumericError);
}

TEST_CASE("train: mini-batches always carry a labeled node") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 14, 2);
  auto cfg = small_config();
  cfg.epochs = 3;
  cfg.batch_size = 8;  // many batches; cross_entropy would reject an unlabeled-only one
  auto result = train(prepared, cfg);
  CHECK(result.history.size() == 3);

  // mini-batch and full-batch runs agree on the protocol but not the path
  cfg.batch_size = 1024;
  auto full = train(prepared, cfg);
  CHECK(full.history.size() == 3);
}

TEST_CASE("train: ablation switches run end to end") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 10, 2);
  auto cfg = small_config();
  cfg.epochs = 2;

  cfg.model.moe = false;  // shared projection only
  auto no_moe = train(prepared, cfg);
  CHECK(no_moe.history.back().loss_moe == 0.0);

  cfg.model.moe = true;
  cfg.st_detach_student = true;  // separate-student distillation analogue
  CHECK(train(prepared, cfg).history.size() == 2);

  cfg.st_detach_student = false;
  cfg.st_labeled_only = true;
  CHECK(train(prepared, cfg).history.size() == 2);
}

TEST_CASE("evaluate: the combined accuracy is the size-weighted mean") {
  auto data = easy_dataset();
  auto prepared = prepare_train_data(data, 11, 2);
  auto cfg = small_config();
  cfg.epochs = 3;
  auto result = train(prepared, cfg);
  auto rep = evaluate_split(result.model, prepared.text, prepared.visual, prepared.labels,
                            prepared.split, true);
  const int64_t total = rep.n_text_miss + rep.n_visual_miss + rep.n_no_miss;
  CHECK(total == static_cast<int64_t>(prepared.split.test.size()));
  const double weighted = (rep.text_miss * rep.n_text_miss + rep.visual_miss * rep.n_visual_miss +
                           rep.no_miss * rep.n_no_miss) /
                          static_cast<double>(total);
  CHECK(rep.all == doctest::Approx(weighted).epsilon(1e-12));
}

TEST_CASE("evaluate: a well-trained model classifies clean cold-start nodes perfectly") {
  SynthSpec spec;
  spec.n = 150;
  spec.classes = 3;
  spec.text_dim = 12;
  spec.visual_dim = 12;
  spec.p_in = 0.3;
  spec.p_out = 0.02;
  spec.mean_sep = 12.0;
  spec.noise = 0.0;  // every node sits exactly on its class mean
  spec.seed = 12;
  auto data = generate(spec);
  auto prepared = prepare_train_data(data, 13, 2);
  auto cfg = small_config();
  cfg.epochs = 60;
  cfg.patience = 60;
  auto result = train(prepared, cfg);
  auto rep = evaluate_split(result.model, prepared.text, prepared.visual, prepared.labels,
                            prepared.split, true);
  CHECK(rep.text_miss == 1.0);
  CHECK(rep.visual_miss == 1.0);
  CHECK(rep.no_miss == 1.0);
  CHECK(rep.all == 1.0);
}

TEST_CASE("run_multiseed: one seed has zero deviation; seeds share the split") {
  auto data = easy_dataset();
  auto cfg = small_config();
  cfg.epochs = 2;
  auto report = run_multiseed(data, cfg, {4});
  CHECK(report.all.stddev == 0.0);
  CHECK(report.all.per_seed.size() == 1);

  // the partition depends on the seed alone, not on the model settings
  auto a = prepare_train_data(data, 4, 2);
  auto b = prepare_train_data(data, 4, 1);  // different hops, same seed
  // different hop depth, still the same node partition
  auto a2 = prepare_train_data(data, 4, 1);
  CHECK(a.split.test == b.split.test);
  CHECK(b.split.labeled_train == a2.split.labeled_train);
}

TEST_CASE("run_multiseed: aggregates mean and sample deviation") {
  auto data = easy_dataset(100, 21);
  auto cfg = small_config();
  cfg.epochs = 3;
  auto report = run_multiseed(data, cfg, {1, 2, 3});
  REQUIRE(report.all.per_seed.size() == 3);
  double mean = 0;
  for (double v : report.all.per_seed) mean += v / 3.0;
  CHECK(report.all.mean == doctest::Approx(mean).epsilon(1e-12));
  double ss = 0;
  for (double v : report.all.per_seed) ss += (v - mean) * (v - mean);
  CHECK(report.all.stddev == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
}
