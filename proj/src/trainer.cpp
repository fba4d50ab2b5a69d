#include "ntsf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ntsf {

namespace {

// Labeled nodes are dealt round-robin first so every batch can form the
// cross-entropy term; unlabeled nodes fill the batches up.
std::vector<std::vector<int64_t>> make_batches(const SplitSpec& split, int64_t batch_size,
                                               Rng& rng) {
  std::vector<int64_t> labeled = split.labeled_train;
  std::vector<int64_t> unlabeled = split.unlabeled_train;
  rng.shuffle(labeled);
  rng.shuffle(unlabeled);
  const int64_t total = static_cast<int64_t>(labeled.size() + unlabeled.size());
  check_contract(!labeled.empty(), "train: no labeled training nodes");
  int64_t n_batches = (total + batch_size - 1) / batch_size;
  n_batches = std::max<int64_t>(1, std::min(n_batches, static_cast<int64_t>(labeled.size())));
  std::vector<std::vector<int64_t>> batches(static_cast<size_t>(n_batches));
  for (size_t i = 0; i < labeled.size(); ++i) batches[i % n_batches].push_back(labeled[i]);
  for (size_t i = 0; i < unlabeled.size(); ++i) batches[i % n_batches].push_back(unlabeled[i]);
  return batches;
}

double accuracy(const Tensor<float>& probs, const std::vector<int32_t>& labels) {
  const int64_t n = probs.rows(), c = probs.cols();
  check_input(static_cast<int64_t>(labels.size()) == n, "accuracy: label count mismatch");
  int64_t hit = 0, counted = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (probs.cptr()[i * c + j] > probs.cptr()[i * c + best]) best = j;
    hit += best == labels[i];
    ++counted;
  }
  return counted == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(counted);
}

}  // namespace

TrainData prepare_train_data(const Dataset& data, uint64_t seed, int64_t hops, bool stratify) {
  auto part = partition(data.n(), data.labels, data.edges, seed, stratify);
  const int64_t d_in = std::max(data.text.d, data.visual.d);
  TrainData out;
  out.text = pad_features(data.text, d_in);
  out.visual = pad_features(data.visual, d_in);
  auto norm_adj = normalize_sym(part.train_graph);
  out.hops_text = propagate(norm_adj, out.text, hops);
  out.hops_visual = propagate(norm_adj, out.visual, hops);
  out.labels = data.labels;
  out.split = std::move(part.split);
  return out;
}

TrainResult train(const TrainData& data, const TrainConfig& cfg, const EpochObserver& observer) {
  check_input(cfg.epochs >= 1, "train: epochs must be >= 1");
  check_input(cfg.batch_size >= 1, "train: batch_size must be >= 1");
  check_input(data.text.d == data.visual.d, "train: features not padded to a shared width");
  set_num_threads(cfg.deterministic ? 1 : cfg.threads);

  ModelConfig mc = cfg.model;
  mc.input_dim = data.text.d;
  if (mc.n_classes == 0) {
    int32_t top = -1;
    for (int32_t y : data.labels) top = std::max(top, y);
    mc.n_classes = top + 1;
  }
  mc.validate();

  auto model = Model<float>::init(mc, cfg.seed);
  auto params = model.named_parameters();
  auto ptrs = parameter_pointers(params);
  AdamWOptions opts;
  opts.lr = cfg.lr;
  opts.weight_decay = cfg.weight_decay;
  opts.beta1 = cfg.beta1;
  opts.beta2 = cfg.beta2;
  opts.eps = cfg.adam_eps;
  AdamW<float> optimizer(opts);

  const auto mask = build_cold_start_mask(mc.hops);

  // fixed evaluation flags for the validation set
  std::vector<int32_t> val_labels;
  std::vector<uint8_t> val_tm, val_vm;
  for (size_t i = 0; i < data.split.validation.size(); ++i) {
    val_labels.push_back(data.labels[data.split.validation[i]]);
    val_tm.push_back(data.split.val_miss[i] == SplitSpec::Miss::text);
    val_vm.push_back(data.split.val_miss[i] == SplitSpec::Miss::visual);
  }

  TrainResult result;
  result.best_val_acc = -1.0;
  int64_t since_best = 0;

  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng = Rng::keyed(cfg.seed, Rng::kBatchOrder, static_cast<uint64_t>(epoch));
    Rng mask_rng = Rng::keyed(cfg.seed, Rng::kMasking, static_cast<uint64_t>(epoch));
    auto batches = make_batches(data.split, cfg.batch_size, order_rng);

    double sum_ce = 0, sum_st = 0, sum_moe = 0;
    int64_t seen = 0;
    for (size_t b = 0; b < batches.size(); ++b) {
      const auto& ids = batches[b];
      auto batch = build_sequence<float>(data.text, data.visual, data.hops_text,
                                         data.hops_visual, mc.hops, &ids);
      batch = apply_missing(batch, cfg.p_miss, mask_rng);
      std::vector<int32_t> labels;
      labels.reserve(ids.size());
      for (int64_t id : ids) labels.push_back(data.labels[id]);
      std::vector<int64_t> st_rows;
      const std::vector<int64_t>* st_rows_ptr = nullptr;
      if (cfg.st_labeled_only) {
        for (size_t r = 0; r < labels.size(); ++r)
          if (labels[r] >= 0) st_rows.push_back(static_cast<int64_t>(r));
        st_rows_ptr = &st_rows;
      }

      Rng drop_rng =
          Rng::keyed(cfg.seed, Rng::kDropout, static_cast<uint64_t>(epoch), static_cast<uint64_t>(b));
      Tape<float> tape(true, true, &drop_rng);
      auto fwd = forward_batch(tape, model, batch, mask, cfg.st_detach_student);
      auto loss = total_loss(tape, fwd.bundle, labels, fwd.moe_loss, cfg.st_weight,
                             cfg.moe_weight, st_rows_ptr);
      const double total_value = static_cast<double>(loss.total.item());
      if (!std::isfinite(total_value))
        throw NumericError("train: loss diverged (non-finite) at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(b));
      model.zero_grads();
      tape.backward(loss.total);
      optimizer.step(ptrs);

      const auto w = static_cast<double>(ids.size());
      sum_ce += w * static_cast<double>(loss.ce.item());
      sum_st += w * static_cast<double>(loss.self_teach.item());
      sum_moe += w * static_cast<double>(loss.moe.item());
      seen += static_cast<int64_t>(ids.size());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss_ce = sum_ce / seen;
    stats.loss_st = sum_st / seen;
    stats.loss_moe = sum_moe / seen;
    if (!data.split.validation.empty()) {
      auto val_probs = infer_cold_start(model, data.text, data.visual, val_tm, val_vm,
                                        &data.split.validation);
      stats.val_acc = accuracy(val_probs, val_labels);
    }
    result.history.push_back(stats);
    if (cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch == cfg.epochs))
      std::printf("epoch %4lld  ce %.4f  st %.4f  moe %.4f  val %.4f\n",
                  static_cast<long long>(epoch), stats.loss_ce, stats.loss_st, stats.loss_moe,
                  stats.val_acc);

    if (stats.val_acc > result.best_val_acc) {  // ties keep the earlier epoch
      result.best_val_acc = stats.val_acc;
      result.best_epoch = epoch;
      result.model = model.clone();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
    if (observer && !observer(model, stats)) break;
  }
  return result;
}

EvalReport evaluate(const Model<float>& model, const FeatureMatrix& text,
                    const FeatureMatrix& visual, const std::vector<int32_t>& labels,
                    const std::vector<int64_t>& ids, const std::vector<SplitSpec::Miss>& miss) {
  check_input(ids.size() == miss.size(), "evaluate: one miss flag per node required");
  std::vector<uint8_t> tm, vm;
  std::vector<int32_t> y;
  for (size_t i = 0; i < ids.size(); ++i) {
    tm.push_back(miss[i] == SplitSpec::Miss::text);
    vm.push_back(miss[i] == SplitSpec::Miss::visual);
    y.push_back(labels[ids[i]]);
  }
  auto probs = infer_cold_start(model, text, visual, tm, vm, &ids);

  const int64_t c = probs.cols();
  int64_t hit[3] = {0, 0, 0}, cnt[3] = {0, 0, 0};
  for (size_t i = 0; i < ids.size(); ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (probs.cptr()[i * c + j] > probs.cptr()[i * c + best]) best = j;
    const int g = static_cast<int>(miss[i]);
    cnt[g] += 1;
    hit[g] += best == y[i];
  }
  EvalReport rep;
  rep.n_no_miss = cnt[0];
  rep.n_text_miss = cnt[1];
  rep.n_visual_miss = cnt[2];
  rep.no_miss = cnt[0] ? static_cast<double>(hit[0]) / cnt[0] : 0.0;
  rep.text_miss = cnt[1] ? static_cast<double>(hit[1]) / cnt[1] : 0.0;
  rep.visual_miss = cnt[2] ? static_cast<double>(hit[2]) / cnt[2] : 0.0;
  const int64_t total = cnt[0] + cnt[1] + cnt[2];
  rep.all = total ? static_cast<double>(hit[0] + hit[1] + hit[2]) / total : 0.0;
  return rep;
}

EvalReport evaluate_split(const Model<float>& model, const FeatureMatrix& text,
                          const FeatureMatrix& visual, const std::vector<int32_t>& labels,
                          const SplitSpec& split, bool on_test) {
  return on_test ? evaluate(model, text, visual, labels, split.test, split.test_miss)
                 : evaluate(model, text, visual, labels, split.validation, split.val_miss);
}

namespace {

ConditionStats summarize(std::vector<double> values) {
  ConditionStats s;
  s.per_seed = values;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace

MultiseedReport run_multiseed(const Dataset& data, const TrainConfig& base,
                              const std::vector<uint64_t>& seeds,
                              const EpochObserver& observer) {
  check_input(!seeds.empty(), "run_multiseed: need at least one seed");
  std::vector<double> acc_text, acc_visual, acc_none, acc_all;
  for (uint64_t seed : seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    auto prepared = prepare_train_data(data, seed, cfg.model.hops, cfg.stratify);
    auto trained = train(prepared, cfg, observer);
    auto rep = evaluate_split(trained.model, prepared.text, prepared.visual, prepared.labels,
                              prepared.split, true);
    acc_text.push_back(rep.text_miss);
    acc_visual.push_back(rep.visual_miss);
    acc_none.push_back(rep.no_miss);
    acc_all.push_back(rep.all);
  }
  MultiseedReport report;
  report.seeds = seeds;
  report.text_miss = summarize(acc_text);
  report.visual_miss = summarize(acc_visual);
  report.no_miss = summarize(acc_none);
  report.all = summarize(acc_all);
  return report;
}

}  // namespace ntsf
