// Acceptance suite: every release-gating property, one pass/fail line each.
// Exits with the number of failed checks.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ntsf/dataio.hpp"
#include "ntsf/datagen.hpp"
#include "ntsf/pipeline.hpp"
#include "ntsf/trainer.hpp"

using namespace ntsf;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& note) {
  std::printf("[%s] %2d %-28s %s\n", pass ? "PASS" : "FAIL", id, name, note.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("ntsf_acceptance_" + std::to_string(::getpid()) + "_" + tag);
  std::filesystem::create_directories(dir);
  return dir.string();
}

FeatureMatrix random_features(int64_t n, int64_t d, uint64_t seed, Modality m) {
  Rng rng = Rng::keyed(seed, Rng::kTest);
  auto x = FeatureMatrix::zeros(n, d, m);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  return x;
}

// ---- 1: cold-start inference equals the student slice of the full path ----
void check_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg;
  cfg.input_dim = 64;
  cfg.hidden_dim = 512;
  cfg.n_classes = 10;
  cfg.hops = 2;
  auto model = Model<float>::init(cfg, 987654321);

  const int64_t n = 100;
  auto xt = random_features(n, 64, 1, Modality::text);
  auto xv = pad_features(random_features(n, 48, 2, Modality::visual), 64);
  HopStack ht, hv;
  ht.modality = Modality::text;
  hv.modality = Modality::visual;
  for (int64_t k = 0; k < cfg.hops; ++k) {
    ht.hops.push_back(random_features(n, 64, 10 + k, Modality::text));
    hv.hops.push_back(random_features(n, 64, 20 + k, Modality::visual));
  }
  std::vector<uint8_t> tm(n, 0), vm(n, 0);
  Rng flag_rng = Rng::keyed(3, Rng::kTest);
  for (int64_t i = 0; i < n; ++i) {
    const double u = flag_rng.uniform();
    if (u < 1.0 / 3) tm[i] = 1;
    else if (u < 2.0 / 3) vm[i] = 1;
  }

  auto cold = infer_cold_start(model, xt, xv, tm, vm);
  auto batch = apply_missing(build_sequence<float>(xt, xv, ht, hv, cfg.hops), tm, vm);
  Tape<float> tape(false, false);
  auto fwd = forward_batch(tape, model, batch, build_cold_start_mask(cfg.hops));

  int64_t mismatched = 0;
  for (int64_t i = 0; i < cold.numel(); ++i)
    mismatched += cold.cptr()[i] != fwd.bundle.student.cptr()[i];
  const double elapsed = seconds_since(t0);
  char note[160];
  std::snprintf(note, sizeof(note),
                "bitwise over %lld values, mismatched %lld, %.1fs (limit 10s)",
                static_cast<long long>(cold.numel()), static_cast<long long>(mismatched),
                elapsed);
  report(1, "cold-start equivalence", mismatched == 0 && elapsed < 10.0, note);
}

// ---- 2: gradient correctness on the reference configuration ----
void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Config cfg;  // defaults match: 8 nodes, K=2, d=32, 3 experts, 2 layers, 200 coords
  auto rep = run_gradcheck(cfg);
  const double elapsed = seconds_since(t0);
  char note[160];
  std::snprintf(note, sizeof(note), "max rel err %.2e (tolerance 1e-4), %.1fs (limit 60s)",
                rep.max_rel_err, elapsed);
  report(2, "gradient correctness", rep.pass && elapsed < 60.0, note);
}

// ---- 3: sparse propagation matches a dense 64-bit oracle ----
void check_propagation() {
  double worst = 0;
  for (uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng = Rng::keyed(trial, Rng::kTest);
    const int64_t n = 50, d = 7, depth = 3;
    std::vector<Edge> edges;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j)
        if (rng.uniform() < 0.1) edges.emplace_back(i, j);
    auto norm_adj = normalize_sym(build_csr(n, edges));
    auto x = random_features(n, d, 1000 + trial, Modality::text);
    auto stack = propagate(norm_adj, x, depth);

    std::vector<double> dense(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t e = norm_adj.row_ptr[i]; e < norm_adj.row_ptr[i + 1]; ++e)
        dense[i * n + norm_adj.col_idx[e]] = norm_adj.values[e];
    std::vector<double> cur(x.data.begin(), x.data.end());
    for (int64_t k = 0; k < depth; ++k) {
      std::vector<double> next(static_cast<size_t>(n * d), 0.0);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
          if (dense[i * n + j] == 0.0) continue;
          for (int64_t c = 0; c < d; ++c) next[i * d + c] += dense[i * n + j] * cur[j * d + c];
        }
      for (size_t idx = 0; idx < next.size(); ++idx)
        worst = std::max(worst,
                         std::fabs(next[idx] - static_cast<double>(stack.hops[k].data[idx])));
      cur = next;
    }
  }
  char note[120];
  std::snprintf(note, sizeof(note), "20 graphs, max entry error %.2e (limit 1e-5)", worst);
  report(3, "propagation oracle", worst < 1e-5, note);
}

// ---- 4: balance loss bounds over random routing records ----
void check_balance_bounds() {
  Rng rng = Rng::keyed(4242, Rng::kTest);
  double worst_low = 1e18, worst_high = -1e18, uniform_dev = 0;
  bool ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t m = 2 + static_cast<int64_t>(rng.below(7));
    const int64_t k = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(m)));
    const int64_t n = 64;
    std::vector<double> popularity(m);
    double ps = 0;
    for (auto& w : popularity) {
      w = std::exp(2.5 * rng.normal());
      ps += w;
    }
    for (auto& w : popularity) w /= ps;

    RoutingRecord<double> rec;
    std::vector<double> flat(static_cast<size_t>(n * m), 0.0);
    for (int64_t i = 0; i < n; ++i) {
      std::vector<double> w = popularity;
      for (int64_t pick = 0; pick < k; ++pick) {
        double total = 0;
        for (double v : w) total += v;
        double u = rng.uniform() * total, acc = 0;
        int64_t chosen = m - 1;
        for (int64_t e = 0; e < m; ++e) {
          if (w[e] <= 0) continue;
          acc += w[e];
          if (u < acc) {
            chosen = e;
            break;
          }
        }
        flat[i * m + chosen] = 1.0 / static_cast<double>(k);
        w[chosen] = 0;
      }
    }
    rec.gate_probs.push_back(Tensor<double>::from({n, m}, flat));
    rec.selected.emplace_back();
    topk_route(rec, k);
    Tape<double> tape(false);
    const double loss = load_balance_loss(tape, rec, k).item();
    worst_low = std::min(worst_low, loss - 1.0 / static_cast<double>(m));
    worst_high = std::max(worst_high, loss);
    ok = ok && loss >= 1.0 / static_cast<double>(m) - 1e-6 && loss <= 1.0 + 1e-6;
  }
  // perfectly uniform gates must land exactly on 1/M
  for (int64_t m : {int64_t(2), int64_t(4), int64_t(6), int64_t(8)}) {
    for (int64_t k = 1; k <= m; ++k) {
      const int64_t n = 32;
      RoutingRecord<double> rec;
      rec.gate_probs.push_back(Tensor<double>::from(
          {n, m}, std::vector<double>(static_cast<size_t>(n * m), 1.0 / m)));
      rec.selected.emplace_back();
      topk_route(rec, k);
      Tape<double> tape(false);
      uniform_dev = std::max(uniform_dev,
                             std::fabs(load_balance_loss(tape, rec, k).item() - 1.0 / m));
    }
  }
  ok = ok && uniform_dev <= 1e-6;
  char note[180];
  std::snprintf(note, sizeof(note),
                "1000 records: min margin %.1e, max %.4f (<=1+1e-6); uniform dev %.1e",
                worst_low, worst_high, uniform_dev);
  report(4, "balance loss bounds", ok, note);
}

// ---- 5: stop-gradient contract over every teacher-head coordinate ----
void check_stop_gradient() {
  ModelConfig cfg;
  cfg.input_dim = 12;
  cfg.hidden_dim = 32;
  cfg.n_classes = 4;
  cfg.hops = 2;
  cfg.n_experts = 3;
  cfg.top_k = 2;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  auto model = Model<float>::init(cfg, 55);

  const int64_t n = 8;
  auto xt = random_features(n, 12, 61, Modality::text);
  auto xv = random_features(n, 12, 62, Modality::visual);
  HopStack ht, hv;
  ht.modality = Modality::text;
  hv.modality = Modality::visual;
  for (int64_t k = 0; k < cfg.hops; ++k) {
    ht.hops.push_back(random_features(n, 12, 70 + k, Modality::text));
    hv.hops.push_back(random_features(n, 12, 80 + k, Modality::visual));
  }
  auto batch = build_sequence<float>(xt, xv, ht, hv, cfg.hops);
  const auto mask = build_cold_start_mask(cfg.hops);

  Tape<float> tape(false, false);
  auto base = forward_batch(tape, model, batch, mask);
  const auto target = base.bundle.teacher;  // the frozen stopgrad value
  const double base_st = tape.kl_div(target, base.bundle.student).item();

  double worst = 0;
  int64_t coords = 0;
  for (Tensor<float>* param : {&model.teacher_head.w1, &model.teacher_head.b1,
                               &model.teacher_head.w2, &model.teacher_head.b2}) {
    for (int64_t i = 0; i < param->numel(); ++i) {
      for (float delta : {1e-3f, -1e-3f}) {
        param->ptr()[i] += delta;
        Tape<float> t(false, false);
        auto fwd = forward_batch(t, model, batch, mask);
        const double st = t.kl_div(target, fwd.bundle.student).item();
        param->ptr()[i] -= delta;
        worst = std::max(worst, std::fabs(st - base_st));
      }
      ++coords;
    }
  }
  char note[140];
  std::snprintf(note, sizeof(note), "%lld teacher-head coordinates, max |dL_ST| %.2e (limit 1e-10)",
                static_cast<long long>(coords), worst);
  report(5, "stop-gradient contract", worst < 1e-10, note);
}

// shared state between the overfit criterion and the structure-signal check
struct OverfitOutcome {
  Model<float> model;
  TrainData data;
  bool trained = false;
};

// teacher accuracy over the full training set, evaluation mode, full path
double teacher_train_accuracy(const Model<float>& model, const TrainData& data,
                              const std::vector<int64_t>& train_ids,
                              const TokenBatch<float>& batch) {
  Tape<float> tape(false, false);
  auto fwd = forward_batch(tape, model, batch, build_cold_start_mask(model.cfg.hops));
  const auto& probs = fwd.bundle.teacher;
  const int64_t c = probs.cols();
  int64_t hits = 0;
  for (size_t i = 0; i < train_ids.size(); ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < c; ++j)
      if (probs.cptr()[i * c + j] > probs.cptr()[i * c + best]) best = j;
    hits += best == data.labels[train_ids[i]];
  }
  return static_cast<double>(hits) / static_cast<double>(train_ids.size());
}

// ---- 6: overfit on the default synthetic dataset at the paper recipe ----
OverfitOutcome check_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;  // defaults: n=200, 4 classes
  auto dataset = generate(spec);

  TrainConfig cfg;  // defaults: d=512, K=2, 2 layers, 2 heads, 6 experts,
                    // lr 2e-3, wd 1e-2, lambda 1, gamma 0.1, dropout .2/.5
  cfg.epochs = 300;
  cfg.patience = 300;
  cfg.seed = 1;

  OverfitOutcome out;
  out.data = prepare_train_data(dataset, cfg.seed, cfg.model.hops);
  std::vector<int64_t> train_ids = out.data.split.labeled_train;
  train_ids.insert(train_ids.end(), out.data.split.unlabeled_train.begin(),
                   out.data.split.unlabeled_train.end());
  auto probe_batch = build_sequence<float>(out.data.text, out.data.visual, out.data.hops_text,
                                           out.data.hops_visual, cfg.model.hops, &train_ids);

  double best_acc = 0;
  int64_t reached_at = -1;
  Model<float> final_model;
  auto observer = [&](const Model<float>& model, const EpochStats& stats) {
    const double acc = teacher_train_accuracy(model, out.data, train_ids, probe_batch);
    best_acc = std::max(best_acc, acc);
    if (acc >= 0.99) {
      reached_at = stats.epoch;
      final_model = model.clone();
      return false;  // target reached, stop
    }
    return true;
  };
  auto result = train(out.data, cfg, observer);
  if (reached_at < 0) final_model = result.model.clone();

  const double elapsed = seconds_since(t0);
  char note[180];
  std::snprintf(note, sizeof(note),
                "teacher train acc %.4f%s, %.0fs (limits: >=0.99 within 300 epochs, 300s)",
                best_acc,
                reached_at > 0 ? (" at epoch " + std::to_string(reached_at)).c_str() : "",
                elapsed);
  report(6, "overfit at paper recipe", reached_at > 0 && elapsed < 300.0, note);
  out.model = std::move(final_model);
  out.trained = true;
  return out;
}

// ---- 7: self-teaching beats a muted self-teaching loss across seeds ----
void check_directional_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  SynthSpec spec;
  spec.n = 600;
  spec.classes = 4;
  spec.text_dim = 32;
  spec.visual_dim = 32;
  spec.p_in = 0.3;   // strong structural signal
  spec.p_out = 0.02;
  spec.mean_sep = 4.5;  // noisier features than the defaults, still learnable
  spec.noise = 2.5;
  spec.seed = 777;
  auto dataset = generate(spec);

  TrainConfig base;
  base.model.hidden_dim = 128;
  base.model.hops = 2;
  base.model.n_experts = 6;
  base.model.top_k = 2;
  base.model.n_layers = 2;
  base.model.n_heads = 2;
  base.model.dropout_in = 0.1;   // full-rate dropout starves a 3-token
  base.model.dropout_hidden = 0.1;  // student at this width
  base.epochs = 120;
  base.patience = 40;
  base.log_every = 0;

  const std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  TrainConfig with_st = base;
  with_st.st_weight = 1.0;
  TrainConfig without_st = base;
  without_st.st_weight = 0.0;

  auto taught = run_multiseed(dataset, with_st, seeds);
  auto muted = run_multiseed(dataset, without_st, seeds);
  const auto root = temp_dir("multiseed");
  write_multiseed_json(root + "/self_teach.json", taught);
  write_multiseed_json(root + "/no_self_teach.json", muted);
  const double margin = taught.all.mean - muted.all.mean;
  const double elapsed = seconds_since(t0);
  char note[200];
  std::snprintf(note, sizeof(note),
                "5 seeds: student all-acc %.4f+-%.4f (lambda=1) vs %.4f+-%.4f (lambda=0), "
                "margin %+.4f, %.0fs",
                taught.all.mean, taught.all.stddev, muted.all.mean, muted.all.stddev, margin,
                elapsed);
  report(7, "self-teaching benefit", margin > 0.0, note);
}

// ---- 8: partition protocol fidelity ----
void check_protocol() {
  bool ok = true;
  std::string detail;
  for (int64_t n : {int64_t(100), int64_t(1000), int64_t(12345)}) {
    Rng rng = Rng::keyed(static_cast<uint64_t>(n), Rng::kTest);
    std::vector<int32_t> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) labels[i] = static_cast<int32_t>(i % 7);
    rng.shuffle(labels);
    std::vector<Edge> edges;
    for (int64_t e = 0; e < 3 * n; ++e) {
      int64_t a = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
      int64_t b = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
      if (a != b) edges.emplace_back(a, b);
    }
    auto part = partition(n, labels, edges, 9 + static_cast<uint64_t>(n));

    const auto& s = part.split;
    bool sizes = static_cast<int64_t>(s.unlabeled_train.size()) == (6 * n) / 10 &&
                 static_cast<int64_t>(s.validation.size()) == n / 10 &&
                 static_cast<int64_t>(s.test.size()) == n / 10 &&
                 static_cast<int64_t>(s.labeled_train.size()) ==
                     n - (6 * n) / 10 - 2 * (n / 10) &&
                 s.n_total() == n;
    bool isolated = true;
    for (int64_t id : s.validation) isolated = isolated && part.train_graph.degree(id) == 0;
    for (int64_t id : s.test) isolated = isolated && part.train_graph.degree(id) == 0;
    auto near_equal = [](const std::vector<SplitSpec::Miss>& miss) {
      int64_t c[3] = {0, 0, 0};
      for (auto m : miss) c[static_cast<int>(m)] += 1;
      return std::max({c[0], c[1], c[2]}) - std::min({c[0], c[1], c[2]}) <= 1;
    };
    const bool groups = near_equal(s.val_miss) && near_equal(s.test_miss);
    ok = ok && sizes && isolated && groups;
    if (!(sizes && isolated && groups)) detail += " n=" + std::to_string(n) + " violated;";
  }
  report(8, "protocol fidelity", ok,
         ok ? "sizes, isolation and miss groups hold for n in {100, 1000, 12345}" : detail);
}

// ---- 9: byte-identical deterministic reruns through the pipeline ----
void check_determinism() {
  const auto root = temp_dir("determinism");
  Config synth;
  synth.set("out", root + "/data");
  synth.set("n", "80");
  synth.set("classes", "3");
  synth.set("text_dim", "8");
  synth.set("visual_dim", "6");
  synth.set("seed", "5");
  run_synth(synth);
  Config pre;
  pre.set("data", root + "/data");
  pre.set("k", "2");
  pre.set("seed", "5");
  run_precompute(pre);

  auto train_once = [&](const std::string& out) {
    Config train;
    train.set("data", root + "/data");
    train.set("out", out);
    train.set("epochs", "8");
    train.set("dim", "16");
    train.set("layers", "1");
    train.set("experts", "2");
    train.set("k_hat", "1");
    train.set("seed", "5");
    train.set("deterministic", "true");
    train.set("log_every", "0");
    run_train(train);
  };
  train_once(root + "/m1");
  train_once(root + "/m2");
  auto slurp = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  const bool history_equal = slurp(root + "/m1/history.csv") == slurp(root + "/m2/history.csv");
  const bool ckpt_equal =
      slurp(root + "/m1/checkpoint.bin") == slurp(root + "/m2/checkpoint.bin");
  report(9, "deterministic reruns", history_equal && ckpt_equal,
         history_equal ? "history.csv and checkpoint.bin byte-identical" : "history differs");
}

// ---- 10: on-disk formats round-trip bitwise ----
void check_round_trips() {
  const auto root = temp_dir("roundtrip");
  auto slurp = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  Rng rng = Rng::keyed(99, Rng::kTest);
  bool ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t n = static_cast<int64_t>(rng.below(60));
    const int64_t d = trial == 0 ? 0 : 1 + static_cast<int64_t>(rng.below(40));
    auto m = FeatureMatrix::zeros(n, d, Modality::text);
    for (auto& v : m.data) v = static_cast<float>(rng.normal());
    const std::string path = root + "/m" + std::to_string(trial) + ".bin";
    write_matrix(path, m);
    auto back = read_matrix(path);
    const std::string path2 = path + ".2";
    write_matrix(path2, back);
    ok = ok && back.data == m.data && back.n == m.n && back.d == m.d &&
         slurp(path) == slurp(path2);
  }
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig cfg;
    cfg.input_dim = 3 + static_cast<int64_t>(rng.below(10));
    cfg.hidden_dim = 2 * (2 + static_cast<int64_t>(rng.below(7)));
    cfg.n_classes = 2 + static_cast<int64_t>(rng.below(6));
    cfg.hops = 1 + static_cast<int64_t>(rng.below(3));
    cfg.n_experts = 1 + static_cast<int64_t>(rng.below(5));
    cfg.top_k = 1;
    cfg.n_layers = static_cast<int64_t>(rng.below(3));
    cfg.n_heads = 2;
    cfg.moe = trial % 2 == 0;
    auto model = Model<float>::init(cfg, 300 + trial);
    const std::string path = root + "/c" + std::to_string(trial) + ".bin";
    save_checkpoint(path, model);
    auto back = load_checkpoint(path);
    const std::string path2 = path + ".2";
    save_checkpoint(path2, back);
    ok = ok && slurp(path) == slurp(path2) && back.cfg == model.cfg;
  }
  report(10, "format round trips", ok, "50 matrix shapes + 6 checkpoints, byte-identical");
}

// datagen contract: structure carries signal a feature-only baseline misses.
// Plain 2-layer MLP on concatenated features vs the trained teacher, both
// judged on the unlabeled training nodes.
void check_structure_signal(const OverfitOutcome& overfit) {
  if (!overfit.trained) {
    report(11, "structure signal (datagen)", false, "skipped: overfit run unavailable");
    return;
  }
  const TrainData& data = overfit.data;
  const int64_t d_in = data.text.d;
  const int64_t d_cat = 2 * d_in;
  const int64_t n_classes = overfit.model.cfg.n_classes;

  auto concat_rows = [&](const std::vector<int64_t>& ids) {
    auto out = Tensor<float>::zeros({static_cast<int64_t>(ids.size()), d_cat});
    for (size_t r = 0; r < ids.size(); ++r) {
      for (int64_t j = 0; j < d_in; ++j) {
        out.ptr()[r * d_cat + j] = data.text.row(ids[r])[j];
        out.ptr()[r * d_cat + d_in + j] = data.visual.row(ids[r])[j];
      }
    }
    return out;
  };

  // the MLP reference trains on the labeled nodes only, like the model's
  // cross-entropy term
  Rng init_rng = Rng::keyed(31337, Rng::kInit);
  const int64_t hidden = 128;
  auto w1 = Tensor<float>::zeros({d_cat, hidden}, true);
  auto b1 = Tensor<float>::zeros({hidden}, true);
  auto w2 = Tensor<float>::zeros({hidden, n_classes}, true);
  auto b2 = Tensor<float>::zeros({n_classes}, true);
  for (auto* t : {&w1, &w2})
    for (int64_t i = 0; i < t->numel(); ++i)
      t->ptr()[i] = static_cast<float>(init_rng.truncated_normal(0.02));

  auto x_train = concat_rows(data.split.labeled_train);
  std::vector<int32_t> y_train;
  for (int64_t id : data.split.labeled_train) y_train.push_back(data.labels[id]);

  std::vector<Parameter<float>> params = {{w1, "w1", true}, {b1, "b1", true},
                                          {w2, "w2", true}, {b2, "b2", true}};
  auto ptrs = parameter_pointers(params);
  AdamW<float> opt;  // lr 2e-3, wd 1e-2, like the main model
  for (int step = 0; step < 300; ++step) {
    Tape<float> tape(true, false);
    auto h = tape.gelu(tape.add_bias(tape.matmul(x_train, w1), b1));
    auto probs = tape.softmax_rows(tape.add_bias(tape.matmul(h, w2), b2));
    auto loss = tape.cross_entropy(probs, y_train);
    for (auto& p : params) p.tensor.zero_grad();
    tape.backward(loss);
    opt.step(ptrs);
  }

  auto mlp_accuracy = [&](const std::vector<int64_t>& ids) {
    auto x = concat_rows(ids);
    Tape<float> tape(false, false);
    auto h = tape.gelu(tape.add_bias(tape.matmul(x, w1), b1));
    auto probs = tape.softmax_rows(tape.add_bias(tape.matmul(h, w2), b2));
    int64_t hits = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      int64_t best = 0;
      for (int64_t j = 1; j < n_classes; ++j)
        if (probs.cptr()[i * n_classes + j] > probs.cptr()[i * n_classes + best]) best = j;
      hits += best == data.labels[ids[i]];
    }
    return static_cast<double>(hits) / static_cast<double>(ids.size());
  };

  const auto& unlabeled = data.split.unlabeled_train;
  const double mlp_acc = mlp_accuracy(unlabeled);
  auto batch = build_sequence<float>(data.text, data.visual, data.hops_text, data.hops_visual,
                                     overfit.model.cfg.hops, &unlabeled);
  const double teacher_acc = teacher_train_accuracy(overfit.model, data, unlabeled, batch);

  char note[160];
  std::snprintf(note, sizeof(note), "teacher %.4f vs feature-only MLP %.4f on unlabeled train",
                teacher_acc, mlp_acc);
  report(11, "structure signal (datagen)", teacher_acc > mlp_acc, note);
}

}  // namespace

int main() {
  std::printf("acceptance suite (%d worker threads)\n", num_threads());
  check_equivalence();
  check_gradients();
  check_propagation();
  check_balance_bounds();
  check_stop_gradient();
  auto overfit = check_overfit();
  check_directional_benefit();
  check_protocol();
  check_determinism();
  check_round_trips();
  check_structure_signal(overfit);
  std::printf("%s: %d of 11 checks failed\n", g_failures == 0 ? "SUCCESS" : "FAILURE",
              g_failures);
  return g_failures;
}
