#include "ntsf/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "ntsf/dataio.hpp"
#include "ntsf/datagen.hpp"
#include "ntsf/gradcheck.hpp"

namespace ntsf {

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
  const std::string* v = raw(key);
  const std::string out = v ? *v : fallback;
  effective_[key] = out;
  return out;
}

int64_t Config::get_i64(const std::string& key, int64_t fallback) const {
  const std::string* v = raw(key);
  if (!v) {
    effective_[key] = std::to_string(fallback);
    return fallback;
  }
  try {
    size_t used = 0;
    const int64_t out = std::stoll(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    effective_[key] = *v;
    return out;
  } catch (const std::exception&) {
    throw InputError("config: '" + key + "' expects an integer, got '" + *v + "'");
  }
}

double Config::get_f64(const std::string& key, double fallback) const {
  const std::string* v = raw(key);
  if (!v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", fallback);
    effective_[key] = buf;
    return fallback;
  }
  try {
    size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    effective_[key] = *v;
    return out;
  } catch (const std::exception&) {
    throw InputError("config: '" + key + "' expects a number, got '" + *v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = raw(key);
  if (!v) {
    effective_[key] = fallback ? "true" : "false";
    return fallback;
  }
  std::string s = *v;
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  if (s == "1" || s == "true" || s == "on" || s == "yes") {
    effective_[key] = "true";
    return true;
  }
  if (s == "0" || s == "false" || s == "off" || s == "no") {
    effective_[key] = "false";
    return false;
  }
  throw InputError("config: '" + key + "' expects a boolean, got '" + *v + "'");
}

std::string Config::require_str(const std::string& key) const {
  const std::string* v = raw(key);
  if (!v || v->empty()) throw InputError("config: missing required key '" + key + "'");
  effective_[key] = *v;
  return *v;
}

std::string Config::effective_json() const {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : effective_) j[k] = v;
  for (const auto& [k, v] : values_)
    if (!effective_.count(k)) j[k] = v;
  return j.dump(2);
}

void Config::write_echo(const std::string& dir) const {
  std::ofstream os(dir + "/config.json");
  if (!os) throw InputError("cannot write config echo in " + dir);
  os << effective_json() << '\n';
}

namespace {

void apply_runtime(const Config& cfg) {
  const bool deterministic = cfg.get_bool("deterministic", false);
  const int64_t threads = cfg.get_i64("threads", 0);
  set_num_threads(deterministic ? 1 : static_cast<int>(threads));
}

ModelConfig model_config_from(const Config& cfg) {
  ModelConfig mc;
  mc.hidden_dim = cfg.get_i64("dim", mc.hidden_dim);
  mc.hops = cfg.get_i64("k", mc.hops);
  mc.n_experts = cfg.get_i64("experts", mc.n_experts);
  mc.top_k = cfg.get_i64("k_hat", mc.top_k);
  mc.n_layers = cfg.get_i64("layers", mc.n_layers);
  mc.n_heads = cfg.get_i64("heads", mc.n_heads);
  mc.ffn_mult = cfg.get_i64("ffn_mult", mc.ffn_mult);
  mc.dropout_in = cfg.get_f64("dropout_in", mc.dropout_in);
  mc.dropout_hidden = cfg.get_f64("dropout_hidden", mc.dropout_hidden);
  const std::string scale = cfg.get_str("scale", "d");
  if (scale == "d")
    mc.scale_by_head_dim = false;
  else if (scale == "dh")
    mc.scale_by_head_dim = true;
  else
    throw InputError("config: 'scale' must be 'd' or 'dh', got '" + scale + "'");
  mc.moe = cfg.get_bool("moe", true);
  return mc;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig tc;
  tc.model = model_config_from(cfg);
  tc.epochs = cfg.get_i64("epochs", tc.epochs);
  tc.batch_size = cfg.get_i64("batch_size", tc.batch_size);
  tc.patience = cfg.get_i64("patience", tc.patience);
  tc.lr = cfg.get_f64("lr", tc.lr);
  tc.weight_decay = cfg.get_f64("weight_decay", tc.weight_decay);
  tc.st_weight = cfg.get_f64("lambda", tc.st_weight);
  tc.moe_weight = cfg.get_f64("gamma_moe", tc.moe_weight);
  tc.p_miss = cfg.get_f64("p_miss", tc.p_miss);
  tc.st_labeled_only = cfg.get_bool("st_labeled_only", tc.st_labeled_only);
  tc.st_detach_student = cfg.get_bool("st_detach_student", tc.st_detach_student);
  tc.stratify = cfg.get_bool("stratify", tc.stratify);
  tc.seed = static_cast<uint64_t>(cfg.get_i64("seed", 1));
  tc.deterministic = cfg.get_bool("deterministic", false);
  tc.threads = static_cast<int>(cfg.get_i64("threads", 0));
  tc.log_every = cfg.get_i64("log_every", 10);
  return tc;
}

std::string hop_file(const std::string& dir, const char* modality, int64_t hop) {
  return dir + "/hops_" + modality + "_k" + std::to_string(hop) + ".bin";
}

}  // namespace

void run_synth(const Config& cfg) {
  apply_runtime(cfg);
  const std::string out = cfg.require_str("out");
  SynthSpec spec;
  spec.n = cfg.get_i64("n", spec.n);
  spec.classes = cfg.get_i64("classes", spec.classes);
  spec.text_dim = cfg.get_i64("text_dim", spec.text_dim);
  spec.visual_dim = cfg.get_i64("visual_dim", spec.visual_dim);
  spec.p_in = cfg.get_f64("p_in", spec.p_in);
  spec.p_out = cfg.get_f64("p_out", spec.p_out);
  spec.mean_sep = cfg.get_f64("mean_sep", spec.mean_sep);
  spec.noise = cfg.get_f64("noise", spec.noise);
  spec.seed = static_cast<uint64_t>(cfg.get_i64("seed", 1));
  auto data = generate(spec);
  save_dataset(out, data);
  cfg.write_echo(out);
  std::printf("synth: wrote %lld nodes, %zu edges, %lld classes to %s\n",
              static_cast<long long>(data.n()), data.edges.size(),
              static_cast<long long>(data.n_classes()), out.c_str());
}

void run_precompute(const Config& cfg) {
  apply_runtime(cfg);
  const std::string data_dir = cfg.require_str("data");
  const std::string out = cfg.get_str("out", data_dir);
  const int64_t hops = cfg.get_i64("k", 2);
  const uint64_t seed = static_cast<uint64_t>(cfg.get_i64("seed", 1));
  const bool stratify = cfg.get_bool("stratify", true);
  check_input(hops >= 1, "precompute: 'k' must be >= 1");

  auto data = load_dataset(data_dir);
  std::filesystem::create_directories(out);

  SplitSpec split;
  CsrGraph train_graph;
  const std::string splits_path = cfg.get_str("splits", out + "/splits.json");
  if (std::filesystem::exists(splits_path)) {
    split = load_splits(splits_path);
    check_input(split.n_total() == data.n(),
                "precompute: splits in " + splits_path + " cover " +
                    std::to_string(split.n_total()) + " nodes but the dataset has " +
                    std::to_string(data.n()));
    std::vector<uint8_t> is_train(static_cast<size_t>(data.n()), 0);
    for (int64_t id : split.labeled_train) is_train[id] = 1;
    for (int64_t id : split.unlabeled_train) is_train[id] = 1;
    std::vector<Edge> kept;
    for (const auto& e : data.edges)
      if (is_train[e.first] && is_train[e.second]) kept.push_back(e);
    train_graph = build_csr(data.n(), kept);
  } else {
    auto part = partition(data.n(), data.labels, data.edges, seed, stratify);
    split = std::move(part.split);
    train_graph = std::move(part.train_graph);
    save_splits(splits_path, split, seed);
  }

  const int64_t d_in = std::max(data.text.d, data.visual.d);
  auto text = pad_features(data.text, d_in);
  auto visual = pad_features(data.visual, d_in);
  auto norm_adj = normalize_sym(train_graph);
  auto hops_text = propagate(norm_adj, text, hops);
  auto hops_visual = propagate(norm_adj, visual, hops);
  for (int64_t k = 0; k < hops; ++k) {
    write_matrix(hop_file(out, "text", k + 1), hops_text.hops[k]);
    write_matrix(hop_file(out, "visual", k + 1), hops_visual.hops[k]);
  }

  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["k"] = hops;
  manifest["input_dim"] = d_in;
  manifest["seed"] = seed;
  manifest["splits"] = splits_path;
  {
    std::ofstream os(out + "/hops.json");
    if (!os) throw InputError("cannot write hops manifest in " + out);
    os << manifest.dump(2) << '\n';
  }
  cfg.write_echo(out);
  std::printf("precompute: wrote %lld hop files per modality to %s\n",
              static_cast<long long>(hops), out.c_str());
}

namespace {

struct PrecomputedInputs {
  TrainData data;
  int64_t hops = 0;
};

PrecomputedInputs load_precomputed(const Config& cfg, const std::string& data_dir,
                                   const std::string& hops_dir) {
  auto dataset = load_dataset(data_dir);

  std::ifstream mf(hops_dir + "/hops.json");
  if (!mf)
    throw InputError("missing hops manifest " + hops_dir +
                     "/hops.json (run the precompute step first)");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("invalid hops manifest: ") + e.what());
  }
  const int64_t hops = manifest.at("k").get<int64_t>();
  const int64_t d_in = manifest.at("input_dim").get<int64_t>();
  const int64_t k_flag = cfg.get_i64("k", hops);
  check_input(k_flag == hops, "config: 'k'=" + std::to_string(k_flag) +
                                  " does not match the precomputed hop depth " +
                                  std::to_string(hops));

  PrecomputedInputs out;
  out.hops = hops;
  out.data.labels = dataset.labels;
  out.data.text = pad_features(dataset.text, d_in);
  out.data.visual = pad_features(dataset.visual, d_in);
  out.data.hops_text.modality = Modality::text;
  out.data.hops_visual.modality = Modality::visual;
  for (int64_t k = 1; k <= hops; ++k) {
    auto ht = read_matrix(hop_file(hops_dir, "text", k));
    ht.modality = Modality::text;
    auto hv = read_matrix(hop_file(hops_dir, "visual", k));
    hv.modality = Modality::visual;
    check_input(ht.n == dataset.n() && hv.n == dataset.n() && ht.d == d_in && hv.d == d_in,
                "hop file shape mismatch under " + hops_dir);
    out.data.hops_text.hops.push_back(std::move(ht));
    out.data.hops_visual.hops.push_back(std::move(hv));
  }
  const std::string splits_path =
      manifest.count("splits") ? manifest.at("splits").get<std::string>()
                               : hops_dir + "/splits.json";
  out.data.split = load_splits(splits_path);
  check_input(out.data.split.n_total() == dataset.n(),
              "splits do not cover the dataset under " + hops_dir);
  return out;
}

}  // namespace

void run_train(const Config& cfg) {
  apply_runtime(cfg);
  const std::string data_dir = cfg.require_str("data");
  const std::string hops_dir = cfg.get_str("hops", data_dir);
  const std::string out = cfg.require_str("out");

  auto inputs = load_precomputed(cfg, data_dir, hops_dir);
  TrainConfig tc = train_config_from(cfg);
  tc.model.hops = inputs.hops;

  auto result = train(inputs.data, tc);
  std::filesystem::create_directories(out);
  save_checkpoint(out + "/checkpoint.bin", result.model);
  write_history_csv(out + "/history.csv", result.history);
  cfg.write_echo(out);
  std::printf("train: best validation accuracy %.4f at epoch %lld; wrote %s\n",
              result.best_val_acc, static_cast<long long>(result.best_epoch), out.c_str());
}

void run_eval(const Config& cfg) {
  apply_runtime(cfg);
  const std::string data_dir = cfg.require_str("data");
  const std::string checkpoint = cfg.require_str("checkpoint");
  const std::string out = cfg.require_str("out");
  const std::string set_name = cfg.get_str("split_set", "test");
  check_input(set_name == "test" || set_name == "validation",
              "config: 'split_set' must be 'test' or 'validation'");

  auto dataset = load_dataset(data_dir);
  auto split = load_splits(cfg.require_str("splits"));
  check_input(split.n_total() == dataset.n(), "eval: splits do not cover the dataset");
  auto model = load_checkpoint(checkpoint);
  check_input(model.cfg.input_dim == std::max(dataset.text.d, dataset.visual.d),
              "eval: checkpoint input width does not match the dataset");

  // evaluation reads features and splits only; edges are never touched
  auto text = pad_features(dataset.text, model.cfg.input_dim);
  auto visual = pad_features(dataset.visual, model.cfg.input_dim);
  auto report =
      evaluate_split(model, text, visual, dataset.labels, split, set_name == "test");

  std::filesystem::create_directories(out);
  write_report_json(out + "/report.json", report);
  cfg.write_echo(out);
  std::printf("eval(%s): text_miss %.4f  visual_miss %.4f  no_miss %.4f  all %.4f\n",
              set_name.c_str(), report.text_miss, report.visual_miss, report.no_miss, report.all);
}

GradCheckReport run_gradcheck(const Config& cfg) {
  apply_runtime(cfg);
  const int64_t nodes = cfg.get_i64("nodes", 8);
  const uint64_t seed = static_cast<uint64_t>(cfg.get_i64("seed", 1));

  SynthSpec spec;
  spec.n = std::max<int64_t>(nodes * 4, 20);
  spec.classes = cfg.get_i64("classes", 4);
  spec.text_dim = cfg.get_i64("text_dim", 12);
  spec.visual_dim = cfg.get_i64("visual_dim", 9);
  spec.seed = seed;
  auto data = generate(spec);

  ModelConfig mc;
  mc.input_dim = std::max(spec.text_dim, spec.visual_dim);
  mc.hidden_dim = cfg.get_i64("dim", 32);
  mc.n_classes = spec.classes;
  mc.hops = cfg.get_i64("k", 2);
  mc.n_experts = cfg.get_i64("experts", 3);
  mc.top_k = cfg.get_i64("k_hat", 2);
  mc.n_layers = cfg.get_i64("layers", 2);
  mc.n_heads = cfg.get_i64("heads", 2);
  mc.ffn_mult = cfg.get_i64("ffn_mult", 2);
  mc.moe = cfg.get_bool("moe", true);
  mc.validate();

  // 64-bit model over a small propagated batch
  auto model = Model<double>::init(mc, seed);
  const int64_t d_in = mc.input_dim;
  auto text = pad_features(data.text, d_in);
  auto visual = pad_features(data.visual, d_in);
  auto norm_adj = normalize_sym(build_csr(data.n(), data.edges));
  auto hops_text = propagate(norm_adj, text, mc.hops);
  auto hops_visual = propagate(norm_adj, visual, mc.hops);

  std::vector<int64_t> ids(static_cast<size_t>(nodes));
  for (int64_t i = 0; i < nodes; ++i) ids[i] = i;
  auto batch = build_sequence<double>(text, visual, hops_text, hops_visual, mc.hops, &ids);
  Rng mask_rng = Rng::keyed(seed, Rng::kMasking);
  batch = apply_missing(batch, 1.0 / 3.0, mask_rng);
  std::vector<int32_t> labels(static_cast<size_t>(nodes));
  for (int64_t i = 0; i < nodes; ++i)
    labels[i] = i % 3 == 0 ? -1 : data.labels[i];  // mix labeled and unlabeled rows
  if (*std::max_element(labels.begin(), labels.end()) < 0) labels[0] = data.labels[0];

  const auto mask = build_cold_start_mask(mc.hops);
  const double st_weight = cfg.get_f64("lambda", 1.0);
  const double moe_weight = cfg.get_f64("gamma_moe", 0.1);

  // the checked function is the optimizer's objective: dropout off and the
  // self-teaching target frozen at the gradient evaluation point
  Tensor<double> st_target;
  {
    Tape<double> tape(false, false);
    st_target = forward_batch(tape, model, batch, mask).bundle.teacher;
  }
  auto loss_value = [&](bool grads) {
    Tape<double> tape(grads, false);
    auto fwd = forward_batch(tape, model, batch, mask);
    auto loss =
        total_loss(tape, fwd.bundle, labels, fwd.moe_loss, st_weight, moe_weight, nullptr,
                   &st_target);
    if (grads) tape.backward(loss.total);
    return static_cast<double>(loss.total.item());
  };
  model.zero_grads();
  loss_value(true);

  auto params = model.named_parameters();
  auto ptrs = parameter_pointers(params);
  auto res = finite_diff_check<double>([&]() { return loss_value(false); }, ptrs,
                                       cfg.get_f64("h", 1e-4), cfg.get_i64("coords", 200), seed);

  GradCheckReport report;
  report.max_rel_err = res.max_rel_err;
  report.tolerance = cfg.get_f64("tolerance", 1e-4);
  report.pass = std::isfinite(res.max_rel_err) && res.max_rel_err < report.tolerance;
  report.worst_param = res.worst_param;
  report.worst_index = res.worst_index;
  report.checked = res.checked;
  std::printf("gradcheck: max relative error %.3e over %lld coordinates (tolerance %.1e)%s\n",
              report.max_rel_err, static_cast<long long>(report.checked), report.tolerance,
              report.pass ? "" : "  FAILED");
  if (!report.pass && !report.worst_param.empty())
    std::printf("gradcheck: worst coordinate %s[%lld]\n", report.worst_param.c_str(),
                static_cast<long long>(report.worst_index));
  return report;
}

}  // namespace ntsf
