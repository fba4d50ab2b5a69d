// Command-line front end. All work happens behind the C API; this file
// only maps flags onto config keys and status codes onto exit codes
// (0 success, 1 input error, 2 numeric failure).
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntsf.h"

namespace {

struct ConfigHandle {
  ntsf_config* ptr = ntsf_config_create();
  ~ConfigHandle() { ntsf_config_destroy(ptr); }
};

// Tracked option: the value lands in the config under `key` when the flag
// (or its config-file equivalent) was given.
class KeyedValues {
 public:
  explicit KeyedValues(ntsf_config* cfg) : cfg_(cfg) {}

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    values_.push_back(std::make_unique<std::string>());
    std::string* slot = values_.back().get();
    app->add_option(flag, *slot, help)
        ->configurable(true)
        ->each([this, key](const std::string& v) { ntsf_config_set(cfg_, key.c_str(), v.c_str()); });
  }

 private:
  ntsf_config* cfg_;
  std::vector<std::unique_ptr<std::string>> values_;
};

void add_runtime_options(CLI::App* app, KeyedValues& kv) {
  kv.add(app, "--seed", "seed", "master random seed");
  kv.add(app, "--deterministic", "deterministic", "single-threaded, fully replayable run");
  kv.add(app, "--threads", "threads", "worker threads (0 = auto)");
}

int run(ntsf_status status) {
  if (status != NTSF_OK) std::fprintf(stderr, "error: %s\n", ntsf_last_error());
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  ConfigHandle cfg;
  if (!cfg.ptr) {
    std::fprintf(stderr, "error: out of memory\n");
    return 1;
  }
  KeyedValues kv(cfg.ptr);

  CLI::App app{"Self-teaching graph transformer for multimodal cold-start node classification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI/TOML file");
  app.set_version_flag("--version", std::string(ntsf_version()));

  auto* synth = app.add_subcommand("synth", "generate a synthetic multimodal graph dataset");
  kv.add(synth, "--out", "out", "output dataset directory");
  kv.add(synth, "--n", "n", "number of nodes");
  kv.add(synth, "--classes", "classes", "number of classes");
  kv.add(synth, "--text-dim", "text_dim", "text feature width");
  kv.add(synth, "--visual-dim", "visual_dim", "visual feature width");
  kv.add(synth, "--p-in", "p_in", "intra-class edge probability");
  kv.add(synth, "--p-out", "p_out", "inter-class edge probability");
  kv.add(synth, "--mean-sep", "mean_sep", "expected class-mean distance");
  kv.add(synth, "--noise", "noise", "feature noise sigma");
  add_runtime_options(synth, kv);

  auto* pre = app.add_subcommand("precompute",
                                 "partition, isolate held-out nodes and propagate hop features");
  kv.add(pre, "--data", "data", "dataset directory");
  kv.add(pre, "--out", "out", "output directory (default: dataset directory)");
  kv.add(pre, "--k", "k", "propagation depth");
  kv.add(pre, "--splits", "splits", "splits.json path (reused when it exists)");
  kv.add(pre, "--stratify", "stratify", "stratify the partition by class");
  add_runtime_options(pre, kv);

  auto* train = app.add_subcommand("train", "train on precomputed hop features");
  kv.add(train, "--data", "data", "dataset directory");
  kv.add(train, "--hops", "hops", "precompute output directory (default: dataset directory)");
  kv.add(train, "--out", "out", "output directory for checkpoint and history");
  kv.add(train, "--epochs", "epochs", "training epochs");
  kv.add(train, "--batch-size", "batch_size", "nodes per mini-batch");
  kv.add(train, "--patience", "patience", "early-stopping patience in epochs");
  kv.add(train, "--lr", "lr", "learning rate");
  kv.add(train, "--weight-decay", "weight_decay", "decoupled weight decay");
  kv.add(train, "--lambda", "lambda", "self-teaching loss weight");
  kv.add(train, "--gamma-moe", "gamma_moe", "balance loss weight");
  kv.add(train, "--p-miss", "p_miss", "training modality-masking probability");
  kv.add(train, "--dim", "dim", "hidden dimension");
  kv.add(train, "--k", "k", "propagation depth (must match precompute)");
  kv.add(train, "--layers", "layers", "transformer layers");
  kv.add(train, "--heads", "heads", "attention heads");
  kv.add(train, "--experts", "experts", "routed experts");
  kv.add(train, "--k-hat", "k_hat", "active routed experts per token");
  kv.add(train, "--ffn-mult", "ffn_mult", "feed-forward width multiple");
  kv.add(train, "--dropout-in", "dropout_in", "input dropout rate");
  kv.add(train, "--dropout-hidden", "dropout_hidden", "attention/feed-forward dropout rate");
  kv.add(train, "--scale", "scale", "attention logit scaling: d or dh");
  kv.add(train, "--moe", "moe", "enable the mixture-of-experts projection");
  kv.add(train, "--st-labeled-only", "st_labeled_only", "restrict self-teaching to labeled rows");
  kv.add(train, "--st-detach-student", "st_detach_student",
         "train the student head on detached features");
  kv.add(train, "--log-every", "log_every", "epochs between progress lines (0 = silent)");
  add_runtime_options(train, kv);

  auto* eval = app.add_subcommand("eval", "cold-start evaluation of a checkpoint");
  kv.add(eval, "--data", "data", "dataset directory");
  kv.add(eval, "--checkpoint", "checkpoint", "checkpoint file");
  kv.add(eval, "--splits", "splits", "splits.json path");
  kv.add(eval, "--out", "out", "output directory for report.json");
  kv.add(eval, "--split-set", "split_set", "evaluate 'test' (default) or 'validation'");
  add_runtime_options(eval, kv);

  auto* grad = app.add_subcommand("gradcheck",
                                  "verify analytic gradients against central differences");
  kv.add(grad, "--nodes", "nodes", "batch size");
  kv.add(grad, "--dim", "dim", "hidden dimension");
  kv.add(grad, "--k", "k", "propagation depth");
  kv.add(grad, "--experts", "experts", "routed experts");
  kv.add(grad, "--k-hat", "k_hat", "active routed experts per token");
  kv.add(grad, "--layers", "layers", "transformer layers");
  kv.add(grad, "--heads", "heads", "attention heads");
  kv.add(grad, "--classes", "classes", "number of classes");
  kv.add(grad, "--coords", "coords", "sampled coordinates");
  kv.add(grad, "--step", "h", "central-difference step");
  kv.add(grad, "--tolerance", "tolerance", "max relative error accepted");
  kv.add(grad, "--lambda", "lambda", "self-teaching loss weight");
  kv.add(grad, "--gamma-moe", "gamma_moe", "balance loss weight");
  kv.add(grad, "--moe", "moe", "enable the mixture-of-experts projection");
  add_runtime_options(grad, kv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (synth->parsed()) return run(ntsf_run_synth(cfg.ptr));
  if (pre->parsed()) return run(ntsf_run_precompute(cfg.ptr));
  if (train->parsed()) return run(ntsf_run_train(cfg.ptr));
  if (eval->parsed()) return run(ntsf_run_eval(cfg.ptr));
  if (grad->parsed()) {
    double err = 0;
    return run(ntsf_run_gradcheck(cfg.ptr, &err));
  }
  return 1;
}
