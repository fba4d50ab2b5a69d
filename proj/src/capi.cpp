#include "ntsf.h"

#include <string>

#include "ntsf/pipeline.hpp"

struct ntsf_config {
  ntsf::Config impl;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
ntsf_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const ntsf::NumericError& e) {
    g_last_error = e.what();
    return NTSF_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NTSF_ERR_INPUT;
  }
}

}  // namespace

extern "C" {

ntsf_config* ntsf_config_create(void) { return new (std::nothrow) ntsf_config(); }

void ntsf_config_destroy(ntsf_config* cfg) { delete cfg; }

ntsf_status ntsf_config_set(ntsf_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) {
    g_last_error = "ntsf_config_set: null argument";
    return NTSF_ERR_INPUT;
  }
  cfg->impl.set(key, value);
  return NTSF_OK;
}

const char* ntsf_config_get(const ntsf_config* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  const std::string* v = cfg->impl.raw(key);
  return v ? v->c_str() : nullptr;
}

ntsf_status ntsf_run_synth(ntsf_config* cfg) {
  if (!cfg) return NTSF_ERR_INPUT;
  return guarded([&] {
    ntsf::run_synth(cfg->impl);
    return NTSF_OK;
  });
}

ntsf_status ntsf_run_precompute(ntsf_config* cfg) {
  if (!cfg) return NTSF_ERR_INPUT;
  return guarded([&] {
    ntsf::run_precompute(cfg->impl);
    return NTSF_OK;
  });
}

ntsf_status ntsf_run_train(ntsf_config* cfg) {
  if (!cfg) return NTSF_ERR_INPUT;
  return guarded([&] {
    ntsf::run_train(cfg->impl);
    return NTSF_OK;
  });
}

ntsf_status ntsf_run_eval(ntsf_config* cfg) {
  if (!cfg) return NTSF_ERR_INPUT;
  return guarded([&] {
    ntsf::run_eval(cfg->impl);
    return NTSF_OK;
  });
}

ntsf_status ntsf_run_gradcheck(ntsf_config* cfg, double* out_max_rel_err) {
  if (!cfg) return NTSF_ERR_INPUT;
  return guarded([&]() -> ntsf_status {
    auto report = ntsf::run_gradcheck(cfg->impl);
    if (out_max_rel_err) *out_max_rel_err = report.max_rel_err;
    if (!report.pass) {
      g_last_error = "gradcheck: max relative error " + std::to_string(report.max_rel_err) +
                     " exceeds tolerance " + std::to_string(report.tolerance) + " (worst " +
                     report.worst_param + ")";
      return NTSF_ERR_NUMERIC;
    }
    return NTSF_OK;
  });
}

const char* ntsf_last_error(void) { return g_last_error.c_str(); }

const char* ntsf_version(void) { return "1.0.0"; }

}  // extern "C"
