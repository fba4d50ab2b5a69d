#pragma once

#include <map>
#include <string>

#include "ntsf/common.hpp"

namespace ntsf {

// Flat string key/value configuration shared by the CLI and the C API.
// Reads record the effective value (explicit or default), and the echo
// written next to every output captures exactly what a run used.
class Config {
 public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string* raw(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_i64(const std::string& key, int64_t fallback) const;
  double get_f64(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // required string (no default): missing -> input error naming the key
  std::string require_str(const std::string& key) const;

  std::string effective_json() const;
  void write_echo(const std::string& dir) const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> effective_;
};

struct GradCheckReport {
  double max_rel_err = 0;
  double tolerance = 0;
  bool pass = false;
  std::string worst_param;
  int64_t worst_index = -1;
  int64_t checked = 0;
};

// Pipeline entry points behind the CLI subcommands. Each throws InputError
// or NumericError on failure; the C API maps those to status codes.
void run_synth(const Config& cfg);
void run_precompute(const Config& cfg);
void run_train(const Config& cfg);
void run_eval(const Config& cfg);
GradCheckReport run_gradcheck(const Config& cfg);

}  // namespace ntsf
