#pragma once

#include <vector>

#include "ntsf/tensor.hpp"

namespace ntsf {

// AdamW with decoupled weight decay: the decay term lr*wd*theta is applied
// separately from the bias-corrected Adam update.
struct AdamWOptions {
  double lr = 2e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWOptions opts = {}) : opts_(opts) {}

  const AdamWOptions& options() const { return opts_; }
  AdamWOptions& options() { return opts_; }
  int64_t step_count() const { return t_; }

  // One update over the parameter set; moments are keyed by position, so the
  // same vector must be passed on every call.
  void step(std::vector<Parameter<T>*>& params);

 private:
  struct Moments {
    std::vector<T> m, v;
  };
  AdamWOptions opts_;
  std::vector<Moments> moments_;
  int64_t t_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace ntsf
