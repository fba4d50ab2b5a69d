#pragma once

#include <functional>
#include <vector>

#include "ntsf/rng.hpp"
#include "ntsf/tensor.hpp"

namespace ntsf {

struct GradCheckResult {
  double max_rel_err = 0.0;
  // coordinate behind the worst error, for diagnostics
  std::string worst_param;
  int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t checked = 0;
};

// Central-difference verification of analytic gradients, Richardson
// extrapolated over steps h and h/2. loss_fn must be a deterministic
// function of the parameter values; params carry the analytic gradient from
// a prior backward pass. Up to max_coords coordinates are sampled across
// all parameters. Relative error uses a small denominator floor so
// near-zero gradients are judged on an absolute scale.
template <typename T>
GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                  std::vector<Parameter<T>*>& params, double h = 1e-4,
                                  int64_t max_coords = 200, uint64_t seed = 0,
                                  double denom_floor = 1e-3);

extern template GradCheckResult finite_diff_check<float>(const std::function<double()>&,
                                                         std::vector<Parameter<float>*>&, double,
                                                         int64_t, uint64_t, double);
extern template GradCheckResult finite_diff_check<double>(const std::function<double()>&,
                                                          std::vector<Parameter<double>*>&, double,
                                                          int64_t, uint64_t, double);

}  // namespace ntsf
