#include "ntsf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ntsf {

template <typename T>
GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                  std::vector<Parameter<T>*>& params, double h,
                                  int64_t max_coords, uint64_t seed, double denom_floor) {
  check_input(h > 0, "finite_diff_check: step must be positive");
  int64_t total = 0;
  for (auto* p : params)
    if (p->trainable) total += p->tensor.numel();
  check_input(total > 0, "finite_diff_check: no trainable coordinates");

  // flat coordinate ids over all trainable parameters
  std::vector<int64_t> coords;
  if (total <= max_coords) {
    coords.resize(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    // exactly max_coords distinct coordinates
    Rng rng = Rng::keyed(seed, Rng::kGradCheck);
    std::set<int64_t> picked;
    while (static_cast<int64_t>(picked.size()) < max_coords)
      picked.insert(static_cast<int64_t>(rng.below(static_cast<uint64_t>(total))));
    coords.assign(picked.begin(), picked.end());
  }

  GradCheckResult res;
  size_t ci = 0;
  int64_t base = 0;
  for (auto* p : params) {
    if (!p->trainable) continue;
    const int64_t n = p->tensor.numel();
    while (ci < coords.size() && coords[ci] < base + n) {
      const int64_t idx = coords[ci] - base;
      T* theta = p->tensor.ptr();
      const T saved = theta[idx];
      auto central = [&](double step) {
        theta[idx] = saved + static_cast<T>(step);
        const double f_plus = loss_fn();
        theta[idx] = saved - static_cast<T>(step);
        const double f_minus = loss_fn();
        theta[idx] = saved;
        return (f_plus - f_minus) / (2.0 * step);
      };
      // Richardson-extrapolated central difference: cancels the h^2
      // truncation term, which third derivatives of the deep stack
      // otherwise push above the tolerance at the default step.
      const double numeric = (4.0 * central(h / 2) - central(h)) / 3.0;
      const double analytic = static_cast<double>(p->tensor.cgptr()[idx]);
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), denom_floor});
      const double rel = std::fabs(numeric - analytic) / denom;
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = p->name;
        res.worst_index = idx;
        res.worst_analytic = analytic;
        res.worst_numeric = numeric;
      }
      ++ci;
    }
    base += n;
  }
  return res;
}

template GradCheckResult finite_diff_check<float>(const std::function<double()>&,
                                                  std::vector<Parameter<float>*>&, double, int64_t,
                                                  uint64_t, double);
template GradCheckResult finite_diff_check<double>(const std::function<double()>&,
                                                   std::vector<Parameter<double>*>&, double,
                                                   int64_t, uint64_t, double);

}  // namespace ntsf
