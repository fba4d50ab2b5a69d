#include "ntsf/optimizer.hpp"

#include <cmath>

namespace ntsf {

template <typename T>
void AdamW<T>::step(std::vector<Parameter<T>*>& params) {
  if (moments_.empty()) {
    moments_.resize(params.size());
    for (size_t p = 0; p < params.size(); ++p) {
      const size_t n = params[p]->tensor.data->size();
      moments_[p].m.assign(n, T(0));
      moments_[p].v.assign(n, T(0));
    }
  }
  check_contract(moments_.size() == params.size(), "adamw: parameter set changed between steps");
  ++t_;
  const T lr = T(opts_.lr);
  const T wd = T(opts_.weight_decay);
  const T b1 = T(opts_.beta1);
  const T b2 = T(opts_.beta2);
  const T eps = T(opts_.eps);
  const T bc1 = T(1) - static_cast<T>(std::pow(opts_.beta1, static_cast<double>(t_)));
  const T bc2 = T(1) - static_cast<T>(std::pow(opts_.beta2, static_cast<double>(t_)));
  for (size_t p = 0; p < params.size(); ++p) {
    Parameter<T>& par = *params[p];
    if (!par.trainable || !par.tensor.tracked()) continue;
    T* theta = par.tensor.ptr();
    const T* g = par.tensor.cgptr();
    T* m = moments_[p].m.data();
    T* v = moments_[p].v.data();
    const int64_t n = par.tensor.numel();
    for (int64_t i = 0; i < n; ++i) {
      theta[i] -= lr * wd * theta[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace ntsf
