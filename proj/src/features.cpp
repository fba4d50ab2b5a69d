#include "ntsf/features.hpp"

#include <cstring>
#include <string>

namespace ntsf {

FeatureMatrix FeatureMatrix::zeros(int64_t n, int64_t d, Modality m) {
  FeatureMatrix x;
  x.n = n;
  x.d = d;
  x.modality = m;
  x.data.assign(static_cast<size_t>(n * d), 0.0f);
  return x;
}

FeatureMatrix pad_features(const FeatureMatrix& x, int64_t target_dim) {
  check_input(x.d <= target_dim, "pad_features: width " + std::to_string(x.d) +
                                     " exceeds target " + std::to_string(target_dim));
  if (x.d == target_dim) return x;
  FeatureMatrix out = FeatureMatrix::zeros(x.n, target_dim, x.modality);
  for (int64_t i = 0; i < x.n; ++i)
    std::memcpy(out.row(i), x.row(i), sizeof(float) * static_cast<size_t>(x.d));
  return out;
}

HopStack propagate(const CsrGraph& norm_adj, const FeatureMatrix& x, int64_t depth) {
  check_input(norm_adj.n == x.n, "propagate: graph has " + std::to_string(norm_adj.n) +
                                     " nodes but features have " + std::to_string(x.n));
  check_input(depth >= 1, "propagate: depth must be >= 1");
  HopStack stack;
  stack.modality = x.modality;
  stack.hops.reserve(static_cast<size_t>(depth));
  const FeatureMatrix* prev = &x;
  for (int64_t k = 0; k < depth; ++k) {
    FeatureMatrix next = FeatureMatrix::zeros(x.n, x.d, x.modality);
    const int64_t d = x.d;
    parallel_rows(x.n, [&](int64_t i0, int64_t i1) {
      std::vector<double> acc(static_cast<size_t>(d));
      for (int64_t i = i0; i < i1; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t e = norm_adj.row_ptr[i]; e < norm_adj.row_ptr[i + 1]; ++e) {
          const double w = static_cast<double>(norm_adj.values[e]);
          const float* src = prev->row(norm_adj.col_idx[e]);
          for (int64_t j = 0; j < d; ++j) acc[j] += w * static_cast<double>(src[j]);
        }
        float* dst = next.row(i);
        for (int64_t j = 0; j < d; ++j) dst[j] = static_cast<float>(acc[j]);
      }
    });
    stack.hops.push_back(std::move(next));
    prev = &stack.hops.back();
  }
  return stack;
}

}  // namespace ntsf
