#pragma once

#include <cstdint>
#include <vector>

#include "ntsf/graph.hpp"

namespace ntsf {

enum class Modality : uint8_t { text = 0, visual = 1 };

// Dense n x d matrix of node features, 32-bit row-major.
struct FeatureMatrix {
  int64_t n = 0;
  int64_t d = 0;
  Modality modality = Modality::text;
  std::vector<float> data;

  static FeatureMatrix zeros(int64_t n, int64_t d, Modality m);
  float* row(int64_t i) { return data.data() + i * d; }
  const float* row(int64_t i) const { return data.data() + i * d; }
};

// Multi-hop propagated features for one modality: hops[k-1] holds the
// k-step propagation of the input under the normalized adjacency.
struct HopStack {
  Modality modality = Modality::text;
  std::vector<FeatureMatrix> hops;

  int64_t depth() const { return static_cast<int64_t>(hops.size()); }
};

// Zero-pads columns d..target_dim; existing columns are unchanged.
FeatureMatrix pad_features(const FeatureMatrix& x, int64_t target_dim);

// hops[k] = norm_adj * hops[k-1] with hops[0] = x, computed as repeated
// sparse-times-dense products; powers of the operator are never formed.
// Accumulation runs in 64-bit and each hop is stored in 32-bit.
HopStack propagate(const CsrGraph& norm_adj, const FeatureMatrix& x, int64_t depth);

}  // namespace ntsf
