#pragma once

#include <vector>

#include "ntsf/model.hpp"
#include "ntsf/tape.hpp"

namespace ntsf {

// Masked transformer encoder over projected tokens [n*len, d]:
// input dropout, learnable position encoding, then post-norm blocks
// (attention -> add -> norm, feed-forward -> add -> norm). When len is
// shorter than the full sequence the position encoding prefix is used, so
// the self-only path sees exactly the same per-token arithmetic.
template <typename T>
Tensor<T> encode(Tape<T>& tape, const Model<T>& model, const Tensor<T>& projected, int64_t n,
                 int64_t len, const AttentionMask& mask,
                 std::vector<AttentionProbe<T>>* probes = nullptr);

}  // namespace ntsf
