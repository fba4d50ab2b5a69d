#pragma once

#include <cstdint>
#include <vector>

#include "ntsf/common.hpp"

namespace ntsf {

// Boolean attention mask, row-major len x len. allow[i*len+j] != 0 means
// token i may attend to token j.
struct AttentionMask {
  int64_t len = 0;
  std::vector<uint8_t> allow;

  bool allows(int64_t i, int64_t j) const { return allow[i * len + j] != 0; }
  int64_t forbidden_count() const {
    int64_t c = 0;
    for (uint8_t a : allow) c += (a == 0);
    return c;
  }
};

// Mask for a sequence of 2K+4 tokens: the three self tokens (two modality
// slots plus the student classification token) may only attend to each
// other; every other token attends everywhere.
AttentionMask build_cold_start_mask(int64_t hops);

// All-allowed mask (used for the self-only inference sequence).
AttentionMask full_mask(int64_t len);

}  // namespace ntsf
