#include "ntsf/mask.hpp"

namespace ntsf {

AttentionMask build_cold_start_mask(int64_t hops) {
  check_input(hops >= 1, "mask: hop count must be >= 1");
  const int64_t len = 2 * hops + 4;
  AttentionMask m;
  m.len = len;
  m.allow.assign(static_cast<size_t>(len * len), 1);
  // self tokens occupy the first three positions and must stay blind to the
  // neighbor tokens behind them
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 3; j < len; ++j) m.allow[i * len + j] = 0;
  return m;
}

AttentionMask full_mask(int64_t len) {
  check_input(len >= 1, "mask: length must be >= 1");
  AttentionMask m;
  m.len = len;
  m.allow.assign(static_cast<size_t>(len * len), 1);
  return m;
}

}  // namespace ntsf
