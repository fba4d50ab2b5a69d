#include "ntsf/common.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace ntsf {

namespace {
int g_threads = 0;
}

void set_num_threads(int n) { g_threads = n < 0 ? 0 : n; }

int num_threads() {
  if (g_threads > 0) return g_threads;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

void parallel_rows(int64_t total, const std::function<void(int64_t, int64_t)>& fn) {
  int workers = num_threads();
  if (workers <= 1 || total < 2 * workers) {
    fn(0, total);
    return;
  }
  if (workers > total) workers = static_cast<int>(total);
  const int64_t chunk = (total + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) {
    int64_t begin = t * chunk;
    int64_t end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  fn(0, std::min(total, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace ntsf
