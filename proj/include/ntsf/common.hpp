#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace ntsf {

// Error taxonomy maps onto the CLI exit-code contract:
// InputError/ContractError -> exit 1, NumericError -> exit 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_input(bool ok, const std::string& msg) {
  if (!ok) throw InputError(msg);
}

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

// Global worker count for row-parallel kernels. 0 = auto (hardware).
void set_num_threads(int n);
int num_threads();

// Runs fn(begin, end) over [0, total) split into contiguous row ranges,
// one range per worker. Each output row is owned by exactly one worker,
// so results are bitwise independent of the thread count.
void parallel_rows(int64_t total, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace ntsf
