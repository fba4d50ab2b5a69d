#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ntsf/common.hpp"

namespace ntsf {

using Edge = std::pair<int64_t, int64_t>;

// Canonical CSR: column indices strictly increasing within each row.
struct CsrGraph {
  int64_t n = 0;
  std::vector<int64_t> row_ptr;  // n+1 entries
  std::vector<int64_t> col_idx;
  std::vector<float> values;

  int64_t nnz() const { return static_cast<int64_t>(col_idx.size()); }
  int64_t degree(int64_t i) const { return row_ptr[i + 1] - row_ptr[i]; }
  // value at (i, j), 0 if absent
  float at(int64_t i, int64_t j) const;
};

// Undirected, deduplicated, self-loop-free binary adjacency. Every input
// edge is inserted in both directions; self loops are dropped here and
// reintroduced once by normalize_sym.
CsrGraph build_csr(int64_t n, const std::vector<Edge>& edges);

// D^-1/2 (A+I) D^-1/2 over the self-loop-augmented adjacency. Entry (i,j)
// is 1/sqrt(deg_i * deg_j) with deg counting the added self loop, so every
// node has degree >= 1 and the operator is well defined on isolated nodes.
CsrGraph normalize_sym(const CsrGraph& a);

}  // namespace ntsf
