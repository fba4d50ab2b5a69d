#include "ntsf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ntsf {

float CsrGraph::at(int64_t i, int64_t j) const {
  for (int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
    if (col_idx[k] == j) return values[k];
  return 0.0f;
}

CsrGraph build_csr(int64_t n, const std::vector<Edge>& edges) {
  check_input(n >= 0, "build_csr: negative node count");
  std::vector<std::vector<int64_t>> adj(static_cast<size_t>(n));
  for (const auto& [src, dst] : edges) {
    check_input(src >= 0 && src < n && dst >= 0 && dst < n,
                "build_csr: edge (" + std::to_string(src) + "," + std::to_string(dst) +
                    ") references a node id outside [0," + std::to_string(n) + ")");
    if (src == dst) continue;  // re-added later as part of A+I
    adj[src].push_back(dst);
    adj[dst].push_back(src);
  }
  CsrGraph g;
  g.n = n;
  g.row_ptr.assign(static_cast<size_t>(n + 1), 0);
  for (int64_t i = 0; i < n; ++i) {
    auto& nb = adj[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    g.row_ptr[i + 1] = g.row_ptr[i] + static_cast<int64_t>(nb.size());
  }
  g.col_idx.reserve(static_cast<size_t>(g.row_ptr[n]));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j : adj[i]) g.col_idx.push_back(j);
  g.values.assign(g.col_idx.size(), 1.0f);
  return g;
}

CsrGraph normalize_sym(const CsrGraph& a) {
  const int64_t n = a.n;
  std::vector<double> inv_sqrt_deg(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(a.degree(i) + 1));

  CsrGraph out;
  out.n = n;
  out.row_ptr.assign(static_cast<size_t>(n + 1), 0);
  for (int64_t i = 0; i < n; ++i) out.row_ptr[i + 1] = out.row_ptr[i] + a.degree(i) + 1;
  out.col_idx.resize(static_cast<size_t>(out.row_ptr[n]));
  out.values.resize(out.col_idx.size());
  for (int64_t i = 0; i < n; ++i) {
    int64_t w = out.row_ptr[i];
    bool diag_written = false;
    for (int64_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
      const int64_t j = a.col_idx[k];
      if (!diag_written && j > i) {
        out.col_idx[w] = i;
        out.values[w] = static_cast<float>(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
        diag_written = true;
        ++w;
      }
      out.col_idx[w] = j;
      out.values[w] = static_cast<float>(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
      ++w;
    }
    if (!diag_written) {
      out.col_idx[w] = i;
      out.values[w] = static_cast<float>(inv_sqrt_deg[i] * inv_sqrt_deg[i]);
      ++w;
    }
  }
  return out;
}

}  // namespace ntsf
