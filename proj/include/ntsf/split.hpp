#pragma once

#include <cstdint>
#include <vector>

#include "ntsf/graph.hpp"
#include "ntsf/rng.hpp"

namespace ntsf {

// Node partition for the cold-start protocol: 20/60/10/10 of the graph
// (leftover from rounding goes to labeled_train), with validation and test
// nodes split into three near-equal missing-modality groups.
struct SplitSpec {
  enum class Miss : uint8_t { none = 0, text = 1, visual = 2 };

  std::vector<int64_t> labeled_train, unlabeled_train, validation, test;
  std::vector<Miss> val_miss, test_miss;  // parallel to validation / test

  int64_t n_total() const {
    return static_cast<int64_t>(labeled_train.size() + unlabeled_train.size() +
                                validation.size() + test.size());
  }
};

struct PartitionResult {
  SplitSpec split;
  // adjacency over the full id space restricted to edges whose endpoints
  // are both training nodes; validation/test nodes are isolated in it
  CsrGraph train_graph;
};

// Stratified-by-class random split (classes with fewer than 5 nodes fall
// back to unstratified placement, with a warning on stderr). The same seed
// always produces the same partition regardless of any other settings.
PartitionResult partition(int64_t n, const std::vector<int32_t>& labels,
                          const std::vector<Edge>& edges, uint64_t seed, bool stratify = true);

}  // namespace ntsf
