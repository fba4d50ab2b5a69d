#pragma once

#include <vector>

#include "ntsf/features.hpp"
#include "ntsf/graph.hpp"

namespace ntsf {

// A full multimodal graph dataset as stored on disk: undirected edges,
// one feature matrix per modality, one label per node (-1 = unlabeled).
struct Dataset {
  std::vector<Edge> edges;
  FeatureMatrix text, visual;
  std::vector<int32_t> labels;

  int64_t n() const { return text.n; }
  int64_t n_classes() const {
    int32_t top = -1;
    for (int32_t y : labels) top = y > top ? y : top;
    return top + 1;
  }
};

}  // namespace ntsf
