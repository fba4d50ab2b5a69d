#pragma once

#include "ntsf/dataset.hpp"
#include "ntsf/rng.hpp"

namespace ntsf {

// Stochastic block model over balanced classes with Gaussian class-mean
// features per modality. Structure strength (p_in vs p_out) and feature
// strength (mean_sep vs noise) are tunable independently, and the two
// modalities draw independent class means so they carry complementary
// signal.
struct SynthSpec {
  int64_t n = 200;
  int64_t classes = 4;
  int64_t text_dim = 64;
  int64_t visual_dim = 32;
  double p_in = 0.3;    // intra-class edge probability
  double p_out = 0.02;  // inter-class edge probability
  double mean_sep = 3.0;  // expected distance between class means
  double noise = 2.0;     // per-coordinate feature noise
  uint64_t seed = 1;

  void validate() const;
};

Dataset generate(const SynthSpec& spec);

}  // namespace ntsf
