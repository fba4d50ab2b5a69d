#pragma once

#include <optional>
#include <vector>

#include "ntsf/features.hpp"
#include "ntsf/mask.hpp"
#include "ntsf/rng.hpp"
#include "ntsf/tensor.hpp"

namespace ntsf {

// Per-node token sequences in input space. Slot order (0-based):
//   0: own text features        (replaced by the learned text placeholder
//                                when flagged missing)
//   1: own visual features      (likewise for the visual placeholder)
//   2: student classification   (zero here; filled in model space)
//   3+2k, 4+2k: k+1-hop text / visual neighbor features, k = 0..K-1
//   2K+3: teacher classification (zero here; filled in model space)
// The self-only inference sequence keeps just slots 0..2.
//
// Missing modalities are recorded as flags; the learned placeholder rows
// are substituted on the tape at projection time so their gradients flow.
template <typename T>
struct TokenBatch {
  int64_t n = 0;
  int64_t seq_len = 0;
  int64_t input_dim = 0;
  std::vector<Tensor<T>> slots;  // seq_len tensors of shape [n, input_dim]
  std::vector<uint8_t> text_missing, visual_missing;
  std::vector<int64_t> node_ids;  // rows' original node ids
};

inline constexpr int64_t kTextSlot = 0;
inline constexpr int64_t kVisualSlot = 1;
inline constexpr int64_t kStudentSlot = 2;
inline constexpr int64_t kSelfTokens = 3;

// Assembles sequences for the given node ids (all nodes when ids is null).
// Features and hop stacks must already share the padded input width.
template <typename T>
TokenBatch<T> build_sequence(const FeatureMatrix& x_text, const FeatureMatrix& x_visual,
                             const HopStack& hops_text, const HopStack& hops_visual,
                             int64_t hops, const std::vector<int64_t>* ids = nullptr);

// Self-only 3-token batch for cold-start inference.
template <typename T>
TokenBatch<T> build_self_sequence(const FeatureMatrix& x_text, const FeatureMatrix& x_visual,
                                  const std::vector<int64_t>* ids = nullptr);

// Training-time masking: per node one draw from {text: p, visual: p,
// none: 1-2p}, so the two modalities are never masked together.
template <typename T>
TokenBatch<T> apply_missing(const TokenBatch<T>& batch, double p_miss, Rng& rng);

// Fixed flags (evaluation protocol); a node with both modalities flagged is
// rejected.
template <typename T>
TokenBatch<T> apply_missing(const TokenBatch<T>& batch, const std::vector<uint8_t>& text_missing,
                            const std::vector<uint8_t>& visual_missing);

extern template struct TokenBatch<float>;
extern template struct TokenBatch<double>;

}  // namespace ntsf
