#pragma once

#include <vector>

#include "ntsf/model.hpp"
#include "ntsf/sequence.hpp"
#include "ntsf/tape.hpp"

namespace ntsf {

// Gate probabilities and top-k selections per routed token position.
// Classification-token positions are excluded from routing entirely and
// keep empty entries.
template <typename T>
struct RoutingRecord {
  std::vector<Tensor<T>> gate_probs;           // [n x experts] per position
  std::vector<std::vector<uint8_t>> selected;  // n*experts flags per position

  bool routed(int64_t pos) const {
    return pos < static_cast<int64_t>(gate_probs.size()) && gate_probs[pos].data != nullptr;
  }
};

// True for every position that carries an input-space token (everything
// except the two classification slots).
bool is_routed_position(int64_t pos, int64_t seq_len, int64_t full_seq_len);

// Input-space slots after substituting the learned placeholder rows for
// flagged nodes. Slot content comes from the batch; gradients flow into the
// placeholders only.
template <typename T>
std::vector<Tensor<T>> effective_slots(Tape<T>& tape, const Model<T>& model,
                                       const TokenBatch<T>& batch);

// Gate scores per routed position: softmax([token || onehot(position)] * W).
// The one-hot has the full training sequence width regardless of how many
// slots the batch carries, so inference scores match training bit for bit.
template <typename T>
RoutingRecord<T> gate_scores(Tape<T>& tape, const Model<T>& model,
                             const std::vector<Tensor<T>>& slots);
template <typename T>
RoutingRecord<T> gate_scores(Tape<T>& tape, const Model<T>& model, const TokenBatch<T>& batch);

// Marks the top_k largest scores per row; ties resolve toward the lower
// expert index.
template <typename T>
void topk_route(RoutingRecord<T>& record, int64_t top_k);

// Projects every slot into model space: gated sum of the selected routed
// experts plus the always-on shared expert; gate scores are used as they
// come out of the softmax, with no renormalization after top-k. The
// classification slots receive their learned vectors directly. Passing a
// null record selects the shared-projection ablation.
template <typename T>
Tensor<T> project_tokens(Tape<T>& tape, const Model<T>& model,
                         const std::vector<Tensor<T>>& slots, const RoutingRecord<T>* record);

// sum_m P_m * f_m with P averaged over all routed (node, position) pairs
// and f normalized by top_k so the fractions sum to one.
template <typename T>
Tensor<T> load_balance_loss(Tape<T>& tape, const RoutingRecord<T>& record, int64_t top_k);

// linear-GELU-linear helper shared by experts, feed-forward and heads
template <typename T>
Tensor<T> apply_mlp(Tape<T>& tape, const Tensor<T>& x, const Mlp2<T>& mlp);

}  // namespace ntsf
