#include "ntsf/moe.hpp"

namespace ntsf {

bool is_routed_position(int64_t pos, int64_t seq_len, int64_t full_seq_len) {
  if (pos == kStudentSlot) return false;
  // the teacher slot only exists when the batch carries the full sequence
  if (seq_len == full_seq_len && pos == seq_len - 1) return false;
  return true;
}

template <typename T>
Tensor<T> apply_mlp(Tape<T>& tape, const Tensor<T>& x, const Mlp2<T>& mlp) {
  auto h = tape.gelu(tape.add_bias(tape.matmul(x, mlp.w1), mlp.b1));
  return tape.add_bias(tape.matmul(h, mlp.w2), mlp.b2);
}

template <typename T>
std::vector<Tensor<T>> effective_slots(Tape<T>& tape, const Model<T>& model,
                                       const TokenBatch<T>& batch) {
  check_input(batch.input_dim == model.cfg.input_dim, "slots: input width mismatch");
  check_input(batch.seq_len == kSelfTokens || batch.seq_len == model.cfg.seq_len(),
              "slots: batch must carry either the self-only or the full sequence");
  std::vector<Tensor<T>> slots = batch.slots;
  slots[kTextSlot] = tape.where_rows(batch.text_missing, model.miss_text, batch.slots[kTextSlot]);
  slots[kVisualSlot] =
      tape.where_rows(batch.visual_missing, model.miss_visual, batch.slots[kVisualSlot]);
  return slots;
}

namespace {

// constant one-hot block broadcast over the batch, full sequence width
template <typename T>
Tensor<T> position_onehot(int64_t n, int64_t pos, int64_t width) {
  Tensor<T> block = Tensor<T>::zeros({n, width});
  for (int64_t i = 0; i < n; ++i) block.ptr()[i * width + pos] = T(1);
  return block;
}

}  // namespace

template <typename T>
RoutingRecord<T> gate_scores(Tape<T>& tape, const Model<T>& model,
                             const std::vector<Tensor<T>>& slots) {
  const int64_t len = static_cast<int64_t>(slots.size());
  const int64_t full_len = model.cfg.seq_len();
  RoutingRecord<T> record;
  record.gate_probs.resize(static_cast<size_t>(len));
  record.selected.resize(static_cast<size_t>(len));
  for (int64_t p = 0; p < len; ++p) {
    if (!is_routed_position(p, len, full_len)) continue;
    const int64_t n = slots[p].rows();
    auto gate_in = tape.concat_cols(slots[p], position_onehot<T>(n, p, full_len));
    record.gate_probs[p] = tape.softmax_rows(tape.matmul(gate_in, model.gate_weight));
  }
  return record;
}

template <typename T>
RoutingRecord<T> gate_scores(Tape<T>& tape, const Model<T>& model, const TokenBatch<T>& batch) {
  return gate_scores(tape, model, effective_slots(tape, model, batch));
}

template <typename T>
void topk_route(RoutingRecord<T>& record, int64_t top_k) {
  for (size_t p = 0; p < record.gate_probs.size(); ++p) {
    const auto& probs = record.gate_probs[p];
    if (!probs.data) continue;
    const int64_t n = probs.rows(), m = probs.cols();
    check_input(top_k >= 1 && top_k <= m, "topk_route: top_k must lie in [1, experts]");
    auto& sel = record.selected[p];
    sel.assign(static_cast<size_t>(n * m), 0);
    for (int64_t i = 0; i < n; ++i) {
      const T* row = probs.cptr() + i * m;
      for (int64_t pick = 0; pick < top_k; ++pick) {
        int64_t best = -1;
        for (int64_t e = 0; e < m; ++e) {
          if (sel[i * m + e]) continue;
          if (best < 0 || row[e] > row[best]) best = e;  // ties keep the lower index
        }
        sel[i * m + best] = 1;
      }
    }
  }
}

template <typename T>
Tensor<T> project_tokens(Tape<T>& tape, const Model<T>& model,
                         const std::vector<Tensor<T>>& slots, const RoutingRecord<T>* record) {
  const int64_t len = static_cast<int64_t>(slots.size());
  const int64_t full_len = model.cfg.seq_len();
  const int64_t n = slots[kTextSlot].rows();
  std::vector<Tensor<T>> projected(static_cast<size_t>(len));
  for (int64_t p = 0; p < len; ++p) {
    if (p == kStudentSlot) {
      projected[p] = tape.broadcast_row(model.student_token, n);
      continue;
    }
    if (len == full_len && p == len - 1) {
      projected[p] = tape.broadcast_row(model.teacher_token, n);
      continue;
    }
    auto out = tape.layer_norm(apply_mlp(tape, slots[p], model.shared_expert),
                               model.shared_norm.gain, model.shared_norm.bias);
    if (record) {
      check_contract(record->routed(p) && !record->selected[p].empty(),
                     "project_tokens: routing record missing for position " + std::to_string(p));
      const auto& probs = record->gate_probs[p];
      const auto& sel = record->selected[p];
      const int64_t m = probs.cols();
      for (int64_t e = 0; e < m; ++e) {
        std::vector<int64_t> ids;
        for (int64_t i = 0; i < n; ++i)
          if (sel[i * m + e]) ids.push_back(i);
        if (ids.empty()) continue;
        auto x = tape.gather_rows(slots[p], ids);
        auto h = tape.layer_norm(apply_mlp(tape, x, model.experts[e]),
                                 model.expert_norms[e].gain, model.expert_norms[e].bias);
        auto weighted = tape.mul_rows(h, tape.gather_col(probs, e, ids));
        out = tape.add(out, tape.scatter_rows(weighted, ids, n));
      }
    }
    projected[p] = out;
  }
  return tape.stack_slots(projected);
}

template <typename T>
Tensor<T> load_balance_loss(Tape<T>& tape, const RoutingRecord<T>& record, int64_t top_k) {
  std::vector<Tensor<T>> gates;
  std::vector<std::vector<uint8_t>> selected;
  for (size_t p = 0; p < record.gate_probs.size(); ++p) {
    if (!record.gate_probs[p].data) continue;
    check_contract(!record.selected[p].empty(), "load_balance_loss: record has no routing");
    gates.push_back(record.gate_probs[p]);
    selected.push_back(record.selected[p]);
  }
  check_input(!gates.empty(), "load_balance_loss: empty record");
  return tape.moe_balance(gates, selected, top_k);
}

#define NTSF_INSTANTIATE(T)                                                                      \
  template Tensor<T> apply_mlp<T>(Tape<T>&, const Tensor<T>&, const Mlp2<T>&);                   \
  template std::vector<Tensor<T>> effective_slots<T>(Tape<T>&, const Model<T>&,                  \
                                                     const TokenBatch<T>&);                      \
  template RoutingRecord<T> gate_scores<T>(Tape<T>&, const Model<T>&,                            \
                                           const std::vector<Tensor<T>>&);                       \
  template RoutingRecord<T> gate_scores<T>(Tape<T>&, const Model<T>&, const TokenBatch<T>&);     \
  template void topk_route<T>(RoutingRecord<T>&, int64_t);                                       \
  template Tensor<T> project_tokens<T>(Tape<T>&, const Model<T>&, const std::vector<Tensor<T>>&, \
                                       const RoutingRecord<T>*);                                 \
  template Tensor<T> load_balance_loss<T>(Tape<T>&, const RoutingRecord<T>&, int64_t);

NTSF_INSTANTIATE(float)
NTSF_INSTANTIATE(double)
#undef NTSF_INSTANTIATE

}  // namespace ntsf
