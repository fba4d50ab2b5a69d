#include "ntsf/heads.hpp"

namespace ntsf {

template <typename T>
PredictionBundle<T> predict(Tape<T>& tape, const Model<T>& model, const Tensor<T>& hidden,
                            int64_t len, bool detach_student_input) {
  check_input(len >= 4, "predict: teacher readouts need the full sequence");
  PredictionBundle<T> out;
  auto student_state = tape.rows_at(hidden, len, kStudentSlot);
  if (detach_student_input) student_state = tape.detach(student_state);
  out.student = tape.softmax_rows(apply_mlp(tape, student_state, model.student_head));
  out.teacher_a =
      tape.softmax_rows(apply_mlp(tape, tape.rows_at(hidden, len, len - 1), model.teacher_head));
  out.teacher_b =
      tape.softmax_rows(apply_mlp(tape, tape.rows_at(hidden, len, len - 2), model.teacher_head));
  out.teacher = tape.scale(tape.add(out.teacher_a, out.teacher_b), T(0.5));
  return out;
}

template <typename T>
Tensor<T> self_teach_loss(Tape<T>& tape, const PredictionBundle<T>& bundle,
                          const std::vector<int64_t>* rows) {
  auto target = tape.detach(bundle.teacher);
  auto student = bundle.student;
  if (rows) {
    target = tape.gather_rows(target, *rows);
    student = tape.gather_rows(student, *rows);
  }
  return tape.kl_div(target, student);
}

template <typename T>
LossBreakdown<T> total_loss(Tape<T>& tape, const PredictionBundle<T>& bundle,
                            const std::vector<int32_t>& labels, const Tensor<T>& moe_loss,
                            double st_weight, double moe_weight,
                            const std::vector<int64_t>* st_rows,
                            const Tensor<T>* frozen_st_target) {
  LossBreakdown<T> out;
  out.ce = tape.cross_entropy(bundle.teacher, labels);
  if (frozen_st_target) {
    auto target = tape.detach(*frozen_st_target);
    auto student = bundle.student;
    if (st_rows) {
      target = tape.gather_rows(target, *st_rows);
      student = tape.gather_rows(student, *st_rows);
    }
    out.self_teach = tape.kl_div(target, student);
  } else {
    out.self_teach = self_teach_loss(tape, bundle, st_rows);
  }
  out.moe = moe_loss;
  out.total = tape.add(out.ce, tape.scale(out.self_teach, T(st_weight)));
  if (moe_loss.data) out.total = tape.add(out.total, tape.scale(out.moe, T(moe_weight)));
  return out;
}

template <typename T>
ForwardResult<T> forward_batch(Tape<T>& tape, const Model<T>& model, const TokenBatch<T>& batch,
                               const AttentionMask& mask, bool detach_student_input) {
  check_input(batch.seq_len == model.cfg.seq_len(),
              "forward_batch: batch does not carry the full sequence");
  ForwardResult<T> out;
  auto slots = effective_slots(tape, model, batch);
  Tensor<T> projected;
  if (model.cfg.moe) {
    out.routing = gate_scores(tape, model, slots);
    topk_route(out.routing, model.cfg.top_k);
    projected = project_tokens(tape, model, slots, &out.routing);
    out.moe_loss = load_balance_loss(tape, out.routing, model.cfg.top_k);
  } else {
    projected = project_tokens<T>(tape, model, slots, nullptr);
    out.moe_loss = Tensor<T>::zeros({1});
  }
  out.hidden = encode(tape, model, projected, batch.n, batch.seq_len, mask);
  out.bundle = predict(tape, model, out.hidden, batch.seq_len, detach_student_input);
  return out;
}

template <typename T>
Tensor<T> infer_cold_start(const Model<T>& model, const FeatureMatrix& x_text,
                           const FeatureMatrix& x_visual, const std::vector<uint8_t>& text_missing,
                           const std::vector<uint8_t>& visual_missing,
                           const std::vector<int64_t>* ids) {
  auto batch = build_self_sequence<T>(x_text, x_visual, ids);
  batch = apply_missing(batch, text_missing, visual_missing);  // rejects both-missing nodes
  Tape<T> tape(false, false);
  auto slots = effective_slots(tape, model, batch);
  Tensor<T> projected;
  if (model.cfg.moe) {
    auto routing = gate_scores(tape, model, slots);
    topk_route(routing, model.cfg.top_k);
    projected = project_tokens(tape, model, slots, &routing);
  } else {
    projected = project_tokens<T>(tape, model, slots, nullptr);
  }
  auto hidden = encode(tape, model, projected, batch.n, kSelfTokens, full_mask(kSelfTokens));
  auto student_state = tape.rows_at(hidden, kSelfTokens, kStudentSlot);
  return tape.softmax_rows(apply_mlp(tape, student_state, model.student_head));
}

#define NTSF_INSTANTIATE(T)                                                                       \
  template PredictionBundle<T> predict<T>(Tape<T>&, const Model<T>&, const Tensor<T>&, int64_t,   \
                                          bool);                                                  \
  template Tensor<T> self_teach_loss<T>(Tape<T>&, const PredictionBundle<T>&,                     \
                                        const std::vector<int64_t>*);                             \
  template LossBreakdown<T> total_loss<T>(Tape<T>&, const PredictionBundle<T>&,                   \
                                          const std::vector<int32_t>&, const Tensor<T>&, double,  \
                                          double, const std::vector<int64_t>*, const Tensor<T>*); \
  template ForwardResult<T> forward_batch<T>(Tape<T>&, const Model<T>&, const TokenBatch<T>&,     \
                                             const AttentionMask&, bool);                         \
  template Tensor<T> infer_cold_start<T>(const Model<T>&, const FeatureMatrix&,                   \
                                         const FeatureMatrix&, const std::vector<uint8_t>&,       \
                                         const std::vector<uint8_t>&, const std::vector<int64_t>*);

NTSF_INSTANTIATE(float)
NTSF_INSTANTIATE(double)
#undef NTSF_INSTANTIATE

}  // namespace ntsf
