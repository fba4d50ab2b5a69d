#pragma once

#include <vector>

#include "ntsf/encoder.hpp"
#include "ntsf/moe.hpp"

namespace ntsf {

// Probability outputs of one forward pass. teacher is the average of the
// two softmaxed teacher readouts (probabilities are averaged, not logits).
template <typename T>
struct PredictionBundle {
  Tensor<T> student;    // [n x C], from the student classification token
  Tensor<T> teacher_a;  // from the last token (teacher classification)
  Tensor<T> teacher_b;  // from the second-to-last token
  Tensor<T> teacher;    // (teacher_a + teacher_b) / 2
};

// Student readout at the student slot; teacher readouts at the last and
// second-to-last positions of the full sequence. detach_student_input cuts
// the gradient between the encoder and the student head (the separate-MLP
// distillation ablation).
template <typename T>
PredictionBundle<T> predict(Tape<T>& tape, const Model<T>& model, const Tensor<T>& hidden,
                            int64_t len, bool detach_student_input = false);

// KL(stopgrad(teacher) || student), averaged over rows (or the given row
// subset). Gradient reaches the student path only.
template <typename T>
Tensor<T> self_teach_loss(Tape<T>& tape, const PredictionBundle<T>& bundle,
                          const std::vector<int64_t>* rows = nullptr);

template <typename T>
struct LossBreakdown {
  Tensor<T> total, ce, self_teach, moe;
};

// cross-entropy on the averaged teacher probabilities over labeled rows
// + st_weight * self-teaching loss + moe_weight * balance loss.
//
// frozen_st_target, when given, replaces the detached live teacher as the
// self-teaching target. That is the function the optimizer actually
// descends under stopgrad, and the one central differences must be taken
// of: the true loss is not differentiable-consistent in the teacher
// parameters because perturbing them moves the detached target's value.
template <typename T>
LossBreakdown<T> total_loss(Tape<T>& tape, const PredictionBundle<T>& bundle,
                            const std::vector<int32_t>& labels, const Tensor<T>& moe_loss,
                            double st_weight, double moe_weight,
                            const std::vector<int64_t>* st_rows = nullptr,
                            const Tensor<T>* frozen_st_target = nullptr);

template <typename T>
struct ForwardResult {
  PredictionBundle<T> bundle;
  Tensor<T> moe_loss;  // scalar; untracked zero when the MoE is disabled
  RoutingRecord<T> routing;
  Tensor<T> hidden;  // [n*len x d]
};

// Full training-path forward: placeholder substitution, input projection,
// masked encoding, prediction heads.
template <typename T>
ForwardResult<T> forward_batch(Tape<T>& tape, const Model<T>& model, const TokenBatch<T>& batch,
                               const AttentionMask& mask, bool detach_student_input = false);

// Cold-start inference: builds the self-only 3-token sequence (placeholder
// rows for flagged modalities), runs the encoder with an all-allowed 3x3
// mask and returns the student probabilities. Touches no graph data.
template <typename T>
Tensor<T> infer_cold_start(const Model<T>& model, const FeatureMatrix& x_text,
                           const FeatureMatrix& x_visual, const std::vector<uint8_t>& text_missing,
                           const std::vector<uint8_t>& visual_missing,
                           const std::vector<int64_t>* ids = nullptr);

}  // namespace ntsf
