#pragma once

#include <functional>
#include <vector>

#include "ntsf/mask.hpp"
#include "ntsf/rng.hpp"
#include "ntsf/tensor.hpp"

namespace ntsf {

// Optional capture of attention weights for inspection in tests.
template <typename T>
struct AttentionProbe {
  int64_t nodes = 0, heads = 0, len = 0;
  std::vector<T> weights;  // [nodes, heads, len, len], masked entries zero

  T at(int64_t node, int64_t head, int64_t i, int64_t j) const {
    return weights[((node * heads + head) * len + i) * len + j];
  }
};

// Reverse-mode tape over whole-tensor operations. Ops run their forward
// immediately and, when gradients are enabled and an input is tracked,
// push a backward closure. backward() replays the closures in reverse.
//
// Masked attention iterates only over positions the mask allows, so a
// forbidden position is a true no-op rather than a -inf logit; together
// with the row-stable matmul kernel this makes the self-only inference
// path bit-identical to the first three rows of the full forward.
template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true, bool training = false, Rng* rng = nullptr)
      : grad_enabled_(grad_enabled), training_(training), rng_(rng) {}

  bool grad_enabled() const { return grad_enabled_; }
  bool training() const { return training_; }

  // --- core kernels -------------------------------------------------------
  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
  Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
  Tensor<T> scale(const Tensor<T>& x, T c);
  Tensor<T> gelu(const Tensor<T>& x);
  Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias);
  Tensor<T> softmax_rows(const Tensor<T>& x);
  Tensor<T> dropout(const Tensor<T>& x, double p);

  // --- structure ops ------------------------------------------------------
  // [x | fixed] along columns; `fixed` must be untracked.
  Tensor<T> concat_cols(const Tensor<T>& x, const Tensor<T>& fixed);
  // out[i,:] = flags[i] ? vec : x[i,:]
  Tensor<T> where_rows(const std::vector<uint8_t>& flags, const Tensor<T>& vec,
                       const Tensor<T>& x);
  Tensor<T> broadcast_row(const Tensor<T>& vec, int64_t n);
  // x: [n*len, d]; adds pos[p,:] to every row at sequence offset p.
  Tensor<T> add_position(const Tensor<T>& x, const Tensor<T>& pos, int64_t len);
  // slots[p]: [n, d] -> [n*len, d] with row n_i*len+p = slots[p][n_i].
  Tensor<T> stack_slots(const std::vector<Tensor<T>>& slots);
  // inverse of one slot of stack_slots: rows at offset pos -> [n, d]
  Tensor<T> rows_at(const Tensor<T>& x, int64_t len, int64_t pos);
  Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int64_t>& ids);
  // y: [k, d] scattered into [n, d] at rows ids (ids unique).
  Tensor<T> scatter_rows(const Tensor<T>& y, const std::vector<int64_t>& ids, int64_t n);
  // column `col` of x at rows ids -> [k]
  Tensor<T> gather_col(const Tensor<T>& x, int64_t col, const std::vector<int64_t>& ids);
  // out[i,:] = x[i,:] * w[i]
  Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& w);
  Tensor<T> detach(const Tensor<T>& x);

  // --- attention ----------------------------------------------------------
  // q,k,v: [nodes*len, dim]; per-head masked softmax attention. drop_p is
  // applied to the attention weights in training mode.
  Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                             int64_t nodes, int64_t len, int64_t heads, T inv_scale,
                             const AttentionMask& mask, double drop_p,
                             AttentionProbe<T>* probe = nullptr);

  // sum of weights ⊙ x -> scalar; the generic readout for gradient checks.
  Tensor<T> weighted_sum(const Tensor<T>& x, const Tensor<T>& weights);

  // --- losses (scalar outputs, shape {1}) ----------------------------------
  // mean over rows of sum_c p*(ln p - ln q), 0*ln0 := 0, q clamped at 1e-12.
  Tensor<T> kl_div(const Tensor<T>& p, const Tensor<T>& q);
  // mean of -ln probs[i, labels[i]] over rows with label != -1.
  Tensor<T> cross_entropy(const Tensor<T>& probs, const std::vector<int32_t>& labels);
  // sum_m P_m * f_m over gate tensors [n, experts] and their top-k masks.
  Tensor<T> moe_balance(const std::vector<Tensor<T>>& gates,
                        const std::vector<std::vector<uint8_t>>& selected, int64_t top_k);

  void backward(Tensor<T>& loss);
  size_t size() const { return steps_.size(); }

 private:
  Tensor<T> make_out(std::vector<int64_t> shape, bool any_tracked) {
    return Tensor<T>::zeros(std::move(shape), grad_enabled_ && any_tracked);
  }
  void record(std::function<void()> fn) {
    if (grad_enabled_) steps_.push_back(std::move(fn));
  }

  std::vector<std::function<void()>> steps_;
  bool grad_enabled_;
  bool training_;
  bool used_ = false;
  Rng* rng_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ntsf
