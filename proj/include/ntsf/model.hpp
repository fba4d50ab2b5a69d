#pragma once

#include <string>
#include <vector>

#include "ntsf/rng.hpp"
#include "ntsf/tensor.hpp"

namespace ntsf {

struct ModelConfig {
  int64_t input_dim = 0;   // shared padded feature width
  int64_t hidden_dim = 512;
  int64_t n_classes = 0;
  int64_t hops = 2;
  int64_t n_experts = 6;   // routed experts; one shared expert always runs
  int64_t top_k = 2;       // routed experts active per token
  int64_t n_layers = 2;
  int64_t n_heads = 2;
  int64_t ffn_mult = 2;    // feed-forward width = ffn_mult * hidden_dim
  double dropout_in = 0.2;
  double dropout_hidden = 0.5;
  // attention logit scaling: default 1/sqrt(hidden_dim); the conventional
  // per-head 1/sqrt(head_dim) is available as a switch
  bool scale_by_head_dim = false;
  bool moe = true;  // false: shared projection only, no routing, no balance loss

  int64_t seq_len() const { return 2 * hops + 4; }
  int64_t teacher_slot() const { return seq_len() - 1; }
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct Mlp2 {  // linear - GELU - linear
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct NormParams {
  Tensor<T> gain, bias;
};

template <typename T>
struct EncoderLayer {
  Tensor<T> attn_q, attn_k, attn_v, attn_out;
  Mlp2<T> ffn;
  NormParams<T> norm_attn, norm_ffn;
};

template <typename T>
struct Model {
  ModelConfig cfg;

  Tensor<T> miss_text, miss_visual;        // input-space placeholders [d_in]
  Tensor<T> student_token, teacher_token;  // model-space class tokens [d]
  Tensor<T> gate_weight;                   // [(d_in + L) x experts]
  std::vector<Mlp2<T>> experts;            // routed, each d_in -> d -> d
  std::vector<NormParams<T>> expert_norms;
  Mlp2<T> shared_expert;
  NormParams<T> shared_norm;
  Tensor<T> pos_enc;  // [L x d]
  std::vector<EncoderLayer<T>> layers;
  Mlp2<T> student_head, teacher_head;  // d -> d -> C

  static Model init(const ModelConfig& cfg, uint64_t seed);

  // Handles share storage with the model's tensors; order is fixed and
  // names are unique, which the optimizer and checkpoint format rely on.
  std::vector<Parameter<T>> named_parameters() const;

  Model clone() const;  // deep copy
  void zero_grads() const;
};

template <typename T>
std::vector<Parameter<T>*> parameter_pointers(std::vector<Parameter<T>>& params);

extern template struct Model<float>;
extern template struct Model<double>;
extern template std::vector<Parameter<float>*> parameter_pointers(std::vector<Parameter<float>>&);
extern template std::vector<Parameter<double>*> parameter_pointers(
    std::vector<Parameter<double>>&);

}  // namespace ntsf
