#include "ntsf/encoder.hpp"

#include <cmath>
#include <cstring>

#include "ntsf/moe.hpp"

namespace ntsf {

template <typename T>
Tensor<T> encode(Tape<T>& tape, const Model<T>& model, const Tensor<T>& projected, int64_t n,
                 int64_t len, const AttentionMask& mask,
                 std::vector<AttentionProbe<T>>* probes) {
  const ModelConfig& cfg = model.cfg;
  check_input(projected.rows() == n * len && projected.cols() == cfg.hidden_dim,
              "encode: projected tokens have the wrong shape");
  check_input(len <= cfg.seq_len(), "encode: sequence longer than the position table");
  check_input(mask.len == len, "encode: mask length mismatch");

  Tensor<T> pos = model.pos_enc;
  if (len < cfg.seq_len()) {
    // untracked prefix copy; bit-identical values, used on no-grad paths
    pos = Tensor<T>::zeros({len, cfg.hidden_dim});
    std::memcpy(pos.ptr(), model.pos_enc.cptr(),
                sizeof(T) * static_cast<size_t>(len * cfg.hidden_dim));
  }

  auto h = tape.add_position(tape.dropout(projected, cfg.dropout_in), pos, len);

  const T inv_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(
                               cfg.scale_by_head_dim ? cfg.hidden_dim / cfg.n_heads
                                                     : cfg.hidden_dim)));
  if (probes) probes->resize(model.layers.size());
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const EncoderLayer<T>& layer = model.layers[l];
    auto q = tape.matmul(h, layer.attn_q);
    auto k = tape.matmul(h, layer.attn_k);
    auto v = tape.matmul(h, layer.attn_v);
    auto attn = tape.masked_attention(q, k, v, n, len, cfg.n_heads, inv_scale, mask,
                                      cfg.dropout_hidden, probes ? &(*probes)[l] : nullptr);
    h = tape.layer_norm(tape.add(h, tape.matmul(attn, layer.attn_out)), layer.norm_attn.gain,
                        layer.norm_attn.bias);
    auto f = tape.gelu(tape.add_bias(tape.matmul(h, layer.ffn.w1), layer.ffn.b1));
    f = tape.dropout(f, cfg.dropout_hidden);
    f = tape.add_bias(tape.matmul(f, layer.ffn.w2), layer.ffn.b2);
    h = tape.layer_norm(tape.add(h, f), layer.norm_ffn.gain, layer.norm_ffn.bias);
  }
  return h;
}

template Tensor<float> encode<float>(Tape<float>&, const Model<float>&, const Tensor<float>&,
                                     int64_t, int64_t, const AttentionMask&,
                                     std::vector<AttentionProbe<float>>*);
template Tensor<double> encode<double>(Tape<double>&, const Model<double>&, const Tensor<double>&,
                                       int64_t, int64_t, const AttentionMask&,
                                       std::vector<AttentionProbe<double>>*);

}  // namespace ntsf
