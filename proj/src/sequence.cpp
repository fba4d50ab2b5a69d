#include "ntsf/sequence.hpp"

#include <numeric>
#include <string>

namespace ntsf {

namespace {

template <typename T>
Tensor<T> gather_feature_rows(const FeatureMatrix& x, const std::vector<int64_t>& ids) {
  Tensor<T> t = Tensor<T>::zeros({static_cast<int64_t>(ids.size()), x.d});
  for (size_t r = 0; r < ids.size(); ++r) {
    const float* src = x.row(ids[r]);
    T* dst = t.ptr() + static_cast<int64_t>(r) * x.d;
    for (int64_t j = 0; j < x.d; ++j) dst[j] = static_cast<T>(src[j]);
  }
  return t;
}

std::vector<int64_t> all_ids(int64_t n) {
  std::vector<int64_t> ids(static_cast<size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

template <typename T>
TokenBatch<T> build_sequence(const FeatureMatrix& x_text, const FeatureMatrix& x_visual,
                             const HopStack& hops_text, const HopStack& hops_visual,
                             int64_t hops, const std::vector<int64_t>* ids) {
  check_input(hops >= 1, "build_sequence: hop count must be >= 1");
  check_input(hops_text.depth() == hops && hops_visual.depth() == hops,
              "build_sequence: hop stack depth does not match requested hops");
  check_input(x_text.n == x_visual.n, "build_sequence: modality row counts differ");
  const int64_t d_in = x_text.d;
  check_input(x_visual.d == d_in, "build_sequence: modalities not padded to a shared width");
  for (const auto& h : hops_text.hops)
    check_input(h.n == x_text.n && h.d == d_in, "build_sequence: text hop shape mismatch");
  for (const auto& h : hops_visual.hops)
    check_input(h.n == x_text.n && h.d == d_in, "build_sequence: visual hop shape mismatch");

  const std::vector<int64_t> rows = ids ? *ids : all_ids(x_text.n);
  for (int64_t id : rows)
    check_input(id >= 0 && id < x_text.n, "build_sequence: node id out of range");

  TokenBatch<T> batch;
  batch.n = static_cast<int64_t>(rows.size());
  batch.seq_len = 2 * hops + 4;
  batch.input_dim = d_in;
  batch.node_ids = rows;
  batch.slots.resize(static_cast<size_t>(batch.seq_len));
  batch.slots[kTextSlot] = gather_feature_rows<T>(x_text, rows);
  batch.slots[kVisualSlot] = gather_feature_rows<T>(x_visual, rows);
  batch.slots[kStudentSlot] = Tensor<T>::zeros({batch.n, d_in});
  for (int64_t k = 0; k < hops; ++k) {
    batch.slots[kSelfTokens + 2 * k] = gather_feature_rows<T>(hops_text.hops[k], rows);
    batch.slots[kSelfTokens + 2 * k + 1] = gather_feature_rows<T>(hops_visual.hops[k], rows);
  }
  batch.slots[batch.seq_len - 1] = Tensor<T>::zeros({batch.n, d_in});
  batch.text_missing.assign(static_cast<size_t>(batch.n), 0);
  batch.visual_missing.assign(static_cast<size_t>(batch.n), 0);
  return batch;
}

template <typename T>
TokenBatch<T> build_self_sequence(const FeatureMatrix& x_text, const FeatureMatrix& x_visual,
                                  const std::vector<int64_t>* ids) {
  check_input(x_text.n == x_visual.n, "build_self_sequence: modality row counts differ");
  check_input(x_text.d == x_visual.d,
              "build_self_sequence: modalities not padded to a shared width");
  const std::vector<int64_t> rows = ids ? *ids : all_ids(x_text.n);
  for (int64_t id : rows)
    check_input(id >= 0 && id < x_text.n, "build_self_sequence: node id out of range");
  TokenBatch<T> batch;
  batch.n = static_cast<int64_t>(rows.size());
  batch.seq_len = kSelfTokens;
  batch.input_dim = x_text.d;
  batch.node_ids = rows;
  batch.slots.resize(kSelfTokens);
  batch.slots[kTextSlot] = gather_feature_rows<T>(x_text, rows);
  batch.slots[kVisualSlot] = gather_feature_rows<T>(x_visual, rows);
  batch.slots[kStudentSlot] = Tensor<T>::zeros({batch.n, batch.input_dim});
  batch.text_missing.assign(static_cast<size_t>(batch.n), 0);
  batch.visual_missing.assign(static_cast<size_t>(batch.n), 0);
  return batch;
}

template <typename T>
TokenBatch<T> apply_missing(const TokenBatch<T>& batch, double p_miss, Rng& rng) {
  check_input(p_miss >= 0.0 && p_miss <= 0.5,
              "apply_missing: p_miss must lie in [0, 0.5] so both modalities never drop at once");
  TokenBatch<T> out = batch;
  out.text_missing.assign(static_cast<size_t>(batch.n), 0);
  out.visual_missing.assign(static_cast<size_t>(batch.n), 0);
  for (int64_t i = 0; i < batch.n; ++i) {
    const double u = rng.uniform();
    if (u < p_miss)
      out.text_missing[i] = 1;
    else if (u < 2.0 * p_miss)
      out.visual_missing[i] = 1;
  }
  return out;
}

template <typename T>
TokenBatch<T> apply_missing(const TokenBatch<T>& batch, const std::vector<uint8_t>& text_missing,
                            const std::vector<uint8_t>& visual_missing) {
  check_input(static_cast<int64_t>(text_missing.size()) == batch.n &&
                  static_cast<int64_t>(visual_missing.size()) == batch.n,
              "apply_missing: one flag pair per node required");
  for (int64_t i = 0; i < batch.n; ++i)
    check_input(!(text_missing[i] && visual_missing[i]),
                "apply_missing: node " + std::to_string(i) + " has both modalities missing");
  TokenBatch<T> out = batch;
  out.text_missing = text_missing;
  out.visual_missing = visual_missing;
  return out;
}

template struct TokenBatch<float>;
template struct TokenBatch<double>;

template TokenBatch<float> build_sequence<float>(const FeatureMatrix&, const FeatureMatrix&,
                                                 const HopStack&, const HopStack&, int64_t,
                                                 const std::vector<int64_t>*);
template TokenBatch<double> build_sequence<double>(const FeatureMatrix&, const FeatureMatrix&,
                                                   const HopStack&, const HopStack&, int64_t,
                                                   const std::vector<int64_t>*);
template TokenBatch<float> build_self_sequence<float>(const FeatureMatrix&, const FeatureMatrix&,
                                                      const std::vector<int64_t>*);
template TokenBatch<double> build_self_sequence<double>(const FeatureMatrix&, const FeatureMatrix&,
                                                        const std::vector<int64_t>*);
template TokenBatch<float> apply_missing<float>(const TokenBatch<float>&, double, Rng&);
template TokenBatch<double> apply_missing<double>(const TokenBatch<double>&, double, Rng&);
template TokenBatch<float> apply_missing<float>(const TokenBatch<float>&,
                                                const std::vector<uint8_t>&,
                                                const std::vector<uint8_t>&);
template TokenBatch<double> apply_missing<double>(const TokenBatch<double>&,
                                                  const std::vector<uint8_t>&,
                                                  const std::vector<uint8_t>&);

}  // namespace ntsf
