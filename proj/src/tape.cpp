#include "ntsf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace ntsf {

namespace {

// C (+)= A * B with the ikj loop. Each output row is produced by a single
// sequential pass over k, so a row's bits depend only on its own input row
// and B, never on the total row count or the thread partition.
template <typename T>
void mm_kernel(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  parallel_rows(m, [=](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      T* cr = c + i * n;
      if (!accumulate) std::fill(cr, cr + n, T(0));
      const T* ar = a + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const T av = ar[kk];
        if (av == T(0)) continue;
        const T* br = b + kk * n;
        for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
  });
}

template <typename T>
std::vector<T> transposed(const T* x, int64_t rows, int64_t cols) {
  std::vector<T> t(static_cast<size_t>(rows * cols));
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) t[j * rows + i] = x[i * cols + j];
  return t;
}

template <typename T>
T gelu_value(T x) {
  return x * T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
T gelu_slope(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
  const T pdf = T(0.39894228040143267794) * std::exp(T(-0.5) * x * x);
  return cdf + x * pdf;
}

constexpr double kProbFloor = 1e-12;
constexpr double kProbRowTol = 1e-4;

}  // namespace

template <typename T>
Tensor<T> Tape<T>::matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const int64_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  check_input(k == k2, "matmul: inner dimensions disagree (" + std::to_string(k) + " vs " +
                           std::to_string(k2) + ")");
  std::vector<int64_t> out_shape = a.shape;
  out_shape.back() = n;
  Tensor<T> out = make_out(std::move(out_shape), a.tracked() || b.tracked());
  mm_kernel(a.cptr(), b.cptr(), out.ptr(), m, k, n, false);
  if (out.tracked()) {
    record([a, b, out, m, k, n]() mutable {
      if (a.tracked()) {
        // dA += dC * B^T, as an ikj product against the transposed B.
        auto bt = transposed(b.cptr(), k, n);
        mm_kernel(out.cgptr(), bt.data(), a.gptr(), m, n, k, true);
      }
      if (b.tracked()) {
        // dB += A^T * dC
        auto at = transposed(a.cptr(), m, k);
        mm_kernel(at.data(), out.cgptr(), b.gptr(), k, m, n, true);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::add(const Tensor<T>& a, const Tensor<T>& b) {
  check_input(a.shape == b.shape, "add: shape mismatch");
  Tensor<T> out = make_out(a.shape, a.tracked() || b.tracked());
  const int64_t n = a.numel();
  const T* pa = a.cptr();
  const T* pb = b.cptr();
  T* po = out.ptr();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (out.tracked()) {
    record([a, b, out, n]() mutable {
      if (a.tracked())
        for (int64_t i = 0; i < n; ++i) a.gptr()[i] += out.cgptr()[i];
      if (b.tracked())
        for (int64_t i = 0; i < n; ++i) b.gptr()[i] += out.cgptr()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const int64_t rows = x.rows(), cols = x.cols();
  check_input(bias.numel() == cols, "add_bias: bias length does not match columns");
  Tensor<T> out = make_out(x.shape, x.tracked() || bias.tracked());
  const T* px = x.cptr();
  const T* pb = bias.cptr();
  T* po = out.ptr();
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) po[i * cols + j] = px[i * cols + j] + pb[j];
  if (out.tracked()) {
    record([x, bias, out, rows, cols]() mutable {
      if (x.tracked())
        for (int64_t i = 0; i < rows * cols; ++i) x.gptr()[i] += out.cgptr()[i];
      if (bias.tracked())
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < cols; ++j) bias.gptr()[j] += out.cgptr()[i * cols + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::scale(const Tensor<T>& x, T c) {
  Tensor<T> out = make_out(x.shape, x.tracked());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.ptr()[i] = x.cptr()[i] * c;
  if (out.tracked()) {
    record([x, out, c, n]() mutable {
      for (int64_t i = 0; i < n; ++i) x.gptr()[i] += c * out.cgptr()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::gelu(const Tensor<T>& x) {
  Tensor<T> out = make_out(x.shape, x.tracked());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.ptr()[i] = gelu_value(x.cptr()[i]);
  if (out.tracked()) {
    record([x, out, n]() mutable {
      for (int64_t i = 0; i < n; ++i) x.gptr()[i] += gelu_slope(x.cptr()[i]) * out.cgptr()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  const int64_t rows = x.rows(), d = x.cols();
  check_input(d >= 1, "layer_norm: empty rows");
  check_input(gain.numel() == d && bias.numel() == d,
              "layer_norm: gain/bias length does not match columns");
  const T eps = T(1e-5);
  Tensor<T> out = make_out(x.shape, x.tracked() || gain.tracked() || bias.tracked());
  // normalized values and inverse stddev are needed again in backward
  auto norm = std::make_shared<std::vector<T>>(static_cast<size_t>(rows * d));
  auto inv_sd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
  const T* px = x.cptr();
  const T* pg = gain.cptr();
  const T* pb = bias.cptr();
  T* po = out.ptr();
  parallel_rows(rows, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const T* row = px + i * d;
      T mean = T(0);
      for (int64_t j = 0; j < d; ++j) mean += row[j];
      mean /= T(d);
      T var = T(0);
      for (int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= T(d);
      const T isd = T(1) / std::sqrt(var + eps);
      (*inv_sd)[i] = isd;
      for (int64_t j = 0; j < d; ++j) {
        const T y = (row[j] - mean) * isd;
        (*norm)[i * d + j] = y;
        po[i * d + j] = y * pg[j] + pb[j];
      }
    }
  });
  if (out.tracked()) {
    record([x, gain, bias, out, norm, inv_sd, rows, d]() mutable {
      const T* go = out.cgptr();
      if (gain.tracked() || bias.tracked()) {
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < d; ++j) {
            if (gain.tracked()) gain.gptr()[j] += go[i * d + j] * (*norm)[i * d + j];
            if (bias.tracked()) bias.gptr()[j] += go[i * d + j];
          }
      }
      if (x.tracked()) {
        const T* pg = gain.cptr();
        parallel_rows(rows, [&](int64_t i0, int64_t i1) {
          for (int64_t i = i0; i < i1; ++i) {
            T sum_dy = T(0), sum_dyy = T(0);
            for (int64_t j = 0; j < d; ++j) {
              const T dy = go[i * d + j] * pg[j];
              sum_dy += dy;
              sum_dyy += dy * (*norm)[i * d + j];
            }
            const T isd = (*inv_sd)[i];
            for (int64_t j = 0; j < d; ++j) {
              const T dy = go[i * d + j] * pg[j];
              x.gptr()[i * d + j] +=
                  isd * (dy - sum_dy / T(d) - (*norm)[i * d + j] * sum_dyy / T(d));
            }
          }
        });
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::softmax_rows(const Tensor<T>& x) {
  const int64_t rows = x.rows(), c = x.cols();
  check_input(c >= 1, "softmax: empty rows");
  Tensor<T> out = make_out(x.shape, x.tracked());
  const T* px = x.cptr();
  T* po = out.ptr();
  for (int64_t i = 0; i < rows; ++i) {
    const T* row = px + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    if (!std::isfinite(static_cast<double>(mx)))
      throw NumericError("softmax: row has no finite entry");
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) {
      const T e = std::exp(row[j] - mx);
      po[i * c + j] = e;
      sum += e;
    }
    for (int64_t j = 0; j < c; ++j) po[i * c + j] /= sum;
  }
  if (out.tracked()) {
    record([x, out, rows, c]() mutable {
      for (int64_t i = 0; i < rows; ++i) {
        const T* p = out.cptr() + i * c;
        const T* g = out.cgptr() + i * c;
        T dot = T(0);
        for (int64_t j = 0; j < c; ++j) dot += p[j] * g[j];
        for (int64_t j = 0; j < c; ++j) x.gptr()[i * c + j] += p[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::dropout(const Tensor<T>& x, double p) {
  check_input(p >= 0.0 && p < 1.0, "dropout: rate must be in [0,1)");
  if (!training_ || p == 0.0) return x;
  check_contract(rng_ != nullptr, "dropout: training tape has no rng");
  const int64_t n = x.numel();
  // inverted dropout: survivors scaled by 1/(1-p), eval path is identity
  auto mult = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  const T keep_scale = T(1.0 / (1.0 - p));
  for (int64_t i = 0; i < n; ++i) (*mult)[i] = rng_->uniform() >= p ? keep_scale : T(0);
  Tensor<T> out = make_out(x.shape, x.tracked());
  for (int64_t i = 0; i < n; ++i) out.ptr()[i] = x.cptr()[i] * (*mult)[i];
  if (out.tracked()) {
    record([x, out, mult, n]() mutable {
      for (int64_t i = 0; i < n; ++i) x.gptr()[i] += (*mult)[i] * out.cgptr()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::concat_cols(const Tensor<T>& x, const Tensor<T>& fixed) {
  check_contract(!fixed.tracked(), "concat_cols: fixed block must be untracked");
  const int64_t rows = x.rows(), a = x.cols(), b = fixed.cols();
  check_input(fixed.rows() == rows, "concat_cols: row count mismatch");
  Tensor<T> out = make_out({rows, a + b}, x.tracked());
  for (int64_t i = 0; i < rows; ++i) {
    std::memcpy(out.ptr() + i * (a + b), x.cptr() + i * a, sizeof(T) * a);
    std::memcpy(out.ptr() + i * (a + b) + a, fixed.cptr() + i * b, sizeof(T) * b);
  }
  if (out.tracked()) {
    record([x, out, rows, a, b]() mutable {
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < a; ++j) x.gptr()[i * a + j] += out.cgptr()[i * (a + b) + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::where_rows(const std::vector<uint8_t>& flags, const Tensor<T>& vec,
                              const Tensor<T>& x) {
  const int64_t rows = x.rows(), d = x.cols();
  check_input(static_cast<int64_t>(flags.size()) == rows, "where_rows: flag count mismatch");
  check_input(vec.numel() == d, "where_rows: vector length mismatch");
  Tensor<T> out = make_out(x.shape, vec.tracked() || x.tracked());
  for (int64_t i = 0; i < rows; ++i) {
    const T* src = flags[i] ? vec.cptr() : x.cptr() + i * d;
    std::memcpy(out.ptr() + i * d, src, sizeof(T) * d);
  }
  if (out.tracked()) {
    auto f = std::make_shared<std::vector<uint8_t>>(flags);
    record([f, vec, x, out, rows, d]() mutable {
      for (int64_t i = 0; i < rows; ++i) {
        if ((*f)[i]) {
          if (vec.tracked())
            for (int64_t j = 0; j < d; ++j) vec.gptr()[j] += out.cgptr()[i * d + j];
        } else if (x.tracked()) {
          for (int64_t j = 0; j < d; ++j) x.gptr()[i * d + j] += out.cgptr()[i * d + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::broadcast_row(const Tensor<T>& vec, int64_t n) {
  const int64_t d = vec.numel();
  Tensor<T> out = make_out({n, d}, vec.tracked());
  for (int64_t i = 0; i < n; ++i) std::memcpy(out.ptr() + i * d, vec.cptr(), sizeof(T) * d);
  if (out.tracked()) {
    record([vec, out, n, d]() mutable {
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) vec.gptr()[j] += out.cgptr()[i * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::add_position(const Tensor<T>& x, const Tensor<T>& pos, int64_t len) {
  const int64_t rows = x.rows(), d = x.cols();
  check_input(rows % len == 0, "add_position: rows not divisible by sequence length");
  check_input(pos.rows() == len && pos.cols() == d, "add_position: encoding shape mismatch");
  Tensor<T> out = make_out(x.shape, x.tracked() || pos.tracked());
  for (int64_t i = 0; i < rows; ++i) {
    const T* pe = pos.cptr() + (i % len) * d;
    for (int64_t j = 0; j < d; ++j) out.ptr()[i * d + j] = x.cptr()[i * d + j] + pe[j];
  }
  if (out.tracked()) {
    record([x, pos, out, rows, d, len]() mutable {
      if (x.tracked())
        for (int64_t i = 0; i < rows * d; ++i) x.gptr()[i] += out.cgptr()[i];
      if (pos.tracked())
        for (int64_t i = 0; i < rows; ++i)
          for (int64_t j = 0; j < d; ++j)
            pos.gptr()[(i % len) * d + j] += out.cgptr()[i * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::stack_slots(const std::vector<Tensor<T>>& slots) {
  check_input(!slots.empty(), "stack_slots: no slots");
  const int64_t len = static_cast<int64_t>(slots.size());
  const int64_t n = slots[0].rows(), d = slots[0].cols();
  bool any = false;
  for (const auto& s : slots) {
    check_input(s.rows() == n && s.cols() == d, "stack_slots: slot shape mismatch");
    any = any || s.tracked();
  }
  Tensor<T> out = make_out({n * len, d}, any);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t p = 0; p < len; ++p)
      std::memcpy(out.ptr() + (i * len + p) * d, slots[p].cptr() + i * d, sizeof(T) * d);
  if (out.tracked()) {
    auto copy = std::make_shared<std::vector<Tensor<T>>>(slots);
    record([copy, out, n, len, d]() mutable {
      for (int64_t p = 0; p < len; ++p) {
        Tensor<T>& s = (*copy)[p];
        if (!s.tracked()) continue;
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j)
            s.gptr()[i * d + j] += out.cgptr()[(i * len + p) * d + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::rows_at(const Tensor<T>& x, int64_t len, int64_t pos) {
  const int64_t rows = x.rows(), d = x.cols();
  check_input(rows % len == 0, "rows_at: rows not divisible by sequence length");
  check_input(pos >= 0 && pos < len, "rows_at: position out of range");
  const int64_t n = rows / len;
  Tensor<T> out = make_out({n, d}, x.tracked());
  for (int64_t i = 0; i < n; ++i)
    std::memcpy(out.ptr() + i * d, x.cptr() + (i * len + pos) * d, sizeof(T) * d);
  if (out.tracked()) {
    record([x, out, n, len, pos, d]() mutable {
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j)
          x.gptr()[(i * len + pos) * d + j] += out.cgptr()[i * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::gather_rows(const Tensor<T>& x, const std::vector<int64_t>& ids) {
  const int64_t rows = x.rows(), d = x.cols();
  const int64_t k = static_cast<int64_t>(ids.size());
  for (int64_t id : ids) check_input(id >= 0 && id < rows, "gather_rows: index out of range");
  Tensor<T> out = make_out({k, d}, x.tracked());
  for (int64_t r = 0; r < k; ++r)
    std::memcpy(out.ptr() + r * d, x.cptr() + ids[r] * d, sizeof(T) * d);
  if (out.tracked()) {
    auto idx = std::make_shared<std::vector<int64_t>>(ids);
    record([x, out, idx, k, d]() mutable {
      for (int64_t r = 0; r < k; ++r)
        for (int64_t j = 0; j < d; ++j)
          x.gptr()[(*idx)[r] * d + j] += out.cgptr()[r * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::scatter_rows(const Tensor<T>& y, const std::vector<int64_t>& ids, int64_t n) {
  const int64_t k = y.rows(), d = y.cols();
  check_input(static_cast<int64_t>(ids.size()) == k, "scatter_rows: index count mismatch");
  for (int64_t id : ids) check_input(id >= 0 && id < n, "scatter_rows: index out of range");
  Tensor<T> out = make_out({n, d}, y.tracked());
  for (int64_t r = 0; r < k; ++r)
    std::memcpy(out.ptr() + ids[r] * d, y.cptr() + r * d, sizeof(T) * d);
  if (out.tracked()) {
    auto idx = std::make_shared<std::vector<int64_t>>(ids);
    record([y, out, idx, k, d]() mutable {
      for (int64_t r = 0; r < k; ++r)
        for (int64_t j = 0; j < d; ++j)
          y.gptr()[r * d + j] += out.cgptr()[(*idx)[r] * d + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::gather_col(const Tensor<T>& x, int64_t col, const std::vector<int64_t>& ids) {
  const int64_t rows = x.rows(), c = x.cols();
  check_input(col >= 0 && col < c, "gather_col: column out of range");
  const int64_t k = static_cast<int64_t>(ids.size());
  for (int64_t id : ids) check_input(id >= 0 && id < rows, "gather_col: index out of range");
  Tensor<T> out = make_out({k}, x.tracked());
  for (int64_t r = 0; r < k; ++r) out.ptr()[r] = x.cptr()[ids[r] * c + col];
  if (out.tracked()) {
    auto idx = std::make_shared<std::vector<int64_t>>(ids);
    record([x, out, idx, k, col, c]() mutable {
      for (int64_t r = 0; r < k; ++r) x.gptr()[(*idx)[r] * c + col] += out.cgptr()[r];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::mul_rows(const Tensor<T>& x, const Tensor<T>& w) {
  const int64_t rows = x.rows(), d = x.cols();
  check_input(w.numel() == rows, "mul_rows: weight count mismatch");
  Tensor<T> out = make_out(x.shape, x.tracked() || w.tracked());
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < d; ++j) out.ptr()[i * d + j] = x.cptr()[i * d + j] * w.cptr()[i];
  if (out.tracked()) {
    record([x, w, out, rows, d]() mutable {
      for (int64_t i = 0; i < rows; ++i) {
        if (x.tracked())
          for (int64_t j = 0; j < d; ++j)
            x.gptr()[i * d + j] += w.cptr()[i] * out.cgptr()[i * d + j];
        if (w.tracked()) {
          T dot = T(0);
          for (int64_t j = 0; j < d; ++j) dot += x.cptr()[i * d + j] * out.cgptr()[i * d + j];
          w.gptr()[i] += dot;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::detach(const Tensor<T>& x) {
  Tensor<T> out;
  out.shape = x.shape;
  out.data = x.data;  // shares storage, drops the gradient link
  return out;
}

template <typename T>
Tensor<T> Tape<T>::masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                    int64_t nodes, int64_t len, int64_t heads, T inv_scale,
                                    const AttentionMask& mask, double drop_p,
                                    AttentionProbe<T>* probe) {
  const int64_t d = q.cols();
  check_input(q.shape == k.shape && q.shape == v.shape, "attention: q/k/v shape mismatch");
  check_input(q.rows() == nodes * len, "attention: rows != nodes*len");
  check_input(heads >= 1 && d % heads == 0, "attention: head count must divide dim");
  check_input(mask.len == len, "attention: mask length mismatch");
  const int64_t dh = d / heads;

  // per-row allowed positions; a row with none cannot be normalized
  std::vector<std::vector<int64_t>> allowed(len);
  for (int64_t i = 0; i < len; ++i) {
    for (int64_t j = 0; j < len; ++j)
      if (mask.allows(i, j)) allowed[i].push_back(j);
    check_contract(!allowed[i].empty(), "attention: mask row " + std::to_string(i) +
                                            " allows no positions");
  }

  const bool dropping = training_ && drop_p > 0.0;
  check_input(drop_p >= 0.0 && drop_p < 1.0, "attention: dropout rate must be in [0,1)");
  if (dropping) check_contract(rng_ != nullptr, "attention: training tape has no rng");

  const size_t table = static_cast<size_t>(nodes * heads * len * len);
  auto probs = std::make_shared<std::vector<T>>(table, T(0));
  std::shared_ptr<std::vector<T>> dropmult;
  if (dropping) {
    // draw sequentially up front so worker threads never touch the rng
    dropmult = std::make_shared<std::vector<T>>(table, T(0));
    const T keep_scale = T(1.0 / (1.0 - drop_p));
    for (int64_t b = 0; b < nodes; ++b)
      for (int64_t h = 0; h < heads; ++h)
        for (int64_t i = 0; i < len; ++i)
          for (int64_t j : allowed[i])
            (*dropmult)[((b * heads + h) * len + i) * len + j] =
                rng_->uniform() >= drop_p ? keep_scale : T(0);
  }

  Tensor<T> out = make_out(q.shape, q.tracked() || k.tracked() || v.tracked());
  const T* pq = q.cptr();
  const T* pk = k.cptr();
  const T* pv = v.cptr();
  T* po = out.ptr();
  parallel_rows(nodes, [&](int64_t b0, int64_t b1) {
    std::vector<T> logits(len);
    for (int64_t b = b0; b < b1; ++b) {
      for (int64_t h = 0; h < heads; ++h) {
        const int64_t hoff = h * dh;
        T* prob_base = probs->data() + ((b * heads + h) * len) * len;
        for (int64_t i = 0; i < len; ++i) {
          const T* qi = pq + (b * len + i) * d + hoff;
          T mx = -std::numeric_limits<T>::infinity();
          for (int64_t j : allowed[i]) {
            const T* kj = pk + (b * len + j) * d + hoff;
            T dot = T(0);
            for (int64_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
            logits[j] = dot * inv_scale;
            mx = std::max(mx, logits[j]);
          }
          T sum = T(0);
          for (int64_t j : allowed[i]) {
            const T e = std::exp(logits[j] - mx);
            prob_base[i * len + j] = e;
            sum += e;
          }
          T* orow = po + (b * len + i) * d + hoff;
          std::fill(orow, orow + dh, T(0));
          for (int64_t j : allowed[i]) {
            prob_base[i * len + j] /= sum;
            T w = prob_base[i * len + j];
            if (dropping) w *= (*dropmult)[((b * heads + h) * len + i) * len + j];
            if (w == T(0)) continue;
            const T* vj = pv + (b * len + j) * d + hoff;
            for (int64_t c = 0; c < dh; ++c) orow[c] += w * vj[c];
          }
        }
      }
    }
  });

  if (probe) {
    probe->nodes = nodes;
    probe->heads = heads;
    probe->len = len;
    probe->weights.assign(probs->begin(), probs->end());
  }

  if (out.tracked()) {
    auto allow = std::make_shared<std::vector<std::vector<int64_t>>>(std::move(allowed));
    record([q, k, v, out, probs, dropmult, allow, nodes, len, heads, dh, d, inv_scale]() mutable {
      const T* pq = q.cptr();
      const T* pk = k.cptr();
      const T* pv = v.cptr();
      const T* go = out.cgptr();
      parallel_rows(nodes, [&](int64_t b0, int64_t b1) {
        std::vector<T> dprob(len), dlogit(len);
        for (int64_t b = b0; b < b1; ++b) {
          for (int64_t h = 0; h < heads; ++h) {
            const int64_t hoff = h * dh;
            const T* prob_base = probs->data() + ((b * heads + h) * len) * len;
            for (int64_t i = 0; i < len; ++i) {
              const T* gi = go + (b * len + i) * d + hoff;
              // through the weighted value sum
              for (int64_t j : (*allow)[i]) {
                const T p = prob_base[i * len + j];
                const T mult =
                    dropmult ? (*dropmult)[((b * heads + h) * len + i) * len + j] : T(1);
                const T w = p * mult;
                const T* vj = pv + (b * len + j) * d + hoff;
                T dw = T(0);
                for (int64_t c = 0; c < dh; ++c) dw += gi[c] * vj[c];
                if (v.tracked() && w != T(0)) {
                  T* gv = v.gptr() + (b * len + j) * d + hoff;
                  for (int64_t c = 0; c < dh; ++c) gv[c] += w * gi[c];
                }
                dprob[j] = dw * mult;
              }
              // softmax backward over the allowed set
              T dot = T(0);
              for (int64_t j : (*allow)[i]) dot += dprob[j] * prob_base[i * len + j];
              for (int64_t j : (*allow)[i])
                dlogit[j] = prob_base[i * len + j] * (dprob[j] - dot);
              if (q.tracked() || k.tracked()) {
                const T* qi = pq + (b * len + i) * d + hoff;
                for (int64_t j : (*allow)[i]) {
                  const T dl = dlogit[j] * inv_scale;
                  if (dl == T(0)) continue;
                  const T* kj = pk + (b * len + j) * d + hoff;
                  if (q.tracked()) {
                    T* gq = q.gptr() + (b * len + i) * d + hoff;
                    for (int64_t c = 0; c < dh; ++c) gq[c] += dl * kj[c];
                  }
                  if (k.tracked()) {
                    T* gk = k.gptr() + (b * len + j) * d + hoff;
                    for (int64_t c = 0; c < dh; ++c) gk[c] += dl * qi[c];
                  }
                }
              }
            }
          }
        }
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::weighted_sum(const Tensor<T>& x, const Tensor<T>& weights) {
  check_input(x.shape == weights.shape, "weighted_sum: shape mismatch");
  const int64_t n = x.numel();
  double total = 0;
  for (int64_t i = 0; i < n; ++i)
    total += static_cast<double>(x.cptr()[i]) * static_cast<double>(weights.cptr()[i]);
  Tensor<T> out = make_out({1}, x.tracked() || weights.tracked());
  out.ptr()[0] = static_cast<T>(total);
  if (out.tracked()) {
    record([x, weights, out, n]() mutable {
      const T g = out.cgptr()[0];
      if (x.tracked())
        for (int64_t i = 0; i < n; ++i) x.gptr()[i] += g * weights.cptr()[i];
      if (weights.tracked())
        for (int64_t i = 0; i < n; ++i) weights.gptr()[i] += g * x.cptr()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::kl_div(const Tensor<T>& p, const Tensor<T>& q) {
  check_input(p.shape == q.shape, "kl_div: shape mismatch");
  const int64_t rows = p.rows(), c = p.cols();
  check_input(rows >= 1, "kl_div: empty input");
  for (int64_t i = 0; i < rows; ++i) {
    double sp = 0, sq = 0;
    for (int64_t j = 0; j < c; ++j) {
      sp += static_cast<double>(p.cptr()[i * c + j]);
      sq += static_cast<double>(q.cptr()[i * c + j]);
    }
    check_contract(std::fabs(sp - 1.0) <= kProbRowTol && std::fabs(sq - 1.0) <= kProbRowTol,
                   "kl_div: row " + std::to_string(i) + " is not a probability vector");
  }
  double total = 0;
  for (int64_t i = 0; i < rows * c; ++i) {
    const double pv = static_cast<double>(p.cptr()[i]);
    if (pv == 0.0) continue;  // 0*ln0 := 0
    const double qv = std::max(static_cast<double>(q.cptr()[i]), kProbFloor);
    total += pv * (std::log(std::max(pv, kProbFloor)) - std::log(qv));
  }
  Tensor<T> out = make_out({1}, p.tracked() || q.tracked());
  out.ptr()[0] = static_cast<T>(total / static_cast<double>(rows));
  if (out.tracked()) {
    record([p, q, out, rows, c]() mutable {
      const T g = out.cgptr()[0] / T(rows);
      for (int64_t i = 0; i < rows * c; ++i) {
        const T pv = p.cptr()[i];
        const T qv = q.cptr()[i];
        if (q.tracked() && pv != T(0) && qv >= T(kProbFloor)) q.gptr()[i] -= g * pv / qv;
        if (p.tracked() && pv != T(0))
          p.gptr()[i] += g * (std::log(std::max(pv, T(kProbFloor))) -
                              std::log(std::max(qv, T(kProbFloor))) + T(1));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::cross_entropy(const Tensor<T>& probs, const std::vector<int32_t>& labels) {
  const int64_t rows = probs.rows(), c = probs.cols();
  check_input(static_cast<int64_t>(labels.size()) == rows, "cross_entropy: label count mismatch");
  int64_t labeled = 0;
  for (int32_t y : labels) {
    check_input(y >= -1 && y < c, "cross_entropy: label out of range");
    labeled += (y >= 0);
  }
  check_contract(labeled > 0, "cross_entropy: no labeled rows (empty supervision)");
  double total = 0;
  for (int64_t i = 0; i < rows; ++i) {
    if (labels[i] < 0) continue;
    const double pv = std::max(static_cast<double>(probs.cptr()[i * c + labels[i]]), kProbFloor);
    total -= std::log(pv);
  }
  Tensor<T> out = make_out({1}, probs.tracked());
  out.ptr()[0] = static_cast<T>(total / static_cast<double>(labeled));
  if (out.tracked()) {
    auto lab = std::make_shared<std::vector<int32_t>>(labels);
    record([probs, out, lab, rows, c, labeled]() mutable {
      const T g = out.cgptr()[0] / T(labeled);
      for (int64_t i = 0; i < rows; ++i) {
        const int32_t y = (*lab)[i];
        if (y < 0) continue;
        const T pv = probs.cptr()[i * c + y];
        if (pv >= T(kProbFloor)) probs.gptr()[i * c + y] -= g / pv;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> Tape<T>::moe_balance(const std::vector<Tensor<T>>& gates,
                               const std::vector<std::vector<uint8_t>>& selected, int64_t top_k) {
  check_input(!gates.empty() && gates.size() == selected.size(), "moe_balance: input mismatch");
  const int64_t n = gates[0].rows(), m = gates[0].cols();
  check_input(top_k >= 1 && top_k <= m, "moe_balance: bad top_k");
  const int64_t pairs = static_cast<int64_t>(gates.size()) * n;
  std::vector<double> gate_mean(m, 0.0), routed_frac(m, 0.0);
  bool any_tracked = false;
  for (size_t s = 0; s < gates.size(); ++s) {
    const auto& g = gates[s];
    check_input(g.rows() == n && g.cols() == m, "moe_balance: gate shape mismatch");
    check_input(static_cast<int64_t>(selected[s].size()) == n * m,
                "moe_balance: selection shape mismatch");
    any_tracked = any_tracked || g.tracked();
    for (int64_t i = 0; i < n; ++i) {
      int64_t picked = 0;
      for (int64_t e = 0; e < m; ++e) {
        gate_mean[e] += static_cast<double>(g.cptr()[i * m + e]);
        if (selected[s][i * m + e]) {
          routed_frac[e] += 1.0;
          ++picked;
        }
      }
      check_contract(picked == top_k, "moe_balance: row does not select top_k experts");
    }
  }
  double loss = 0;
  for (int64_t e = 0; e < m; ++e) {
    gate_mean[e] /= static_cast<double>(pairs);
    routed_frac[e] /= static_cast<double>(pairs * top_k);
    loss += gate_mean[e] * routed_frac[e];
  }
  Tensor<T> out = make_out({1}, any_tracked);
  out.ptr()[0] = static_cast<T>(loss);
  if (out.tracked()) {
    auto frac = std::make_shared<std::vector<double>>(routed_frac);
    auto gs = std::make_shared<std::vector<Tensor<T>>>(gates);
    record([gs, frac, out, n, m, pairs]() mutable {
      const T g0 = out.cgptr()[0];
      for (auto& g : *gs) {
        if (!g.tracked()) continue;
        for (int64_t i = 0; i < n; ++i)
          for (int64_t e = 0; e < m; ++e)
            g.gptr()[i * m + e] += g0 * static_cast<T>((*frac)[e] / static_cast<double>(pairs));
      }
    });
  }
  return out;
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  check_contract(grad_enabled_, "backward: gradients are disabled on this tape");
  check_contract(!used_, "backward: tape already replayed");
  check_contract(loss.numel() == 1 && loss.tracked(), "backward: loss must be a tracked scalar");
  used_ = true;
  (*loss.grad)[0] = T(1);
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  steps_.clear();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ntsf
