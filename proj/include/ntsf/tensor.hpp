#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ntsf/common.hpp"

namespace ntsf {

// Dense row-major tensor. data/grad are shared so copies alias the same
// storage; the tape relies on that to accumulate gradients in place.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;  // null when the tensor is not tracked

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool tracked = false) {
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<T>>(static_cast<size_t>(numel_of(t.shape)), T(0));
    if (tracked) t.grad = std::make_shared<std::vector<T>>(t.data->size(), T(0));
    return t;
  }

  static Tensor from(std::vector<int64_t> shape, std::vector<T> values, bool tracked = false) {
    Tensor t;
    t.shape = std::move(shape);
    check_input(numel_of(t.shape) == static_cast<int64_t>(values.size()),
                "tensor: value count does not match shape");
    t.data = std::make_shared<std::vector<T>>(std::move(values));
    if (tracked) t.grad = std::make_shared<std::vector<T>>(t.data->size(), T(0));
    return t;
  }

  int64_t numel() const { return data ? static_cast<int64_t>(data->size()) : 0; }
  // Trailing dimension; tensors are handled as (rows x cols) matrices.
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
  int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  // Buffers are shared; constness of the handle is shallow.
  T* ptr() const { return data->data(); }
  const T* cptr() const { return data->data(); }
  T* gptr() const { return grad->data(); }
  const T* cgptr() const { return grad->data(); }
  bool tracked() const { return grad != nullptr; }

  void ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<T>>(data->size(), T(0));
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }

  T item() const {
    check_input(numel() == 1, "tensor: item() requires a scalar");
    return (*data)[0];
  }

  static int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
};

// A named learnable tensor. Names must be unique within a model; the
// checkpoint format and the optimizer both key on them.
template <typename T>
struct Parameter {
  Tensor<T> tensor;
  std::string name;
  bool trainable = true;
};

}  // namespace ntsf
