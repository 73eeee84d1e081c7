#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

namespace dsal {

// Dense row-major float32 tensor. The shape is bookkeeping; compute kernels
// take raw pointers plus explicit dims. Freshly reset tensors are zeroed
// unless the caller asks for uninitialized storage because the kernel fully
// overwrites it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape) { reset(std::move(shape)); }

  Tensor(const Tensor& o) { *this = o; }
  Tensor& operator=(const Tensor& o) {
    if (this != &o) {
      reset_uninit(o.shape_);
      std::memcpy(data_.get(), o.data_.get(),
                  sizeof(float) * static_cast<size_t>(numel_));
    }
    return *this;
  }
  Tensor(Tensor&&) = default;
  Tensor& operator=(Tensor&&) = default;

  void reset(std::vector<int64_t> shape) {
    reset_uninit(std::move(shape));
    fill(0.0f);
  }

  void reset_uninit(std::vector<int64_t> shape) {
    shape_ = std::move(shape);
    int64_t n = 1;
    for (int64_t d : shape_) n *= d;
    if (n != numel_ || !data_) {
      data_ = std::make_unique_for_overwrite<float[]>(static_cast<size_t>(n));
      numel_ = n;
    }
  }

  float* data() { return data_.get(); }
  const float* data() const { return data_.get(); }
  int64_t numel() const { return numel_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int64_t>& shape() const { return shape_; }
  void fill(float v) { std::fill(data_.get(), data_.get() + numel_, v); }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); i++) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  std::vector<int64_t> shape_;
  std::unique_ptr<float[]> data_;
  int64_t numel_ = 0;
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(std::vector<int64_t> shape) {
  return std::make_shared<Tensor>(std::move(shape));
}

// For outputs the kernel writes in full.
inline TensorPtr make_tensor_uninit(std::vector<int64_t> shape) {
  auto t = std::make_shared<Tensor>();
  t->reset_uninit(std::move(shape));
  return t;
}

}  // namespace dsal
