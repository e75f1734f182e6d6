#pragma once

#include "talkhead/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace talkhead {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

/// Formats a shape the way the architecture tables print it: "8 × 256 × 256".
inline std::string shape_string(const Shape &shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      out += " × ";
    out += std::to_string(shape[i]);
  }
  return out;
}

/// 64-byte aligned storage. Eigen's vectorized kernels peel unaligned heads,
/// so the summation order (and the float result) would otherwise depend on
/// where the allocator happened to place a buffer.
template <typename T> struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U> AlignedAllocator(const AlignedAllocator<U> &) noexcept {}

  T *allocate(std::size_t n) { return static_cast<T *>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T *p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  friend bool operator==(const AlignedAllocator &, const AlignedAllocator &) { return true; }
};

template <typename T> using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major array. Images and feature maps are channels-first (C×H×W).
template <typename T> class BasicTensor {
public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_extents();
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), fill);
  }

  BasicTensor(Shape shape, const std::vector<T> &data)
      : BasicTensor(std::move(shape), AlignedVector<T>(data.begin(), data.end()), 0) {}

  static BasicTensor from_storage(Shape shape, AlignedVector<T> data) {
    return BasicTensor(std::move(shape), std::move(data), 0);
  }

private:
  BasicTensor(Shape shape, AlignedVector<T> data, int)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_extents();
    require(static_cast<std::int64_t>(data_.size()) == shape_size(shape_),
            ErrorKind::shape,
            "tensor data length " + std::to_string(data_.size()) +
                " does not match shape " + shape_string(shape_));
  }

public:
  const Shape &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T *raw() noexcept { return data_.data(); }
  const T *raw() const noexcept { return data_.data(); }
  AlignedVector<T> &storage() noexcept { return data_; }
  const AlignedVector<T> &storage() const noexcept { return data_; }

  T &operator[](std::size_t i) noexcept { return data_[i]; }
  const T &operator[](std::size_t i) const noexcept { return data_[i]; }

  // C×H×W accessors; callers guarantee rank 3.
  T &at(std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }
  const T &at(std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[static_cast<std::size_t>((c * shape_[1] + y) * shape_[2] + x)];
  }

  BasicTensor reshaped(Shape shape) const {
    require(shape_size(shape) == shape_size(shape_), ErrorKind::shape,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return from_storage(std::move(shape), data_);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T{0}); }

  template <typename U> BasicTensor<U> cast() const {
    AlignedVector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>::from_storage(shape_, std::move(out));
  }

  BasicTensor &operator+=(const BasicTensor &other) {
    require(shape_ == other.shape_, ErrorKind::shape,
            "accumulate " + shape_string(other.shape_) + " into " + shape_string(shape_));
    for (std::size_t i = 0; i < data_.size(); ++i)
      data_[i] += other.data_[i];
    return *this;
  }

  friend bool operator==(const BasicTensor &a, const BasicTensor &b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  void validate_extents() const {
    for (auto extent : shape_)
      require(extent > 0, ErrorKind::shape,
              "tensor extents must be positive, got " + shape_string(shape_));
  }

  Shape shape_;
  AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

} // namespace talkhead
