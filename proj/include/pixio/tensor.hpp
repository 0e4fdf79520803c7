#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "pixio/common.hpp"

namespace pixio::inline PIXIO_PRECISION_NS {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage so vectorized kernels take the same path on every
/// allocation and results are bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using RealBuffer = std::vector<real, AlignedAllocator<real>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of `real` values.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, const std::vector<real>& data);
  Tensor(Shape shape, RealBuffer data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(real v) { return Tensor(Shape{}, std::vector<real>{v}); }
  static Tensor from(std::initializer_list<std::size_t> shape, std::initializer_list<real> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Size of the trailing axis; the tensor is viewed as rows() x cols().
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  std::span<real> values() { return data_; }
  std::span<const real> values() const { return data_; }
  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  RealBuffer& storage() { return data_; }
  const RealBuffer& storage() const { return data_; }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }
  real item() const;

  /// Same data, different shape with identical element count.
  Tensor reshaped(Shape shape) const;
  void fill(real v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  RealBuffer data_;
};

}  // namespace pixio::inline PIXIO_PRECISION_NS
