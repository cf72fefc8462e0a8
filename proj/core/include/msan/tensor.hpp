#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace msan {

using Shape = std::vector<std::size_t>;

/// Allocates on 64-byte boundaries. Vectorised reductions peel a scalar
/// prologue up to the first aligned element, so without a fixed alignment
/// the summation order, and hence the last bits, depend on heap layout.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& dims);
std::string shape_string(const Shape& dims);

/// Dense row-major array of doubles.
///
/// `dims` is never empty. Extents may be zero so that empty batches flow
/// through the same code paths as non-empty ones.
class Tensor {
 public:
  Tensor() : dims_{1}, data_(1, 0.0) {}
  explicit Tensor(Shape dims);
  Tensor(Shape dims, Buffer data);
  Tensor(Shape dims, const std::vector<double>& data) : Tensor(std::move(dims), Buffer(data.begin(), data.end())) {}

  static Tensor zeros(Shape dims) { return Tensor(std::move(dims)); }
  static Tensor filled(Shape dims, double value);
  static Tensor scalar(double value) { return Tensor({1}, Buffer{value}); }
  /// Builds a rows x cols matrix from nested initializer lists.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  /// Matrix view helpers; valid for rank-2 tensors.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const Buffer& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  /// Same data, new dims; numel must agree.
  Tensor reshaped(Shape dims) const&;
  Tensor reshaped(Shape dims) &&;

  /// Bitwise equality of dims and payload.
  bool bit_equal(const Tensor& other) const;

 private:
  Shape dims_;
  Buffer data_;
};

/// Copies rows `indices` of a rank-2 tensor into a new matrix.
Tensor gather_rows(const Tensor& m, std::span<const std::size_t> indices);
/// Stacks rank-2 tensors with equal column counts.
Tensor concat_rows(std::span<const Tensor* const> parts);

}  // namespace msan
