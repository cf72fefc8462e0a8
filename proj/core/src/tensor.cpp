#include "msan/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "msan/errors.hpp"

namespace msan {

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw ShapeError("tensor dims must be non-empty");
  data_.assign(shape_numel(dims_), 0.0);
}

Tensor::Tensor(Shape dims, Buffer data) : dims_(std::move(dims)), data_(std::move(data)) {
  if (dims_.empty()) throw ShapeError("tensor dims must be non-empty");
  if (data_.size() != shape_numel(dims_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                     shape_string(dims_));
  }
}

Tensor Tensor::filled(Shape dims, double value) {
  Tensor t(std::move(dims));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Buffer data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, Buffer(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_string(dims_));
  return dims_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_string(dims_));
  return dims_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(Shape dims) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(dims));
}

Tensor Tensor::reshaped(Shape dims) && {
  if (shape_numel(dims) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(dims_) + " to " + shape_string(dims));
  }
  return Tensor(std::move(dims), std::move(data_));
}

bool Tensor::bit_equal(const Tensor& other) const {
  return dims_ == other.dims_ &&
         (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> indices) {
  const std::size_t c = m.cols();
  Tensor out({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) throw ShapeError("row index out of range");
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one part");
  const std::size_t c = parts.front()->cols();
  std::size_t r = 0;
  for (const Tensor* p : parts) {
    if (p->cols() != c) {
      throw ShapeError("concat_rows column mismatch: " + shape_string(parts.front()->dims()) + " vs " +
                       shape_string(p->dims()));
    }
    r += p->rows();
  }
  Buffer data;
  data.reserve(r * c);
  for (const Tensor* p : parts) data.insert(data.end(), p->storage().begin(), p->storage().end());
  return Tensor({r, c}, std::move(data));
}

}  // namespace msan
