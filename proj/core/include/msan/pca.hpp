#pragma once

#include <vector>

#include "msan/tensor.hpp"

namespace msan::io {

struct Projection {
  Tensor scores;                     // [n x components]
  Tensor components;                 // [components x d], unit rows
  std::vector<double> eigenvalues;   // descending
  std::vector<double> mean;
};

/// Principal components of the rows of `x` (centred on their mean).
/// Components come in descending eigenvalue order; each is signed so that
/// its largest-magnitude coordinate is positive.
Projection pca_project(const Tensor& x, std::size_t components = 2);

}  // namespace msan::io
