// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "layerfreeze/matrix.hpp"

namespace lf::kernels::detail {

inline void check_forward(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  if (x.cols() != w.cols()) {
    throw ShapeError("dense_forward: input width " + std::to_string(x.cols()) +
                     " does not match weight width " + std::to_string(w.cols()));
  }
  if (bias.size() != w.rows()) {
    throw ShapeError("dense_forward: bias length " + std::to_string(bias.size()) +
                     " does not match " + std::to_string(w.rows()) + " outputs");
  }
}

inline void check_same_batch(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows()) {
    throw ShapeError(std::string(what) + ": batch sizes differ (" + std::to_string(a.rows()) +
                     " vs " + std::to_string(b.rows()) + ")");
  }
}

inline void check_input_grad(const Matrix& delta, const Matrix& w) {
  if (delta.cols() != w.rows()) {
    throw ShapeError("input_grad: delta width " + std::to_string(delta.cols()) +
                     " does not match " + std::to_string(w.rows()) + " outputs");
  }
}

}  // namespace lf::kernels::detail
