// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense-layer kernels in two flavours.
//
// `serial` is the reference implementation and is kept for testing. `parallel`
// splits work across OpenMP threads by output element only; every output value
// is still produced by one thread with the same left-to-right accumulation, so
// both flavours return bit-identical results. The network engine always calls
// `parallel`; without OpenMP it degrades to the same loops run on one thread.
//
// Shapes: x is batch x in, w is out x in (one row per output unit),
// delta is batch x out.

#include <span>

#include "layerfreeze/matrix.hpp"

namespace lf::kernels {

namespace serial {
/// out[b][i] = (sum_k x[b][k] * w[i][k]) + bias[i]
Matrix dense_forward(const Matrix& x, const Matrix& w, std::span<const double> bias);
/// dw[i][k] = sum_b delta[b][i] * x[b][k]
Matrix weight_grad(const Matrix& delta, const Matrix& x);
/// db[i] = sum_b delta[b][i]
std::vector<double> bias_grad(const Matrix& delta);
/// dx[b][k] = sum_i delta[b][i] * w[i][k]
Matrix input_grad(const Matrix& delta, const Matrix& w);
}  // namespace serial

namespace parallel {
Matrix dense_forward(const Matrix& x, const Matrix& w, std::span<const double> bias);
Matrix weight_grad(const Matrix& delta, const Matrix& x);
std::vector<double> bias_grad(const Matrix& delta);
Matrix input_grad(const Matrix& delta, const Matrix& w);
}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace lf::kernels
