// SPDX-License-Identifier: Apache-2.0
#include "kernel_checks.hpp"
#include "layerfreeze/kernels.hpp"

namespace lf::kernels::serial {

Matrix dense_forward(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  detail::check_forward(x, w, bias);
  const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
  Matrix y(batch, out);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.values().data() + b * in;
    for (std::size_t i = 0; i < out; ++i) {
      const double* wr = w.values().data() + i * in;
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
      y(b, i) = acc + bias[i];
    }
  }
  return y;
}

Matrix weight_grad(const Matrix& delta, const Matrix& x) {
  detail::check_same_batch(delta, x, "weight_grad");
  const std::size_t batch = x.rows(), in = x.cols(), out = delta.cols();
  Matrix dw(out, in);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) acc += delta(b, i) * x(b, k);
      dw(i, k) = acc;
    }
  }
  return dw;
}

std::vector<double> bias_grad(const Matrix& delta) {
  std::vector<double> db(delta.cols(), 0.0);
  for (std::size_t i = 0; i < delta.cols(); ++i) {
    double acc = 0.0;
    for (std::size_t b = 0; b < delta.rows(); ++b) acc += delta(b, i);
    db[i] = acc;
  }
  return db;
}

Matrix input_grad(const Matrix& delta, const Matrix& w) {
  detail::check_input_grad(delta, w);
  const std::size_t batch = delta.rows(), in = w.cols(), out = w.rows();
  Matrix dx(batch, in);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < out; ++i) acc += delta(b, i) * w(i, k);
      dx(b, k) = acc;
    }
  }
  return dx;
}

}  // namespace lf::kernels::serial
