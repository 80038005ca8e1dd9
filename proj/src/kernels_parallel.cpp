// SPDX-License-Identifier: Apache-2.0
#include <cstdint>

#include "kernel_checks.hpp"
#include "layerfreeze/kernels.hpp"

#ifdef LF_HAVE_OPENMP
#include <omp.h>
#endif

namespace lf::kernels {

namespace {
// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::int64_t kParallelThreshold = 1 << 14;
}  // namespace

namespace parallel {

Matrix dense_forward(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  detail::check_forward(x, w, bias);
  const std::int64_t batch = static_cast<std::int64_t>(x.rows());
  const std::int64_t in = static_cast<std::int64_t>(x.cols());
  const std::int64_t out = static_cast<std::int64_t>(w.rows());
  Matrix y(x.rows(), w.rows());
  const double* xp = x.values().data();
  const double* wp = w.values().data();
  double* yp = y.values().data();

#pragma omp parallel for collapse(2) schedule(static) if (batch * in * out > kParallelThreshold)
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < out; ++i) {
      const double* xr = xp + b * in;
      const double* wr = wp + i * in;
      double acc = 0.0;
      for (std::int64_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
      yp[b * out + i] = acc + bias[static_cast<std::size_t>(i)];
    }
  }
  return y;
}

Matrix weight_grad(const Matrix& delta, const Matrix& x) {
  detail::check_same_batch(delta, x, "weight_grad");
  const std::int64_t batch = static_cast<std::int64_t>(x.rows());
  const std::int64_t in = static_cast<std::int64_t>(x.cols());
  const std::int64_t out = static_cast<std::int64_t>(delta.cols());
  Matrix dw(delta.cols(), x.cols());
  const double* dp = delta.values().data();
  const double* xp = x.values().data();
  double* gp = dw.values().data();

#pragma omp parallel for collapse(2) schedule(static) if (batch * in * out > kParallelThreshold)
  for (std::int64_t i = 0; i < out; ++i) {
    for (std::int64_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::int64_t b = 0; b < batch; ++b) acc += dp[b * out + i] * xp[b * in + k];
      gp[i * in + k] = acc;
    }
  }
  return dw;
}

std::vector<double> bias_grad(const Matrix& delta) {
  const std::int64_t batch = static_cast<std::int64_t>(delta.rows());
  const std::int64_t out = static_cast<std::int64_t>(delta.cols());
  std::vector<double> db(delta.cols(), 0.0);
  const double* dp = delta.values().data();

#pragma omp parallel for schedule(static) if (batch * out > kParallelThreshold)
  for (std::int64_t i = 0; i < out; ++i) {
    double acc = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) acc += dp[b * out + i];
    db[static_cast<std::size_t>(i)] = acc;
  }
  return db;
}

Matrix input_grad(const Matrix& delta, const Matrix& w) {
  detail::check_input_grad(delta, w);
  const std::int64_t batch = static_cast<std::int64_t>(delta.rows());
  const std::int64_t in = static_cast<std::int64_t>(w.cols());
  const std::int64_t out = static_cast<std::int64_t>(w.rows());
  Matrix dx(delta.rows(), w.cols());
  const double* dp = delta.values().data();
  const double* wp = w.values().data();
  double* xp = dx.values().data();

#pragma omp parallel for collapse(2) schedule(static) if (batch * in * out > kParallelThreshold)
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t k = 0; k < in; ++k) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < out; ++i) acc += dp[b * out + i] * wp[i * in + k];
      xp[b * in + k] = acc;
    }
  }
  return dx;
}

}  // namespace parallel

int max_threads() {
#ifdef LF_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef LF_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace lf::kernels
