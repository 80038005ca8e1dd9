// SPDX-License-Identifier: Apache-2.0
#include "layerfreeze/svcca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lf::svcca {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kRankFloor = 1e-10;

Eigen::MatrixXd centred(const Matrix& m) {
  Eigen::Map<const RowMat> view(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                                static_cast<Eigen::Index>(m.cols()));
  Eigen::MatrixXd x = view;
  x.rowwise() -= x.colwise().mean();
  return x;
}

Matrix to_matrix(const Eigen::MatrixXd& e) {
  Matrix out(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) {
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = e(r, c);
    }
  }
  return out;
}

Eigen::Map<const RowMat> view(const Matrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

}  // namespace

Subspace reduce(const Matrix& activations, double variance_keep) {
  if (!(variance_keep > 0.0 && variance_keep <= 1.0)) {
    throw std::invalid_argument("variance_keep must lie in (0, 1]");
  }
  if (activations.empty()) throw std::invalid_argument("svcca: empty activation matrix");
  if (!activations.all_finite()) throw std::invalid_argument("svcca: non-finite activations");

  const Eigen::MatrixXd x = centred(activations);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU);
  const Eigen::VectorXd& sigma = svd.singularValues();
  if (sigma.size() == 0 || sigma(0) <= 0.0) {
    throw std::invalid_argument("svcca: activations have rank 0");
  }

  std::size_t rank = 0;
  while (rank < static_cast<std::size_t>(sigma.size()) &&
         sigma(static_cast<Eigen::Index>(rank)) >= kRankFloor * sigma(0)) {
    ++rank;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < rank; ++i) total += sigma(static_cast<Eigen::Index>(i)) * sigma(static_cast<Eigen::Index>(i));

  std::size_t kept = 0;
  double cum = 0.0;
  while (kept < rank) {
    const double s = sigma(static_cast<Eigen::Index>(kept));
    cum += s * s;
    ++kept;
    if (cum >= variance_keep * total * (1.0 - 1e-12)) break;
  }

  Subspace out;
  out.rank = rank;
  out.kept = kept;
  out.basis = to_matrix(svd.matrixU().leftCols(static_cast<Eigen::Index>(kept)));
  return out;
}

std::vector<double> canonical_correlations(const Matrix& a, const Matrix& b,
                                           double variance_keep) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("svcca: datapoint counts differ (" + std::to_string(a.rows()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  const Subspace sa = reduce(a, variance_keep);
  const Subspace sb = reduce(b, variance_keep);
  // With orthonormal bases of both subspaces, the canonical correlations are
  // the cosines of the principal angles, i.e. the singular values of Qa^T Qb.
  const Eigen::MatrixXd cross = view(sa.basis).transpose() * view(sb.basis);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross);
  std::vector<double> rho(static_cast<std::size_t>(svd.singularValues().size()));
  for (std::size_t i = 0; i < rho.size(); ++i) {
    rho[i] = std::clamp(svd.singularValues()(static_cast<Eigen::Index>(i)), 0.0, 1.0);
  }
  return rho;
}

double score(const Matrix& a, const Matrix& b, double variance_keep) {
  const auto rho = canonical_correlations(a, b, variance_keep);
  const double mean = std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(rho.size());
  return std::clamp(mean, 0.0, 1.0);
}

std::size_t prefix_count(std::span<const double> scores, double threshold) {
  std::size_t n = 0;
  while (n < scores.size() && scores[n] >= threshold) ++n;
  return n;
}

IdealSchedule ideal_schedule(const std::vector<std::vector<Matrix>>& checkpoints,
                             const std::vector<Matrix>& final_activations, double threshold,
                             double variance_keep) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("threshold must lie in (0, 1)");
  }
  IdealSchedule sched;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const auto& layers = checkpoints[c];
    if (layers.size() != final_activations.size()) {
      throw std::invalid_argument("checkpoint " + std::to_string(c) + " has " +
                                  std::to_string(layers.size()) + " layers, final model has " +
                                  std::to_string(final_activations.size()));
    }
    std::vector<double> s;
    s.reserve(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      s.push_back(score(layers[l], final_activations[l], variance_keep));
    }
    sched.frozen_counts.push_back(prefix_count(s, threshold));
    sched.scores.push_back(std::move(s));
  }
  return sched;
}

}  // namespace lf::svcca
