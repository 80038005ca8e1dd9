// SPDX-License-Identifier: Apache-2.0
#pragma once

// SVCCA similarity between two layer representations.
//
// Each representation is a datapoints x neurons activation matrix collected on
// the same probe inputs. Columns are mean-centred, each matrix is reduced to
// the leading singular directions that explain `variance_keep` of its variance
// (directions with sigma < 1e-10 * sigma_max are always dropped), and the
// canonical correlations between the two reduced subspaces are averaged. The
// result lies in [0, 1] and is invariant to invertible linear maps of either
// representation when nothing is truncated.

#include <cstddef>
#include <span>
#include <vector>

#include "layerfreeze/matrix.hpp"

namespace lf::svcca {

struct Subspace {
  Matrix basis;        // datapoints x kept, orthonormal columns
  std::size_t kept = 0;
  std::size_t rank = 0;  // directions above the numerical floor
};

/// Centres, truncates and returns an orthonormal basis of the kept directions.
/// Throws std::invalid_argument for rank-0 (e.g. all-zero) activations.
Subspace reduce(const Matrix& activations, double variance_keep);

/// All canonical correlations between the two reduced subspaces, descending.
std::vector<double> canonical_correlations(const Matrix& a, const Matrix& b,
                                           double variance_keep = 0.99);

/// Mean canonical correlation, clamped to [0, 1].
double score(const Matrix& a, const Matrix& b, double variance_keep = 0.99);

/// More datapoints than neurons is needed for a meaningful score.
inline bool well_posed(const Matrix& a) { return a.rows() > a.cols(); }

struct IdealSchedule {
  std::vector<std::size_t> frozen_counts;   // one per checkpoint
  std::vector<std::vector<double>> scores;  // [checkpoint][layer]
};

/// Length of the longest prefix whose scores are all >= threshold.
std::size_t prefix_count(std::span<const double> scores, double threshold);

/// Scores each checkpoint's per-layer activations against the final model's and
/// counts, per checkpoint, the leading layers at or above the threshold.
IdealSchedule ideal_schedule(const std::vector<std::vector<Matrix>>& checkpoints,
                             const std::vector<Matrix>& final_activations, double threshold,
                             double variance_keep = 0.99);

}  // namespace lf::svcca
