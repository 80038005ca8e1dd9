// SPDX-License-Identifier: Apache-2.0
#include <stdexcept>

#include "layerfreeze/trainer.hpp"

namespace lf::harness {

double lr_at(LrSchedule schedule, std::size_t iteration, std::size_t total_iterations,
             double base_lr, double decay_factor, const std::vector<double>& decay_points) {
  if (iteration >= total_iterations) {
    throw std::out_of_range("lr_at: iteration " + std::to_string(iteration) + " of " +
                            std::to_string(total_iterations));
  }
  if (schedule == LrSchedule::Constant) return base_lr;
  const double progress = static_cast<double>(iteration) / static_cast<double>(total_iterations);
  double lr = base_lr;
  for (double p : decay_points) {
    if (progress >= p) lr *= decay_factor;
  }
  return lr;
}

double lr_at(const TrainConfig& train, std::size_t iteration, std::size_t total_iterations) {
  return lr_at(train.schedule, iteration, total_iterations, train.lr, train.decay_factor,
               train.decay_points);
}

}  // namespace lf::harness
