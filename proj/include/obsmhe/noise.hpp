#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "obsmhe/random.hpp"
#include "obsmhe/signal.hpp"

namespace obsmhe {

/// Sample-and-hold constructors on [0, t_end] with hold length `hold`.

inline SampledSignal<double> constant_signal(const Eigen::VectorXd& value, double t_end, double hold) {
  const Eigen::Index k = SampledSignal<double>::sample_count(0.0, t_end, hold);
  return SampledSignal<double>(0.0, hold, value.replicate(1, k));
}

/// Each sample is drawn uniformly from the closed ball of radius `amplitude`,
/// so the sup norm never exceeds it.
inline SampledSignal<double> uniform_signal(int dim, double amplitude, double t_end, double hold, Rng& rng) {
  const Eigen::Index k = SampledSignal<double>::sample_count(0.0, t_end, hold);
  Eigen::MatrixXd samples(dim, k);
  for (Eigen::Index j = 0; j < k; ++j) samples.col(j) = rng.in_ball(dim, amplitude);
  return SampledSignal<double>(0.0, hold, samples);
}

/// amplitude * sin(2 pi f s + phase), sampled at the left end of each hold interval.
inline SampledSignal<double> sinusoid_signal(const Eigen::VectorXd& amplitude, double frequency, double phase,
                                             double t_end, double hold) {
  const Eigen::Index k = SampledSignal<double>::sample_count(0.0, t_end, hold);
  Eigen::MatrixXd samples(amplitude.size(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double s = static_cast<double>(j) * hold;
    samples.col(j) = amplitude * std::sin(2.0 * std::numbers::pi * frequency * s + phase);
  }
  return SampledSignal<double>(0.0, hold, samples);
}

}  // namespace obsmhe
