#include "obsmhe/bearing.hpp"

#include <cmath>

namespace obsmhe::bearing {

EigenPair circ_eigs(double T, double omega, double r0) {
  require(T > 0.0 && omega > 0.0 && r0 > 0.0, ErrorKind::InvalidArgument, "circ_eigs needs positive T, omega, r0");
  const double base = 1.0 / (2.0 * r0 * r0);
  const double osc = std::abs(std::sin(omega * T)) / omega;
  return {base * (T - osc), base * (T + osc)};
}

EigenPair spi_eigs(double t, double T, double omega, double alpha, double r0) {
  require(T > 0.0 && omega > 0.0 && alpha > 0.0 && r0 > 0.0 && t >= T, ErrorKind::InvalidArgument,
          "spi_eigs needs positive parameters and t >= T");
  const double r = r0 * std::exp(alpha * (t - T));
  const double e2 = std::exp(2.0 * T * alpha);
  const double e4 = std::exp(4.0 * T * alpha);
  const double b = alpha / std::hypot(alpha, omega) * std::sqrt(e4 - 2.0 * e2 * std::cos(2.0 * T * omega) + 1.0);
  const double scale = 1.0 / (4.0 * alpha * r * r);
  return {scale * (e2 - 1.0 - b), scale * (e2 - 1.0 + b)};
}

EigenPair spi_eigs_exact(double t, double T, double omega, double alpha, double r0) {
  require(T > 0.0 && omega > 0.0 && alpha > 0.0 && r0 > 0.0 && t >= T, ErrorKind::InvalidArgument,
          "spi_eigs_exact needs positive parameters and t >= T");
  const double r = r0 * std::exp(alpha * (t - T));
  const double em2 = std::exp(-2.0 * alpha * T);
  const double mean = -std::expm1(-2.0 * alpha * T) / alpha;
  const double osc = std::sqrt(1.0 - 2.0 * em2 * std::cos(2.0 * omega * T) + em2 * em2) / std::hypot(alpha, omega);
  const double scale = 1.0 / (4.0 * r * r);
  return {scale * (mean - osc), scale * (mean + osc)};
}

double spi_positivity_horizon(double omega, double alpha) {
  require(omega > 0.0 && alpha > 0.0, ErrorKind::InvalidArgument, "omega and alpha must be positive");
  const double rho = std::hypot(alpha, omega);
  return std::log((rho + alpha) / (rho - alpha)) / (2.0 * alpha);
}

}  // namespace obsmhe::bearing
