#pragma once

#include <functional>

#include "obsmhe/core.hpp"

namespace obsmhe {

/// Controlled system  x' = f(x, u),  y = h(x, u)  with state Jacobians.
template <typename Scalar>
struct ControlSystem {
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;
  using VectorMap = std::function<Vec(const Vec&, const Vec&)>;
  using JacobianMap = std::function<Mat(const Vec&, const Vec&)>;

  int n_x = 0;
  int n_u = 0;
  int n_y = 0;
  VectorMap f;
  VectorMap h;
  JacobianMap df_dx;
  JacobianMap dh_dx;
  /// States where h is defined; empty means everywhere.
  std::function<bool(const Vec&)> domain_guard;

  bool in_domain(const Vec& x) const { return !domain_guard || domain_guard(x); }
};

/// Central finite-difference Jacobian of g(., u) at x.
template <typename Scalar, typename Map>
Matrix<Scalar> fd_jacobian(const Map& g, const Vector<Scalar>& x, const Vector<Scalar>& u, Scalar eps) {
  const Vector<Scalar> g0 = g(x, u);
  Matrix<Scalar> jac(g0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector<Scalar> xp = x;
    Vector<Scalar> xm = x;
    xp(j) += eps;
    xm(j) -= eps;
    jac.col(j) = (g(xp, u) - g(xm, u)) / (Scalar(2) * eps);
  }
  return jac;
}

}  // namespace obsmhe
