#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "obsmhe/core.hpp"

namespace obsmhe {

template <typename Scalar>
struct SymmetricEigen {
  Vector<Scalar> values;   // ascending
  Matrix<Scalar> vectors;  // column k pairs with values(k)
  int sweeps = 0;
};

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix (the input is
/// symmetrized first). Throws EigFailure if the off-diagonal mass does not
/// vanish within `max_sweeps` sweeps.
template <typename Scalar>
SymmetricEigen<Scalar> jacobi_eigen(const Matrix<Scalar>& input, int max_sweeps = 100) {
  using std::abs;
  using std::sqrt;
  require(input.rows() == input.cols(), ErrorKind::InvalidArgument, "Jacobi needs a square matrix");
  const Eigen::Index n = input.rows();
  Matrix<Scalar> a = (input + input.transpose()) / Scalar(2);
  Matrix<Scalar> v = Matrix<Scalar>::Identity(n, n);

  const Scalar scale = a.cwiseAbs().maxCoeff();
  const Scalar eps = Eigen::NumTraits<Scalar>::epsilon();
  int sweep = 0;
  auto off_norm = [&]() {
    Scalar s(0);
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += a(p, q) * a(p, q);
    return sqrt(s);
  };

  if (scale > Scalar(0)) {
    while (off_norm() > eps * scale) {
      require(sweep < max_sweeps, ErrorKind::EigFailure, "Jacobi iteration did not converge");
      ++sweep;
      for (Eigen::Index p = 0; p < n - 1; ++p) {
        for (Eigen::Index q = p + 1; q < n; ++q) {
          const Scalar apq = a(p, q);
          if (apq == Scalar(0)) continue;
          if (abs(apq) < eps * eps * scale) {
            a(p, q) = a(q, p) = Scalar(0);
            continue;
          }
          const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
          const Scalar sign = theta >= Scalar(0) ? Scalar(1) : Scalar(-1);
          const Scalar t = sign / (abs(theta) + sqrt(theta * theta + Scalar(1)));
          const Scalar c = Scalar(1) / sqrt(t * t + Scalar(1));
          const Scalar s = t * c;
          for (Eigen::Index k = 0; k < n; ++k) {
            const Scalar akp = a(k, p);
            const Scalar akq = a(k, q);
            a(k, p) = c * akp - s * akq;
            a(k, q) = s * akp + c * akq;
          }
          for (Eigen::Index k = 0; k < n; ++k) {
            const Scalar apk = a(p, k);
            const Scalar aqk = a(q, k);
            a(p, k) = c * apk - s * aqk;
            a(q, k) = s * apk + c * aqk;
          }
          a(p, q) = a(q, p) = Scalar(0);
          for (Eigen::Index k = 0; k < n; ++k) {
            const Scalar vkp = v(k, p);
            const Scalar vkq = v(k, q);
            v(k, p) = c * vkp - s * vkq;
            v(k, q) = s * vkp + c * vkq;
          }
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });

  SymmetricEigen<Scalar> out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  out.sweeps = sweep;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    Vector<Scalar> col = v.col(src);
    // Deterministic sign: largest-magnitude component positive.
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    if (col(imax) < Scalar(0)) col = -col;
    out.vectors.col(k) = col;
  }
  return out;
}

}  // namespace obsmhe
