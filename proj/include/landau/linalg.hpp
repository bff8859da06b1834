#pragma once

// Thin LAPACK layer: dense Hermitian eigensolver (zheevd) and inertia by
// Bunch-Kaufman factorization (zhetrf).

#include <algorithm>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

#include "landau/common.hpp"

namespace landau::linalg {

struct Eigensystem {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXcd vectors;  // columns, orthonormal
};

inline Eigen::VectorXd hermitian_eigenvalues(Eigen::MatrixXcd a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Eigen::VectorXd w(n);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'L', n, a.data(), n, w.data());
  if (info != 0) throw NumericalError("zheevd failed, info = " + std::to_string(info));
  return w;
}

inline Eigensystem hermitian_eigensystem(Eigen::MatrixXcd a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Eigensystem out;
  out.values.resize(n);
  if (n > 0) {
    const lapack_int info =
        LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'L', n, a.data(), n, out.values.data());
    if (info != 0) throw NumericalError("zheevd failed, info = " + std::to_string(info));
  }
  out.vectors = std::move(a);
  return out;
}

/// All eigenvalues, but eigenvectors only for the lowest `m` (zheevr).
inline Eigensystem hermitian_lowest(Eigen::MatrixXcd a, std::size_t m) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  Eigensystem out;
  out.values = hermitian_eigenvalues(a);
  const lapack_int keep = static_cast<lapack_int>(std::min<std::size_t>(m, static_cast<std::size_t>(n)));
  out.vectors.resize(n, keep);
  if (keep == 0) return out;
  Eigen::VectorXd w(n);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(keep));
  lapack_int found = 0;
  const lapack_int info = LAPACKE_zheevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, a.data(), n, 0.0, 0.0, 1, keep, 0.0,
                                         &found, w.data(), out.vectors.data(), n, support.data());
  if (info != 0 || found != keep) throw NumericalError("zheevr failed, info = " + std::to_string(info));
  return out;
}

/// Number of negative eigenvalues of A - shift I, or nullopt when the
/// factorization meets an exactly (or numerically) vanishing pivot.
inline std::optional<std::size_t> negative_inertia(const Eigen::MatrixXcd& a, double shift) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  if (n == 0) return 0;
  Eigen::MatrixXcd f = a;
  f.diagonal().array() -= shift;
  const double scale = std::max(1.0, f.cwiseAbs().maxCoeff());
  std::vector<lapack_int> ipiv(static_cast<std::size_t>(n));
  const lapack_int info = LAPACKE_zhetrf(LAPACK_COL_MAJOR, 'L', n, f.data(), n, ipiv.data());
  if (info < 0) throw NumericalError("zhetrf: bad argument " + std::to_string(-info));
  if (info > 0) return std::nullopt;
  const double tiny = 1e-14 * scale;
  std::size_t negatives = 0;
  for (lapack_int k = 0; k < n;) {
    if (ipiv[static_cast<std::size_t>(k)] > 0) {
      const double d = f(k, k).real();
      if (std::abs(d) <= tiny) return std::nullopt;
      negatives += d < 0.0 ? 1 : 0;
      k += 1;
    } else {
      const double d11 = f(k, k).real();
      const double d22 = f(k + 1, k + 1).real();
      const double off = std::norm(f(k + 1, k));
      const double det = d11 * d22 - off;
      if (std::abs(det) <= tiny * tiny) return std::nullopt;
      if (det < 0.0) negatives += 1;
      else if (d11 + d22 < 0.0) negatives += 2;
      k += 2;
    }
  }
  return negatives;
}

}  // namespace landau::linalg
