#include "rsfm/polynomial.h"

#include <algorithm>
#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>

#include "rsfm/numerics.h"

namespace rsfm {

Poly PolyAdd(const Poly& a, const Poly& b) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

Poly PolySub(const Poly& a, const Poly& b) { return PolyAdd(a, PolyScale(b, -1.0)); }

Poly PolyMul(const Poly& a, const Poly& b) {
  if (a.empty() || b.empty()) return {};
  Poly out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

Poly PolyScale(const Poly& a, double s) {
  Poly out(a);
  for (double& c : out) c *= s;
  return out;
}

double PolyEval(const Poly& p, double x) {
  double v = 0.0;
  for (size_t i = p.size(); i-- > 0;) v = v * x + p[i];
  return v;
}

Poly PolyDerivative(const Poly& p) {
  if (p.size() <= 1) return {0.0};
  Poly d(p.size() - 1);
  for (size_t i = 1; i < p.size(); ++i) d[i - 1] = static_cast<double>(i) * p[i];
  return d;
}

std::vector<double> PolyRealRoots(const Poly& p) {
  double max_abs = 0.0;
  for (double c : p) max_abs = std::max(max_abs, std::abs(c));
  if (!(max_abs > 0.0) || !std::isfinite(max_abs)) return {};

  // Drop vanishing leading coefficients.
  int deg = static_cast<int>(p.size()) - 1;
  while (deg > 0 && std::abs(p[deg]) <= 1e-14 * max_abs) --deg;
  if (deg == 0) return {};

  // Factor out roots at zero so the companion matrix stays well defined.
  int zeros = 0;
  while (zeros < deg && p[zeros] == 0.0) ++zeros;
  const int n = deg - zeros;

  std::vector<double> roots;
  if (zeros > 0) roots.push_back(0.0);
  if (n == 0) return roots;
  if (n == 1) {
    roots.push_back(-p[zeros] / p[zeros + 1]);
    return roots;
  }

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
  companion.diagonal(-1).setOnes();
  for (int i = 0; i < n; ++i) companion(i, n - 1) = -p[zeros + i] / p[deg];
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  if (solver.info() != Eigen::Success) return roots;

  const Poly dp = PolyDerivative(p);
  for (int i = 0; i < n; ++i) {
    const std::complex<double> z = solver.eigenvalues()[i];
    if (std::abs(z.imag()) > numerics::kRootImagTol * std::max(1.0, std::abs(z))) continue;
    double x = z.real();
    for (int it = 0; it < 3; ++it) {
      const double d = PolyEval(dp, x);
      if (d == 0.0) break;
      const double step = PolyEval(p, x) / d;
      if (!std::isfinite(step) || std::abs(step) > 1e-3 * std::max(1.0, std::abs(x))) break;
      x -= step;
    }
    roots.push_back(x);
  }
  return roots;
}

}  // namespace rsfm
