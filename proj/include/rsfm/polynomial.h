#pragma once

#include <vector>

namespace rsfm {

// Univariate polynomial, coefficients in ascending order of degree.
using Poly = std::vector<double>;

Poly PolyAdd(const Poly& a, const Poly& b);
Poly PolySub(const Poly& a, const Poly& b);
Poly PolyMul(const Poly& a, const Poly& b);
Poly PolyScale(const Poly& a, double s);
double PolyEval(const Poly& p, double x);
Poly PolyDerivative(const Poly& p);

// Real roots via companion-matrix eigenvalues. Roots with an imaginary part
// below numerics::kRootImagTol (relative to max(1, |root|)) are accepted and
// polished by a few Newton steps.
std::vector<double> PolyRealRoots(const Poly& p);

}  // namespace rsfm
