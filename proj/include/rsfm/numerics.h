#pragma once

// Central numeric tolerances shared by the library and its tests.

namespace rsfm::numerics {

constexpr double kPi = 3.14159265358979323846;

// Unit-vector normalization accuracy.
constexpr double kUnitNormTol = 1e-12;
// Ray parallel to a plane when |n . d| falls below this.
constexpr double kParallelTol = 1e-12;
// Two lines are parallel when |dA x dB| falls below this.
constexpr double kLineParallelTol = 1e-12;
// Dome decentering below which the model is exactly central (meters).
constexpr double kCentralEpsilon = 1e-9;

// Forward projection fixed-point iteration.
constexpr double kForwardProjectStepTol = 1e-8;  // pixels
constexpr int kForwardProjectMaxIters = 100;
constexpr int kForwardProjectGrowthLimit = 5;

// Distortion inversion in back-projection.
constexpr int kUndistortIters = 10;

// Polynomial root cleanup: imaginary parts below this are accepted as real.
constexpr double kRootImagTol = 1e-8;

// Sampson distance denominator guard.
constexpr double kSampsonEps = 1e-15;

// Triangulation.
constexpr double kDefaultMinTriangulationAngleDeg = 1.0;
// Essential decomposition ignores pairs whose rays subtend less than this (rad).
constexpr double kCheiralityMinParallax = 1e-4;

// Finite differences.
constexpr double kFiniteDiffRelStep = 1e-7;

constexpr double DegToRad(double deg) { return deg * kPi / 180.0; }
constexpr double RadToDeg(double rad) { return rad * 180.0 / kPi; }

}  // namespace rsfm::numerics
