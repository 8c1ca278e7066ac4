#pragma once

#include <vector>

#include "rsfm/camera.h"
#include "rsfm/geometry.h"
#include "rsfm/status.h"

namespace rsfm {

// Observation ray (camera frame) of a known world point.
struct RayPointCorrespondence {
  Ray ray;
  Vector3 world = Vector3::Zero();
};

// Pixel correspondence with cached normalized coordinates (x, y, 1).
struct PixelPair {
  Vector2 pixel_a = Vector2::Zero();
  Vector2 pixel_b = Vector2::Zero();
  Vector3 x_a = Vector3::UnitZ();
  Vector3 x_b = Vector3::UnitZ();

  static PixelPair FromNormalized(const Vector3& x_a, const Vector3& x_b);
};

// Central P3P: rays share a common origin. Returned poses are camera-from-world
// and keep only candidates with positive depths.
Expected<std::vector<SE3Pose>> SolveP3P(const std::vector<RayPointCorrespondence>& corrs);

// Generalized P3P over rays with distinct origins (up to 8 candidates).
Expected<std::vector<SE3Pose>> SolveGP3P(const std::vector<RayPointCorrespondence>& corrs);

// Five-point essential matrix solver; x_b^T E x_a = 0. Returned matrices
// have unit Frobenius norm.
Expected<std::vector<Matrix3>> SolveFivePoint(const std::vector<PixelPair>& pairs);

// Picks the (R, t) factor of E with most positive-depth votes; |t| = 1.
Expected<SE3Pose> DecomposeEssential(const Matrix3& essential,
                                     const std::vector<PixelPair>& pairs);

// Projects a matrix to the essential manifold (singular values 1, 1, 0 up to scale).
Matrix3 ProjectToEssential(const Matrix3& matrix);

Matrix3 EssentialFromPose(const SE3Pose& b_from_a);

struct TriangulationObservation {
  VirtualCamera camera;
  SE3Pose pose;  // world-to-real-camera
  Vector2 pixel = Vector2::Zero();
};

// Linear triangulation over virtual projection matrices K_v [R | t - c_v].
Expected<Vector3> TriangulateDLT(const std::vector<TriangulationObservation>& observations,
                                 double min_angle_deg = 1.0);

// First-order geometric distance to the epipolar constraint.
double SampsonDistance(const Matrix3& essential, const Vector3& x_a, const Vector3& x_b);

}  // namespace rsfm
