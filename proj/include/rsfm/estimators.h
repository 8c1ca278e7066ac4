#pragma once

#include <map>
#include <mutex>
#include <vector>

#include "rsfm/camera.h"
#include "rsfm/ransac.h"
#include "rsfm/solvers.h"

namespace rsfm {

struct Correspondence2D3D {
  Vector2 pixel = Vector2::Zero();
  Vector3 world = Vector3::Zero();
};

// Reprojection error (px) of a world point through the virtual camera of its
// observed pixel; infinity when the point is behind the virtual camera.
double VirtualReprojectionError(const VirtualCamera& camera, const SE3Pose& cam_from_world,
                                const Vector3& world, const Vector2& pixel);

// GP3P in RANSAC over per-pixel virtual cameras. Returns camera-from-world.
Expected<RansacReport<SE3Pose>> EstimateAbsolutePoseRefractive(
    const RefractiveCameraModel& model, const std::vector<Correspondence2D3D>& corrs,
    const RansacOptions& options);

// Central P3P in RANSAC with pinhole reprojection error; the un-refracted
// baseline.
Expected<RansacReport<SE3Pose>> EstimateAbsolutePoseCentral(
    const PinholeIntrinsics& intrinsics, const std::vector<Correspondence2D3D>& corrs,
    const RansacOptions& options);

// Best-approximated pinhole fits keyed by the full model parameters.
class BestApproxPinholeCache {
 public:
  explicit BestApproxPinholeCache(PinholeFitOptions options = {}) : options_(options) {}
  Expected<PinholeIntrinsics> Get(const RefractiveCameraModel& model);

 private:
  PinholeFitOptions options_;
  std::mutex mutex_;
  std::map<std::vector<double>, PinholeIntrinsics> fits_;
};

struct RelativePoseOptions {
  // Sampson threshold in normalized units for both scoring passes.
  RansacOptions ransac{.threshold = 1e-3};
  double virtual_threshold = 1e-3;
};

struct RelativePoseResult {
  // Pinhole-approximation RANSAC result; model holds b_T_a with |t| = 1.
  RansacReport<SE3Pose> report;
  Matrix3 essential = Matrix3::Zero();
  // Inliers under the virtual Sampson residual of the decomposed pose.
  std::vector<char> virtual_inlier_mask;
  double virtual_inlier_ratio = 0.0;
  double pinhole_inlier_ratio = 0.0;
};

// Pixel pairs normalized through the given pinhole intrinsics.
std::vector<PixelPair> NormalizePixelPairs(const std::vector<std::pair<Vector2, Vector2>>& pixels,
                                           const PinholeIntrinsics& a, const PinholeIntrinsics& b);

// Sampson distance of the virtual essential matrix built for one pixel pair.
// Infinity when a virtual camera cannot be formed.
double VirtualSampsonResidual(const RefractiveCameraModel& model_a,
                              const RefractiveCameraModel& model_b, const SE3Pose& b_from_a,
                              const Vector2& pixel_a, const Vector2& pixel_b);

// Five-point RANSAC on best-approx pinhole coordinates, essential
// decomposition, then virtual-epipolar re-scoring.
Expected<RelativePoseResult> EstimateRelativePoseRefractive(
    const RefractiveCameraModel& model_a, const RefractiveCameraModel& model_b,
    const std::vector<std::pair<Vector2, Vector2>>& pixels, const RelativePoseOptions& options,
    BestApproxPinholeCache* cache);

// Five-point RANSAC and decomposition on pinhole data with known intrinsics.
Expected<RelativePoseResult> EstimateRelativePoseCentral(
    const PinholeIntrinsics& intrinsics_a, const PinholeIntrinsics& intrinsics_b,
    const std::vector<std::pair<Vector2, Vector2>>& pixels, const RansacOptions& options);

}  // namespace rsfm
