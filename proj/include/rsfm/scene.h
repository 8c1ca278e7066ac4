#pragma once

#include <cstdint>
#include <vector>

#include "rsfm/camera.h"
#include "rsfm/config.h"
#include "rsfm/geometry.h"
#include "rsfm/reconstruction.h"
#include "rsfm/status.h"

namespace rsfm {

struct SceneObservation {
  int point = -1;
  // Refractive projection.
  Vector2 pixel = Vector2::Zero();
  // Pinhole projection of the same camera-frame point (un-refracted data).
  Vector2 pinhole_pixel = Vector2::Zero();
};

struct SyntheticScene {
  RefractiveCameraModel camera;
  std::vector<SE3Pose> poses;  // cam_from_world
  std::vector<Vector3> points;
  std::vector<std::vector<SceneObservation>> observations;  // per view
  std::vector<char> inlier;                                  // per point
  int num_outliers = 0;
};

enum class SceneLayout {
  // Views inside a cube looking at a common target; every point is seen by
  // every view (absolute and relative pose experiments).
  kRandom,
  // Downward-looking survey over a terrain slab; points need two views.
  kLawnMower,
};

struct SceneSpec {
  RefractiveCameraModel camera;
  SceneLayout layout = SceneLayout::kRandom;
  int num_views = 1;
  int num_points = 200;
  double depth_min = 1.0;
  double depth_max = 10.0;
  double cube_size = 2.0;
  double max_roll_deg = 15.0;
  double min_baseline = 0.5;
  PipelineConfig survey;
};

// Camera-from-world pose at `position` looking at `target`, rolled about the
// optical axis.
SE3Pose LookAt(const Vector3& position, const Vector3& target, double roll_rad);

bool InImage(const PinholeIntrinsics& intrinsics, const Vector2& pixel);

// Deterministic per seed. Fails with GenerationFailed when fewer than 90% of
// the requested points could be placed within 100 attempts each.
Expected<SyntheticScene> GenerateScene(const SceneSpec& spec, std::uint64_t seed);

// Gaussian pixel noise on inliers and uniform in-image replacement of
// round(fraction * points) outlier points. The same perturbation is applied
// to the refracted and the pinhole pixels.
SyntheticScene Corrupt(const SyntheticScene& scene, double sigma_px, double outlier_fraction,
                       std::uint64_t seed);

// Tracks from the scene observations, one per point, with the ground truth
// attached and no view registered. `model` is the camera assumed by the
// reconstruction; pinhole_pixels selects the un-refracted observations.
ReconstructionState MakeReconstructionState(const SyntheticScene& scene,
                                            const RefractiveCameraModel& model,
                                            bool pinhole_pixels = false);

// Independent seed for a (stream, index) pair.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace rsfm
