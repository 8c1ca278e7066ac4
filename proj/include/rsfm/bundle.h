#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "rsfm/camera.h"
#include "rsfm/optim.h"
#include "rsfm/reconstruction.h"
#include "rsfm/status.h"

namespace rsfm {

enum class EpipolarResidual { kAlgebraic, kSampson };

struct RelativeRefineOptions {
  EpipolarResidual residual = EpipolarResidual::kAlgebraic;
  // Refine the translation direction only, keeping the initial norm. With a
  // free norm the baseline can shrink toward the virtual-center offsets on
  // noisy data, where its direction is no longer determined.
  bool fix_translation_norm = true;
  // Keep the optimized translation norm instead of rescaling to 1.
  bool keep_raw_scale = false;
  LMOptions lm;
};

struct RelativeRefineResult {
  SE3Pose b_from_a;
  SolveReport report;
};

// Virtual-epipolar residual of one pixel pair under b_from_a; fills the
// normalized virtual coordinates once so repeated evaluations are cheap.
double VirtualEpipolarResidual(const VirtualCamera& va, const VirtualCamera& vb,
                               const SE3Pose& b_from_a, const Vector2& pixel_a,
                               const Vector2& pixel_b, EpipolarResidual kind);

// Refines the full 6-DoF relative pose over virtual-epipolar residuals with
// the virtual cameras of every pair rebuilt from the fixed camera models.
Expected<RelativeRefineResult> RefineRelativePoseVirtualEpipolar(
    const RefractiveCameraModel& model_a, const RefractiveCameraModel& model_b,
    const std::vector<std::pair<Vector2, Vector2>>& inliers, const SE3Pose& initial_b_from_a,
    const RelativeRefineOptions& options = {});

struct BundleAdjustOptions {
  bool refine_poses = true;
  bool refine_points = true;
  bool refine_intrinsics = false;
  // Flat: normal and distance; dome: decentering.
  bool refine_refraction = false;
  // Freezes one translation coordinate of a second view. Ignored when
  // position priors are active.
  bool fix_scale_gauge = true;
  bool use_position_priors = true;
  RobustLoss loss = RobustLoss::Cauchy(1.0);
  LMOptions lm;
};

// Virtual reprojection residual (px) of one observation, with the virtual
// camera built from the observed pixel under the given model.
Expected<Vector2> VirtualReprojectionResidual(const RefractiveCameraModel& model,
                                              const SE3Pose& cam_from_world, const Vector3& point,
                                              const Vector2& pixel);

// Virtual reprojection cost over blocks (quaternion, translation, point) for
// a fixed camera model; used for pose-only refinement.
std::shared_ptr<const CostFunction> MakeObservationCost(const RefractiveCameraModel& model,
                                                        const Vector2& pixel);

// Total 0.5 * sum rho(|r|^2) over all observations of triangulated tracks in
// registered views.
double BundleCost(const ReconstructionState& state, const RobustLoss& loss);

// RMS virtual reprojection error (px) over the same observations.
double RmsReprojectionError(const ReconstructionState& state);

// Jointly refines registered poses, triangulated points and optionally
// intrinsics and refractive parameters. The anchor view is held constant.
Expected<SolveReport> BundleAdjust(ReconstructionState* state, const BundleAdjustOptions& options);

// Shared problem builder, exposed for Jacobian checks. Parameter storage lives
// in the returned object and is written back by Commit.
class BundleProblem {
 public:
  static Expected<std::unique_ptr<BundleProblem>> Build(const ReconstructionState& state,
                                                        const BundleAdjustOptions& options);
  Problem& problem() { return problem_; }
  void Commit(ReconstructionState* state) const;

 private:
  BundleProblem() = default;

  Problem problem_;
  std::vector<std::vector<double>> quaternions_;
  std::vector<std::vector<double>> translations_;
  std::vector<std::vector<double>> points_;
  std::vector<std::vector<double>> intrinsics_;
  std::vector<std::vector<double>> refraction_a_;  // flat normal or dome center
  std::vector<std::vector<double>> refraction_b_;  // flat distance
  std::vector<int> view_index_;
  std::vector<int> track_index_;
};

}  // namespace rsfm
