#pragma once

#include <string>
#include <vector>

#include "rsfm/bundle.h"
#include "rsfm/estimators.h"
#include "rsfm/reconstruction.h"

namespace rsfm {

struct PipelineOptions {
  RelativePoseOptions relative;
  RansacOptions absolute{.threshold = 4.0};
  bool refine_relative = true;
  RelativeRefineOptions relative_refine;
  // Refine, re-score every shared pair under the refined pose, repeat.
  int relative_refine_rounds = 3;
  // Global bundle adjustment; the pair adjustment after initialization uses
  // the same loss but keeps intrinsics and refraction fixed.
  BundleAdjustOptions bundle;
  // Overrides bundle.fix_scale_gauge: the scale is left free when known,
  // off-center refraction makes it observable.
  bool auto_scale_gauge = true;
  int ba_every = 5;
  double min_triangulation_angle_deg = 1.0;
  // Observations above this virtual reprojection error (px) are dropped
  // after bundle adjustment and their tracks re-triangulated.
  double max_reprojection_px = 4.0;
  int min_initial_tracks = 10;
};

struct IncrementalReport {
  std::vector<int> registered;  // in registration order
  std::vector<int> skipped;
  std::vector<std::string> log;
  int global_adjustments = 0;
  int removed_observations = 0;
  bool aligned_to_priors = false;
};

struct RescoredRefinement {
  SE3Pose b_from_a;  // optimized translation norm
  std::vector<char> inlier_mask;
  double inlier_ratio = 0.0;
  int rounds = 0;
};

// Virtual-epipolar refinement on the masked pairs, followed by re-scoring of
// every pair with the virtual Sampson residual under the refined pose;
// repeated until the inlier set is stable or `rounds` is reached.
RescoredRefinement RefineRelativePoseRescored(
    const RefractiveCameraModel& model_a, const RefractiveCameraModel& model_b,
    const std::vector<std::pair<Vector2, Vector2>>& pixels, const SE3Pose& initial_b_from_a,
    const std::vector<char>& initial_mask, double threshold, int rounds,
    const RelativeRefineOptions& options);

// Tracks observed in both views.
std::vector<int> SharedTracks(const ReconstructionState& state, int view_a, int view_b);

// Two-view initialization: refractive relative pose, virtual-epipolar
// refinement, triangulation and a pair bundle adjustment. View a becomes the
// anchor at the identity pose and |t_b| = 1, or the prior baseline when both
// views carry a position prior.
Expected<bool> InitializeFromPair(ReconstructionState* state, int view_a, int view_b,
                                  const PipelineOptions& options,
                                  BestApproxPinholeCache* cache = nullptr);

// Absolute pose from tracks with points, then pose-only refinement on the
// RANSAC inliers.
Expected<RansacReport<SE3Pose>> RegisterNextView(ReconstructionState* state, int view,
                                                 const PipelineOptions& options);

// Triangulates every pointless track with two or more registered
// observations; returns the number of new points.
int TriangulateTracks(ReconstructionState* state, const PipelineOptions& options);

// Drops observations above the reprojection limit and re-triangulates the
// affected tracks. Returns the number of removed observations.
int FilterObservations(ReconstructionState* state, const PipelineOptions& options,
                       std::vector<std::string>* log = nullptr);

// True when the scale must be fixed by the gauge: a central model (pinhole,
// centered dome) or refined refractive parameters.
bool NeedsScaleGauge(const ReconstructionState& state, const BundleAdjustOptions& options);

// Applies x -> scale * rotation * x + translation to the world frame.
void TransformWorld(ReconstructionState* state, double scale, const Matrix3& rotation,
                    const Vector3& translation);

// Initializes from the first two views of `order`, then registers the rest in
// sequence with global adjustment every options.ba_every registrations and at
// the end. On initialization failure the partial state is kept.
Expected<IncrementalReport> RunIncremental(ReconstructionState* state,
                                           const std::vector<int>& order,
                                           const PipelineOptions& options,
                                           BestApproxPinholeCache* cache = nullptr);

struct MetricsRow {
  double reprojection_px = 0.0;  // RE
  double rotation_deg = 0.0;     // mean geodesic error
  double position_mm = 0.0;      // mean camera-center error
  double model_mm = 0.0;         // mean nearest-ground-truth distance of points
  double inlier_ratio = 0.0;     // triangulated tracks / tracks
  double runtime_s = 0.0;
  int registered = 0;
};

enum class AlignMode { kRigid, kSimilarity };

struct Similarity {
  double scale = 1.0;
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  Vector3 operator*(const Vector3& x) const { return scale * (rotation * x) + translation; }
};

// Least-squares alignment of estimated camera centers to ground truth,
// followed by the error metrics. ground_truth_poses is indexed by view.
Expected<MetricsRow> AlignAndScore(const ReconstructionState& state,
                                   const std::vector<SE3Pose>& ground_truth_poses,
                                   const std::vector<Vector3>& ground_truth_points, AlignMode mode,
                                   Similarity* alignment = nullptr);

// ASCII PLY of the triangulated points.
Expected<bool> WritePly(const std::string& path, const ReconstructionState& state);
// One line per registered view: view_id qw qx qy qz tx ty tz (world-to-camera).
Expected<bool> WritePoses(const std::string& path, const ReconstructionState& state);

}  // namespace rsfm
