#include "rsfm/bundle.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rsfm/config.h"
#include "rsfm/numerics.h"
#include "rsfm/scene.h"

namespace rsfm {
namespace {

RefractiveCameraModel TiltedFlat(double distance = 0.05) {
  FlatPortParams flat;
  flat.normal = UnitVector3(0.166, 0.148, 0.975);
  flat.distance = distance;
  return RefractiveCameraModel(DefaultIntrinsics(), flat);
}

RefractiveCameraModel DecenteredDome() {
  DomePortParams dome;
  dome.center = Vector3(0.003, 0.0, 0.03);
  return RefractiveCameraModel(DefaultIntrinsics(), dome);
}

struct Instance {
  SyntheticScene truth;
  ReconstructionState state;
};

// Survey scene with every view registered at its true pose and every point
// at its true position; observations carry pixel noise.
Instance MakeInstance(const RefractiveCameraModel& camera, double sigma, std::uint64_t seed,
                      int views = 6, int points = 150) {
  SceneSpec spec;
  spec.camera = camera;
  spec.layout = SceneLayout::kLawnMower;
  spec.num_views = views;
  spec.num_points = points;
  spec.survey.rows = 2;
  auto scene = GenerateScene(spec, seed);
  EXPECT_TRUE(scene.ok());
  Instance inst;
  inst.truth = *scene;
  const SyntheticScene noisy = Corrupt(*scene, sigma, 0.0, seed + 1);
  ReconstructionState& state = inst.state;
  state.cameras = {camera};
  state.views.resize(views);
  for (int v = 0; v < views; ++v) {
    state.views[v].cam_from_world = scene->poses[v];
    state.views[v].registered = true;
  }
  state.tracks.resize(scene->points.size());
  for (size_t i = 0; i < scene->points.size(); ++i) {
    state.tracks[i].id = static_cast<int>(i);
    state.tracks[i].point = scene->points[i];
    state.tracks[i].ground_truth = scene->points[i];
  }
  for (int v = 0; v < views; ++v) {
    for (const auto& obs : noisy.observations[v]) {
      state.tracks[obs.point].observations.push_back({v, obs.pixel});
    }
  }
  state.anchor_view = 0;
  return inst;
}

double MeanPointError(const ReconstructionState& state) {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : state.tracks) {
    if (!t.point || !t.ground_truth) continue;
    sum += (*t.point - *t.ground_truth).norm();
    ++n;
  }
  return sum / n;
}

TEST(BundleAdjust, NoiseFreeAtTruthStaysPut) {
  Instance inst = MakeInstance(TiltedFlat(), 0.0, 1);
  BundleAdjustOptions options;
  options.refine_refraction = true;
  auto report = BundleAdjust(&inst.state, options);
  ASSERT_TRUE(report.ok());
  EXPECT_LT(RmsReprojectionError(inst.state), 1e-8);
  const Vector3 n = inst.state.cameras[0].flat().normal;
  EXPECT_LT((n - TiltedFlat().flat().normal.vec()).norm(), 1e-9);
  EXPECT_NEAR(inst.state.cameras[0].flat().distance, 0.05, 1e-9);
  for (size_t v = 0; v < inst.state.views.size(); ++v) {
    const SE3Pose& p = inst.state.views[v].cam_from_world;
    EXPECT_LT(RotationAngle(p.rotation, inst.truth.poses[v].rotation), 1e-9);
    EXPECT_LT((p.translation - inst.truth.poses[v].translation).norm(), 1e-9);
  }
}

TEST(BundleAdjust, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const RefractiveCameraModel camera = trial % 2 == 0 ? TiltedFlat() : DecenteredDome();
    Instance inst = MakeInstance(camera, 0.5, 100 + trial, 3, 12);
    // Move away from the optimum so residuals are not zero.
    for (auto& view : inst.state.views) {
      view.cam_from_world.rotation =
          ExpSO3(0.01 * Vector3(noise(rng), noise(rng), noise(rng))) * view.cam_from_world.rotation;
      view.cam_from_world.translation += 0.01 * Vector3(noise(rng), noise(rng), noise(rng));
    }
    for (auto& t : inst.state.tracks) *t.point += 0.02 * Vector3(noise(rng), noise(rng), noise(rng));
    BundleAdjustOptions options;
    options.refine_refraction = true;
    options.refine_intrinsics = trial % 4 == 1;
    auto bp = BundleProblem::Build(inst.state, options);
    ASSERT_TRUE(bp.ok());
    Eigen::MatrixXd analytic, numeric;
    ASSERT_TRUE((*bp)->problem().EvaluateJacobian(&analytic));
    ASSERT_TRUE((*bp)->problem().EvaluateNumericJacobian(&numeric));
    ASSERT_EQ(analytic.cols(), numeric.cols());
    for (int c = 0; c < analytic.cols(); ++c) {
      const double scale = std::max(numeric.col(c).norm(), 1e-6);
      EXPECT_LT((analytic.col(c) - numeric.col(c)).norm() / scale, 1e-5)
          << "trial " << trial << " column " << c;
    }
  }
}

TEST(BundleAdjust, CostInvariantUnderRigidTransform) {
  Instance inst = MakeInstance(DecenteredDome(), 1.0, 3);
  const double before = BundleCost(inst.state, RobustLoss::Cauchy(1.0));
  const SE3Pose s(ExpSO3(Vector3(0.3, -0.7, 1.1)), Vector3(2.0, -1.0, 0.5));
  const SE3Pose s_inv = s.Inverse();
  for (auto& view : inst.state.views) view.cam_from_world = view.cam_from_world * s_inv;
  for (auto& t : inst.state.tracks) t.point = s * *t.point;
  const double after = BundleCost(inst.state, RobustLoss::Cauchy(1.0));
  EXPECT_GT(before, 1.0);
  EXPECT_LT(std::abs(after - before) / before, 1e-10);
}

void ScaleScene(ReconstructionState* state, double k, bool scale_thickness) {
  for (auto& view : state->views) view.cam_from_world.translation *= k;
  for (auto& t : state->tracks) t.point = k * *t.point;
  for (auto& cam : state->cameras) {
    cam.mutable_flat().distance *= k;
    if (scale_thickness) cam.mutable_flat().thickness *= k;
  }
}

TEST(BundleAdjust, FlatPortCostInvariantUnderCommonScale) {
  for (bool thin : {false, true}) {
    RefractiveCameraModel camera = TiltedFlat();
    if (thin) camera.mutable_flat().thickness = 0.0;
    Instance inst = MakeInstance(camera, 1.0, 4);
    const double before = BundleCost(inst.state, RobustLoss::Cauchy(1.0));
    ScaleScene(&inst.state, 3.7, true);
    const double after = BundleCost(inst.state, RobustLoss::Cauchy(1.0));
    EXPECT_LT(std::abs(after - before) / before, 1e-10) << "zero thickness: " << thin;
  }
}

TEST(BundleAdjust, FixedGlassThicknessBreaksExactScaleInvariance) {
  Instance inst = MakeInstance(TiltedFlat(), 1.0, 4);
  const double before = BundleCost(inst.state, RobustLoss::Cauchy(1.0));
  ScaleScene(&inst.state, 3.7, false);
  const double after = BundleCost(inst.state, RobustLoss::Cauchy(1.0));
  EXPECT_GT(std::abs(after - before) / before, 1e-6);
}

TEST(BundleAdjust, FreeDistanceWithoutGaugeIsRejected) {
  Instance inst = MakeInstance(TiltedFlat(), 0.5, 5);
  BundleAdjustOptions options;
  options.refine_refraction = true;
  options.fix_scale_gauge = false;
  auto report = BundleAdjust(&inst.state, options);
  ASSERT_FALSE(report.ok());
  EXPECT_EQ(report.code(), ErrorCode::kGaugeUnderconstrained);

  // Priors fix the scale instead.
  for (size_t v = 0; v < inst.state.views.size(); ++v) {
    inst.state.views[v].prior = PositionPrior{inst.truth.poses[v].Center(), 100.0};
  }
  EXPECT_TRUE(BundleAdjust(&inst.state, options).ok());
}

TEST(BundleAdjust, CostHistoryIsMonotone) {
  Instance inst = MakeInstance(TiltedFlat(), 1.0, 6);
  inst.state.cameras[0].mutable_flat().normal = UnitVector3(0.0, 0.0, 1.0);
  BundleAdjustOptions options;
  options.refine_refraction = true;
  auto report = BundleAdjust(&inst.state, options);
  ASSERT_TRUE(report.ok());
  ASSERT_GE(report->cost_history.size(), 2u);
  for (size_t i = 1; i < report->cost_history.size(); ++i) {
    EXPECT_LE(report->cost_history[i], report->cost_history[i - 1]);
  }
}

TEST(BundleAdjust, RecoversTiltedNormal) {
  Instance inst = MakeInstance(TiltedFlat(), 0.5, 7, 20, 1500);
  inst.state.cameras[0].mutable_flat().normal = UnitVector3(0.0, 0.0, 1.0);
  BundleAdjustOptions options;
  options.refine_refraction = true;
  auto report = BundleAdjust(&inst.state, options);
  ASSERT_TRUE(report.ok());
  const Vector3 n = inst.state.cameras[0].flat().normal;
  const Vector3 truth = TiltedFlat().flat().normal;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(n[i], truth[i], 1e-3);
}

TEST(BundleAdjust, RecoversLateralDecentering) {
  DomePortParams dome;
  dome.center = Vector3(0.03, 0.0, 0.0);
  const RefractiveCameraModel truth(DefaultIntrinsics(), dome);
  Instance inst = MakeInstance(truth, 0.5, 8, 12, 600);
  inst.state.cameras[0].mutable_dome().center = Vector3::Zero();
  BundleAdjustOptions options;
  options.refine_refraction = true;
  auto report = BundleAdjust(&inst.state, options);
  ASSERT_TRUE(report.ok());
  EXPECT_LT((inst.state.cameras[0].dome().center - dome.center).norm(), 1e-3);
}

TEST(BundleAdjust, PriorsRecoverInterfaceDistance) {
  Instance inst = MakeInstance(TiltedFlat(), 0.5, 9, 20, 1500);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.005);
  for (size_t v = 0; v < inst.state.views.size(); ++v) {
    const Vector3 c = inst.truth.poses[v].Center() + Vector3(noise(rng), noise(rng), noise(rng));
    inst.state.views[v].prior = PositionPrior{c, 100.0};
  }
  inst.state.cameras[0].mutable_flat().distance = 0.075;
  BundleAdjustOptions options;
  options.refine_refraction = true;
  auto report = BundleAdjust(&inst.state, options);
  ASSERT_TRUE(report.ok());
  EXPECT_NEAR(inst.state.cameras[0].flat().distance, 0.05, 0.0005);
}

// Mean camera-center error plus mean error of points whose observations are
// all clean.
double StructureError(const ReconstructionState& state, const SyntheticScene& truth,
                      const std::vector<char>& clean) {
  double centers = 0.0;
  for (size_t v = 0; v < state.views.size(); ++v) {
    centers += (state.views[v].cam_from_world.Center() - truth.poses[v].Center()).norm();
  }
  double points = 0.0;
  int n = 0;
  for (size_t i = 0; i < state.tracks.size(); ++i) {
    if (!clean[i]) continue;
    points += (*state.tracks[i].point - *state.tracks[i].ground_truth).norm();
    ++n;
  }
  return centers / state.views.size() + points / n;
}

TEST(BundleAdjust, CauchyLossLimitsOutlierInfluence) {
  const Instance clean = MakeInstance(TiltedFlat(), 1.0, 10, 8, 300);
  BundleAdjustOptions options;

  ReconstructionState dirty = clean.state;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& k = dirty.cameras[0].intrinsics();
  std::vector<char> untouched(dirty.tracks.size(), 1);
  int corrupted = 0;
  int total = 0;
  for (size_t i = 0; i < dirty.tracks.size(); ++i) {
    for (auto& obs : dirty.tracks[i].observations) {
      ++total;
      if (u(rng) < 0.1) {
        obs.pixel = Vector2(u(rng) * k.width, u(rng) * k.height);
        untouched[i] = 0;
        ++corrupted;
      }
    }
  }
  ASSERT_GT(corrupted, total / 20);

  ReconstructionState base = clean.state;
  ASSERT_TRUE(BundleAdjust(&base, options).ok());
  const double floor = StructureError(base, clean.truth, untouched);
  ASSERT_TRUE(BundleAdjust(&dirty, options).ok());
  EXPECT_LT(StructureError(dirty, clean.truth, untouched), 5.0 * floor);
}

TEST(RelativeRefine, NoiseFreeTruthIsAFixedPoint) {
  Instance inst = MakeInstance(TiltedFlat(), 0.0, 12, 2, 100);
  std::vector<std::pair<Vector2, Vector2>> pairs;
  for (const auto& t : inst.state.tracks) {
    const auto* a = t.Find(0);
    const auto* b = t.Find(1);
    if (a && b) pairs.emplace_back(a->pixel, b->pixel);
  }
  const SE3Pose truth = inst.truth.poses[1] * inst.truth.poses[0].Inverse();
  for (auto kind : {EpipolarResidual::kAlgebraic, EpipolarResidual::kSampson}) {
    RelativeRefineOptions options;
    options.residual = kind;
    options.keep_raw_scale = true;
    auto refined = RefineRelativePoseVirtualEpipolar(TiltedFlat(), TiltedFlat(), pairs, truth,
                                                     options);
    ASSERT_TRUE(refined.ok());
    EXPECT_LT(refined->report.final_cost, 1e-20);
    EXPECT_LT(RotationAngle(refined->b_from_a.rotation, truth.rotation), 1e-9);
    EXPECT_LT((refined->b_from_a.translation - truth.translation).norm(), 1e-9);
  }
}

TEST(RelativeRefine, NeverIncreasesCostAndNormalizes) {
  Instance inst = MakeInstance(TiltedFlat(), 1.0, 13, 2, 100);
  std::vector<std::pair<Vector2, Vector2>> pairs;
  for (const auto& t : inst.state.tracks) {
    const auto* a = t.Find(0);
    const auto* b = t.Find(1);
    if (a && b) pairs.emplace_back(a->pixel, b->pixel);
  }
  SE3Pose init = inst.truth.poses[1] * inst.truth.poses[0].Inverse();
  init.rotation = ExpSO3(Vector3(0.01, -0.01, 0.005)) * init.rotation;
  init.translation = (init.translation + Vector3(0.02, 0.0, -0.01)).normalized();
  auto refined = RefineRelativePoseVirtualEpipolar(TiltedFlat(), TiltedFlat(), pairs, init);
  ASSERT_TRUE(refined.ok());
  EXPECT_LE(refined->report.final_cost, refined->report.initial_cost);
  EXPECT_NEAR(refined->b_from_a.translation.norm(), 1.0, 1e-12);

  RelativeRefineOptions raw;
  raw.keep_raw_scale = true;
  init.translation *= 0.7;
  refined = RefineRelativePoseVirtualEpipolar(TiltedFlat(), TiltedFlat(), pairs, init, raw);
  ASSERT_TRUE(refined.ok());
  EXPECT_NEAR(refined->b_from_a.translation.norm(), 0.7, 1e-12);

  pairs.resize(4);
  EXPECT_FALSE(RefineRelativePoseVirtualEpipolar(TiltedFlat(), TiltedFlat(), pairs, init).ok());
}

}  // namespace
}  // namespace rsfm
