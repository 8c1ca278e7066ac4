#include "rsfm/camera.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rsfm/numerics.h"

namespace rsfm {
namespace {

PinholeIntrinsics TestIntrinsics() {
  return PinholeIntrinsics::FromFov(73.0, 1920, 1280);
}

RefractiveCameraModel FlatModel(const Vector3& normal, double dist, double thickness = 0.005) {
  FlatPortParams flat;
  flat.normal = UnitVector3(normal);
  flat.distance = dist;
  flat.thickness = thickness;
  return RefractiveCameraModel(TestIntrinsics(), flat);
}

RefractiveCameraModel DomeModel(const Vector3& center, double radius = 0.05,
                                double thickness = 0.005) {
  DomePortParams dome;
  dome.center = center;
  dome.radius = radius;
  dome.thickness = thickness;
  return RefractiveCameraModel(TestIntrinsics(), dome);
}

const Vector3 kTiltNormal(0.166, 0.148, 0.975);

std::vector<RefractiveCameraModel> PortConfigs() {
  return {FlatModel(Vector3(0, 0, 1), 0.01), FlatModel(kTiltNormal, 0.01),
          DomeModel(Vector3(0, 0, 0.003)), DomeModel(Vector3(0.03, 0, 0))};
}

Vector2 RandomPixel(std::mt19937_64& rng, const PinholeIntrinsics& k) {
  std::uniform_real_distribution<double> ux(0.0, k.width), uy(0.0, k.height);
  return Vector2(ux(rng), uy(rng));
}

double SinAngle(const Vector3& a, const Vector3& b) {
  return a.normalized().cross(b.normalized()).norm();
}

TEST(PinholeIntrinsics, FovToFocal) {
  const PinholeIntrinsics k = TestIntrinsics();
  EXPECT_NEAR(k.fx, 960.0 / std::tan(numerics::DegToRad(36.5)), 1e-9);
  EXPECT_NEAR(k.fx, 1297.0, 1.0);
  EXPECT_EQ(k.fx, k.fy);
}

TEST(PinholeIntrinsics, DistortionInverse) {
  PinholeIntrinsics k = TestIntrinsics();
  k.k1 = -0.05;
  k.k2 = 0.01;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  for (int i = 0; i < 100; ++i) {
    const Vector2 n(u(rng), u(rng));
    EXPECT_LT((k.Undistort(k.Distort(n)) - n).norm(), 1e-6);
  }
}

TEST(BackProject, FlatPrincipalPointIsUndeviated) {
  const auto model = FlatModel(Vector3(0, 0, 1), 0.02, 0.004);
  auto ray = BackProject(model, Vector2(960, 640));
  ASSERT_TRUE(ray.ok());
  EXPECT_LT((ray->direction.vec() - Vector3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((ray->origin - Vector3(0, 0, 0.024)).norm(), 1e-15);
}

TEST(BackProject, CenteredDomeIsUndeviated) {
  const auto model = DomeModel(Vector3::Zero());
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vector2 px = RandomPixel(rng, model.intrinsics());
    auto ray = BackProject(model, px);
    ASSERT_TRUE(ray.ok());
    const Vector2 n = model.intrinsics().PixelToNormalized(px);
    EXPECT_LT((ray->direction.vec() - Vector3(n.x(), n.y(), 1).normalized()).norm(), 1e-12);
  }
}

TEST(BackProject, TiltedFlatSatisfiesSnellAtBothInterfaces) {
  const auto model = FlatModel(kTiltNormal, 0.01, 0.005);
  const Vector3 n = model.flat().normal.vec();
  const MediaIndices idx;
  for (const Vector2 px : {Vector2(100, 100), Vector2(1800, 1200), Vector2(300, 1100)}) {
    auto ray = BackProject(model, px);
    ASSERT_TRUE(ray.ok());
    const Vector2 xn = model.intrinsics().PixelToNormalized(px);
    const Vector3 d_air = Vector3(xn.x(), xn.y(), 1.0).normalized();
    // Independent reconstruction of the interface points.
    const Vector3 p1 = d_air * (0.01 / n.dot(d_air));
    EXPECT_NEAR(n.dot(ray->origin), 0.015, 1e-15);
    const Vector3 d_glass = (ray->origin - p1).normalized();
    const Vector3 d_water = ray->direction.vec();
    EXPECT_NEAR(idx.air * SinAngle(d_air, n), idx.glass * SinAngle(d_glass, n), 1e-10);
    EXPECT_NEAR(idx.glass * SinAngle(d_glass, n), idx.water * SinAngle(d_water, n), 1e-10);
    EXPECT_NEAR(d_air.cross(n).dot(d_glass), 0.0, 1e-10);
    EXPECT_NEAR(d_glass.cross(n).dot(d_water), 0.0, 1e-10);
  }
}

TEST(BackProject, DomeMissReportsNoIntersection) {
  // Camera center outside the dome sphere makes pixels miss the interface.
  auto model = DomeModel(Vector3(0, 0, -0.2), 0.05);
  auto ray = BackProject(model, Vector2(0, 0));
  EXPECT_FALSE(ray.ok());
}

TEST(RefractionAxis, Examples) {
  auto flat = RefractionAxis(FlatModel(Vector3(0, 0, 1), 0.01));
  ASSERT_TRUE(flat.ok());
  EXPECT_LT((flat->direction.vec() - Vector3(0, 0, 1)).norm(), 1e-15);
  EXPECT_LT(flat->origin.norm(), 1e-15);

  auto dome = RefractionAxis(DomeModel(Vector3(0.03, 0, 0)));
  ASSERT_TRUE(dome.ok());
  EXPECT_LT((dome->direction.vec() - Vector3(1, 0, 0)).norm(), 1e-15);

  EXPECT_EQ(RefractionAxis(DomeModel(Vector3::Zero())).code(), ErrorCode::kCentralCamera);
}

TEST(VirtualCamera, CenteredDomeMatchesRealCamera) {
  const auto model = DomeModel(Vector3::Zero());
  const auto& k = model.intrinsics();
  auto vc = ComputeVirtualCamera(model, Vector2(123.4, 987.6));
  ASSERT_TRUE(vc.ok());
  EXPECT_LT(vc->center.norm(), 1e-15);
  EXPECT_DOUBLE_EQ(vc->focal, k.fx);
  EXPECT_NEAR(vc->principal.x(), k.cx, 1e-9);
  EXPECT_NEAR(vc->principal.y(), k.cy, 1e-9);
}

TEST(VirtualCamera, AxialPixelDegeneratesToRealCenter) {
  const auto model = FlatModel(Vector3(0, 0, 1), 0.01);
  auto vc = ComputeVirtualCamera(model, Vector2(960, 640));
  ASSERT_TRUE(vc.ok());
  EXPECT_LT(vc->center.norm(), 1e-15);
}

TEST(VirtualCamera, FlatOffAxisCenterOnAxisAndReproducesPixel) {
  const auto model = FlatModel(Vector3(0, 0, 1), 0.05);
  const Vector2 px(1500.0, 300.0);
  auto vc = ComputeVirtualCamera(model, px);
  ASSERT_TRUE(vc.ok());
  EXPECT_LT(vc->center.head<2>().norm(), 1e-12);
  // Scalar Snell along the meridional plane: the water ray crosses the axis
  // at z = d + t - rho / tan(theta_w), rho the radial exit offset.
  const auto& k = model.intrinsics();
  const double tan_a = std::hypot((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy);
  const double sin_a = tan_a / std::sqrt(1.0 + tan_a * tan_a);
  const double th_g = std::asin(sin_a / 1.52);
  const double th_w = std::asin(sin_a / 1.334);
  const double rho = 0.05 * tan_a + 0.005 * std::tan(th_g);
  const double z_expected = 0.05 + 0.005 - rho / std::tan(th_w);
  EXPECT_NEAR(vc->center.z(), z_expected, 1e-12);
  // Water rays bend towards the axis, so the center lies behind the camera.
  EXPECT_LT(vc->center.z(), 0.0);
  auto ray = BackProject(model, px);
  for (double t : {0.1, 1.0, 7.0}) {
    EXPECT_LT((vc->Project(ray->At(t)) - px).norm(), 1e-9);
  }
}

TEST(VirtualCamera, ConsistencyAndAxialityAllPorts) {
  std::mt19937_64 rng(3);
  for (const auto& model : PortConfigs()) {
    auto axis = RefractionAxis(model);
    ASSERT_TRUE(axis.ok());
    for (int i = 0; i < 1000; ++i) {
      const Vector2 px = RandomPixel(rng, model.intrinsics());
      auto ray = BackProject(model, px);
      auto vc = ComputeVirtualCamera(model, px);
      ASSERT_TRUE(ray.ok() && vc.ok());
      const Vector2 p1 = vc->Project(ray->At(0.5));
      const Vector2 p2 = vc->Project(ray->At(12.0));
      EXPECT_LT((p1 - px).norm(), 1e-9);
      EXPECT_LT((p2 - px).norm(), 1e-9);
      auto closest = ClosestPointsOnLines(*axis, *ray);
      ASSERT_TRUE(closest.ok());
      EXPECT_LT(closest->distance, 1e-9) << PortTypeName(model.port_type());
    }
  }
}

TEST(ForwardProject, AxialPointOnOrthogonalFlatPort) {
  const auto model = FlatModel(Vector3(0, 0, 1), 0.01);
  auto px = ForwardProject(model, Vector3(0, 0, 3.0));
  ASSERT_TRUE(px.ok());
  EXPECT_LT((*px - Vector2(960, 640)).norm(), 1e-9);
}

TEST(ForwardProject, CenteredDomeIsPinholeInOneIteration) {
  const auto model = DomeModel(Vector3::Zero());
  const Vector3 p(0.4, -0.3, 2.5);
  auto res = ForwardProjectDetailed(model, p);
  ASSERT_TRUE(res.ok());
  EXPECT_LE(res->iterations, 1);
  EXPECT_LT((res->pixel - model.intrinsics().Project(p)).norm(), 1e-12);
}

TEST(ForwardProject, RoundTripAllPorts) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> depth(0.5, 20.0);
  for (const auto& model : PortConfigs()) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Vector2 px = RandomPixel(rng, model.intrinsics());
      auto ray = BackProject(model, px);
      ASSERT_TRUE(ray.ok());
      auto back = ForwardProject(model, ray->At(depth(rng)));
      ASSERT_TRUE(back.ok());
      worst = std::max(worst, (*back - px).norm());
    }
    EXPECT_LT(worst, 1e-6) << PortTypeName(model.port_type());
  }
}

TEST(ForwardProject, ResultRayPassesThroughPoint) {
  const auto model = FlatModel(kTiltNormal, 0.02);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0), z(1.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double depth = z(rng);
    const Vector3 p(u(rng) * depth * 0.6, u(rng) * depth * 0.4, depth);
    auto px = ForwardProject(model, p);
    ASSERT_TRUE(px.ok());
    auto ray = BackProject(model, *px);
    const Vector3 rel = p - ray->origin;
    const double miss = (rel - rel.dot(ray->direction.vec()) * ray->direction.vec()).norm();
    EXPECT_LT(miss, 1e-7 * p.norm());
  }
}

TEST(ForwardProject, CentralLimitMonotone) {
  std::mt19937_64 rng(6);
  std::vector<Vector2> pixels;
  for (int i = 0; i < 200; ++i) pixels.push_back(RandomPixel(rng, TestIntrinsics()));
  double prev = std::numeric_limits<double>::infinity();
  for (double offset : {1e-3, 1e-4, 1e-5}) {
    const auto model = DomeModel(Vector3(offset, 0.5 * offset, offset));
    double worst = 0.0;
    for (const auto& px : pixels) {
      auto ray = BackProject(model, px);
      ASSERT_TRUE(ray.ok());
      const Vector2 n = model.intrinsics().PixelToNormalized(px);
      worst = std::max(worst, AngleBetween(ray->direction.vec(), Vector3(n.x(), n.y(), 1)));
    }
    EXPECT_LT(worst, prev);
    prev = worst;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(FitBestApproxPinhole, CenteredDomeIsExact) {
  const auto model = DomeModel(Vector3::Zero());
  PinholeFitOptions opts;
  opts.seed = 11;
  auto fit = FitBestApproxPinhole(model, opts);
  ASSERT_TRUE(fit.ok());
  const auto& k = fit->intrinsics;
  const auto& t = model.intrinsics();
  EXPECT_NEAR(k.fx, t.fx, 1e-6);
  EXPECT_NEAR(k.fy, t.fy, 1e-6);
  EXPECT_NEAR(k.cx, t.cx, 1e-6);
  EXPECT_NEAR(k.cy, t.cy, 1e-6);
  EXPECT_NEAR(k.k1, 0.0, 1e-9);
  EXPECT_NEAR(k.k2, 0.0, 1e-9);
  EXPECT_LT(fit->final_rms, 1e-6);
}

TEST(FitBestApproxPinhole, PinholeIdentity) {
  const RefractiveCameraModel model(TestIntrinsics());
  auto fit = FitBestApproxPinhole(model);
  ASSERT_TRUE(fit.ok());
  EXPECT_LT(fit->final_rms, 1e-9);
  EXPECT_NEAR(fit->intrinsics.fx, model.intrinsics().fx, 1e-9);
}

TEST(FitBestApproxPinhole, FlatPortResidualAndDistortionHelps) {
  const auto model = FlatModel(Vector3(0, 0, 1), 0.01);
  PinholeFitOptions with;
  with.seed = 3;
  PinholeFitOptions without = with;
  without.fit_distortion = false;
  auto a = FitBestApproxPinhole(model, with);
  auto b = FitBestApproxPinhole(model, without);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_GT(a->final_rms, 0.0);
  EXPECT_TRUE(std::isfinite(a->final_rms));
  EXPECT_GT(b->final_rms, a->final_rms);
  EXPECT_LT(a->final_rms, a->initial_rms);
  // Water magnifies by roughly n_water / n_air.
  EXPECT_NEAR(a->intrinsics.fx / model.intrinsics().fx, 1.334, 0.05);
}

TEST(FitBestApproxPinhole, RejectsBadOptions) {
  PinholeFitOptions opts;
  opts.sample_count = 5;
  EXPECT_FALSE(FitBestApproxPinhole(RefractiveCameraModel(TestIntrinsics()), opts).ok());
}

}  // namespace
}  // namespace rsfm
