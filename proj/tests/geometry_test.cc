#include "rsfm/geometry.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rsfm/numerics.h"

namespace rsfm {
namespace {

Vector3 RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vector3(n(rng), n(rng), n(rng)).normalized();
}

SE3Pose RandomPose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  return SE3Pose(ExpSO3(Vector3(u(rng), u(rng), u(rng))), Vector3(u(rng), u(rng), u(rng)));
}

TEST(UnitVector3, NormalizesToUnitNorm) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const UnitVector3 v(u(rng), u(rng), u(rng));
    EXPECT_NEAR(v.vec().norm(), 1.0, numerics::kUnitNormTol);
  }
  EXPECT_THROW(UnitVector3(0.0, 0.0, 0.0), std::invalid_argument);
}

TEST(SE3Pose, GroupLaws) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const SE3Pose a = RandomPose(rng), b = RandomPose(rng), c = RandomPose(rng);
    const Matrix3& r = a.rotation;
    EXPECT_LT((r * r.transpose() - Matrix3::Identity()).norm(), 1e-10);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-10);

    const SE3Pose id = a * a.Inverse();
    EXPECT_LT((id.rotation - Matrix3::Identity()).norm(), 1e-10);
    EXPECT_LT(id.translation.norm(), 1e-10);

    const SE3Pose l = (a * b) * c;
    const SE3Pose rr = a * (b * c);
    EXPECT_LT((l.rotation - rr.rotation).norm(), 1e-10);
    EXPECT_LT((l.translation - rr.translation).norm(), 1e-10);
  }
}

TEST(SnellRefract, NormalIncidenceUnchanged) {
  const UnitVector3 n(0.2, -0.3, 0.9);
  for (double r : {0.5, 1.0 / 1.334, 1.52, 2.0}) {
    auto out = SnellRefract(n, n, r);
    ASSERT_TRUE(out.ok());
    EXPECT_LT((out->vec() - n.vec()).norm(), 1e-15);
  }
}

TEST(SnellRefract, IdenticalMediaUnchanged) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vector3 n = RandomUnit(rng);
    Vector3 v = RandomUnit(rng);
    if (v.dot(n) < 0) v = -v;
    auto out = SnellRefract(UnitVector3(v), UnitVector3(n), 1.0);
    ASSERT_TRUE(out.ok());
    EXPECT_LT((out->vec() - v).norm(), 1e-14);
  }
}

TEST(SnellRefract, FortyFiveDegreesAirToWater) {
  const double theta = numerics::DegToRad(45.0);
  const UnitVector3 incident(std::sin(theta), 0.0, std::cos(theta));
  const UnitVector3 normal(0.0, 0.0, 1.0);
  auto out = SnellRefract(incident, normal, 1.0 / 1.334);
  ASSERT_TRUE(out.ok());
  // Scalar form of Snell's law.
  const double expected = std::asin(std::sin(theta) / 1.334);
  EXPECT_NEAR(AngleBetween(out->vec(), normal.vec()), expected, 1e-14);
  EXPECT_NEAR(numerics::RadToDeg(expected), 32.0, 0.05);
}

TEST(SnellRefract, TotalInternalReflection) {
  const double theta = numerics::DegToRad(60.0);
  const UnitVector3 incident(std::sin(theta), 0.0, std::cos(theta));
  auto out = SnellRefract(incident, UnitVector3(0, 0, 1), 1.334);
  ASSERT_FALSE(out.ok());
  EXPECT_EQ(out.code(), ErrorCode::kTotalInternalReflection);
}

TEST(SnellRefract, ReversibilityAndPlaneOfIncidence) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ratio(0.5, 1.6);
  int checked = 0;
  for (int i = 0; i < 5000; ++i) {
    const Vector3 n = RandomUnit(rng);
    Vector3 v = RandomUnit(rng);
    if (v.dot(n) < 0) v = -v;
    const double r = ratio(rng);
    auto out = SnellRefract(UnitVector3(v), UnitVector3(n), r);
    if (!out) continue;
    ++checked;
    // Snell's equality n1 sin(t1) = n2 sin(t2), with r = n1 / n2.
    EXPECT_NEAR(r * v.cross(n).norm(), out->vec().cross(n).norm(), 1e-12);
    EXPECT_NEAR(v.cross(n).dot(out->vec()), 0.0, 1e-12);
    auto back = SnellRefract(-*out, -UnitVector3(n), 1.0 / r);
    ASSERT_TRUE(back.ok());
    EXPECT_LT((back->vec() + v).norm(), 1e-10);
  }
  EXPECT_GT(checked, 3000);
}

TEST(IntersectRayPlane, AxisAligned) {
  const Ray ray{Vector3::Zero(), UnitVector3(0, 0, 1)};
  auto p = IntersectRayPlane(ray, Plane{UnitVector3(0, 0, 1), 0.7});
  ASSERT_TRUE(p.ok());
  EXPECT_LT((*p - Vector3(0, 0, 0.7)).norm(), 1e-15);
}

TEST(IntersectRayPlane, ParallelAndBehind) {
  const Ray ray{Vector3::Zero(), UnitVector3(1, 0, 0)};
  EXPECT_EQ(IntersectRayPlane(ray, Plane{UnitVector3(0, 0, 1), 1.0}).code(),
            ErrorCode::kNoIntersection);
  const Ray back{Vector3::Zero(), UnitVector3(0, 0, -1)};
  EXPECT_EQ(IntersectRayPlane(back, Plane{UnitVector3(0, 0, 1), 1.0}).code(),
            ErrorCode::kNoIntersection);
}

TEST(IntersectRayPlane, RandomSatisfiesPlaneEquation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const Ray ray{Vector3(u(rng), u(rng), u(rng)), UnitVector3(RandomUnit(rng))};
    const Plane plane{UnitVector3(RandomUnit(rng)), u(rng)};
    auto p = IntersectRayPlane(ray, plane);
    if (!p) continue;
    EXPECT_NEAR(plane.normal.vec().dot(*p), plane.offset, 1e-12);
  }
}

TEST(IntersectRaySphere, FromCenter) {
  std::mt19937_64 rng(6);
  const Sphere s(Vector3(0.1, -0.2, 0.3), 0.7);
  for (int i = 0; i < 100; ++i) {
    auto p = IntersectRaySphere(Ray{s.center, UnitVector3(RandomUnit(rng))}, s);
    ASSERT_TRUE(p.ok());
    EXPECT_NEAR((*p - s.center).norm(), s.radius, 1e-12);
  }
}

TEST(IntersectRaySphere, OutsideAimedAway) {
  const Sphere s(Vector3::Zero(), 1.0);
  auto p = IntersectRaySphere(Ray{Vector3(0, 0, 3), UnitVector3(0, 0, 1)}, s);
  EXPECT_EQ(p.code(), ErrorCode::kNoIntersection);
  auto miss = IntersectRaySphere(Ray{Vector3(0, 2, 3), UnitVector3(0, 0, -1)}, s);
  EXPECT_EQ(miss.code(), ErrorCode::kNoIntersection);
}

TEST(IntersectRaySphere, DecenteredDomeAxialRay) {
  const Sphere s(Vector3(0, 0, 0.003), 0.05);
  auto p = IntersectRaySphere(Ray{Vector3::Zero(), UnitVector3(0, 0, 1)}, s);
  ASSERT_TRUE(p.ok());
  EXPECT_NEAR((*p - s.center).norm(), 0.05, 1e-12);
  EXPECT_NEAR(p->z(), 0.053, 1e-15);
}

TEST(ClosestPointsOnLines, CrossingAtOrigin) {
  const Line a{Vector3(-1, 0, 0), UnitVector3(1, 0, 0)};
  const Line b{Vector3(0, 2, 0), UnitVector3(0, 1, 0)};
  auto c = ClosestPointsOnLines(a, b);
  ASSERT_TRUE(c.ok());
  EXPECT_LT(c->on_a.norm(), 1e-15);
  EXPECT_LT(c->on_b.norm(), 1e-15);
  EXPECT_LT(c->distance, 1e-15);
}

TEST(ClosestPointsOnLines, Parallel) {
  const Line a{Vector3::Zero(), UnitVector3(1, 1, 0)};
  const Line b{Vector3(0, 0, 1), UnitVector3(1, 1, 0)};
  EXPECT_EQ(ClosestPointsOnLines(a, b).code(), ErrorCode::kParallelLines);
}

TEST(ClosestPointsOnLines, SkewLinesRecoverConstructedPair) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vector3 da = RandomUnit(rng), db = RandomUnit(rng);
    const Vector3 n = da.cross(db);
    if (n.norm() < 0.1) continue;
    ++checked;
    // Known closest pair: qa, qb = qa + gap * n_hat; origins slid along lines.
    const Vector3 qa(u(rng), u(rng), u(rng));
    const double gap = u(rng);
    const Vector3 qb = qa + gap * n.normalized();
    const Line a{qa - u(rng) * da, UnitVector3(da)};
    const Line b{qb - u(rng) * db, UnitVector3(db)};
    auto c = ClosestPointsOnLines(a, b);
    ASSERT_TRUE(c.ok());
    EXPECT_LT((c->on_a - qa).norm(), 1e-12);
    EXPECT_LT((c->on_b - qb).norm(), 1e-12);
    EXPECT_NEAR(c->distance, std::abs(gap), 1e-12);
  }
  EXPECT_GT(checked, 800);
}

}  // namespace
}  // namespace rsfm
