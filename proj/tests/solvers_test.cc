#include "rsfm/solvers.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rsfm/numerics.h"
#include "rsfm/polynomial.h"

namespace rsfm {
namespace {

Vector3 RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vector3(n(rng), n(rng), n(rng)).normalized();
}

SE3Pose RandomPose(std::mt19937_64& rng, double extent = 2.0) {
  std::uniform_real_distribution<double> angle(0.0, numerics::kPi);
  std::uniform_real_distribution<double> u(-extent, extent);
  return SE3Pose(ExpSO3(angle(rng) * RandomUnit(rng)), Vector3(u(rng), u(rng), u(rng)));
}

PinholeIntrinsics Intrinsics() { return PinholeIntrinsics::FromFov(73.0, 1920, 1280); }

// Camera-frame point seen at a random pixel and depth.
Vector3 RandomCameraPoint(std::mt19937_64& rng, double zmin = 1.0, double zmax = 10.0) {
  const auto k = Intrinsics();
  std::uniform_real_distribution<double> px(0.0, k.width), py(0.0, k.height), z(zmin, zmax);
  const Vector2 n = k.PixelToNormalized(Vector2(px(rng), py(rng)));
  return z(rng) * Vector3(n.x(), n.y(), 1.0);
}

bool PoseNear(const SE3Pose& a, const SE3Pose& b, double tol) {
  return (a.rotation - b.rotation).norm() < tol && (a.translation - b.translation).norm() < tol;
}

bool ContainsPose(const std::vector<SE3Pose>& poses, const SE3Pose& truth, double tol) {
  for (const auto& p : poses) {
    if (PoseNear(p, truth, tol)) return true;
  }
  return false;
}

// Ray through the virtual camera of the refracted observation of a point.
RayPointCorrespondence RefractedCorrespondence(const RefractiveCameraModel& model,
                                               const SE3Pose& pose, const Vector3& world) {
  const Vector2 px = *ForwardProject(model, pose * world);
  const VirtualCamera vc = *ComputeVirtualCamera(model, px);
  return {Ray{vc.center, UnitVector3(vc.Normalized(px))}, world};
}

RefractiveCameraModel FlatModel(const Vector3& normal, double dist) {
  FlatPortParams flat;
  flat.normal = UnitVector3(normal);
  flat.distance = dist;
  return RefractiveCameraModel(Intrinsics(), flat);
}

RefractiveCameraModel DomeModel(const Vector3& center) {
  DomePortParams dome;
  dome.center = center;
  return RefractiveCameraModel(Intrinsics(), dome);
}

TEST(Polynomial, RealRootsOfKnownFactors) {
  // (x - 1)(x - 2)(x + 3)(x^2 + 1)
  Poly p = PolyMul(PolyMul(Poly{-1, 1}, Poly{-2, 1}), PolyMul(Poly{3, 1}, Poly{1, 0, 1}));
  auto roots = PolyRealRoots(p);
  std::sort(roots.begin(), roots.end());
  ASSERT_EQ(roots.size(), 3u);
  EXPECT_NEAR(roots[0], -3.0, 1e-12);
  EXPECT_NEAR(roots[1], 1.0, 1e-12);
  EXPECT_NEAR(roots[2], 2.0, 1e-12);
  // Zero root and a vanishing leading coefficient.
  auto r2 = PolyRealRoots(Poly{0.0, -4.0, 1.0, 0.0});
  std::sort(r2.begin(), r2.end());
  ASSERT_EQ(r2.size(), 2u);
  EXPECT_EQ(r2[0], 0.0);
  EXPECT_NEAR(r2[1], 4.0, 1e-12);
}

TEST(SolveP3P, SynthesizeAndRecover) {
  std::mt19937_64 rng(11);
  int recovered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const SE3Pose truth = RandomPose(rng);
    std::vector<RayPointCorrespondence> corrs;
    for (int i = 0; i < 3; ++i) {
      const Vector3 pc = RandomCameraPoint(rng);
      corrs.push_back({Ray{Vector3::Zero(), UnitVector3(pc)}, truth.Inverse() * pc});
    }
    auto poses = SolveP3P(corrs);
    ASSERT_TRUE(poses.ok());
    for (const auto& p : *poses) {
      for (const auto& c : corrs) {
        EXPECT_LT(AngleBetween(p * c.world, c.ray.direction.vec()), 1e-8);
      }
    }
    if (ContainsPose(*poses, truth, 1e-8)) ++recovered;
  }
  EXPECT_EQ(recovered, 1000);
}

TEST(SolveP3P, CollinearIsDegenerate) {
  std::vector<RayPointCorrespondence> corrs;
  for (int i = 0; i < 3; ++i) {
    const Vector3 x(0.5 * i, 0.2 * i, 4.0 + i);
    corrs.push_back({Ray{Vector3::Zero(), UnitVector3(x)}, x});
  }
  EXPECT_EQ(SolveP3P(corrs).code(), ErrorCode::kDegenerate);
}

TEST(SolveP3P, PointsBehindCameraFiltered) {
  std::mt19937_64 rng(12);
  std::vector<RayPointCorrespondence> corrs;
  for (int i = 0; i < 3; ++i) {
    const Vector3 pc = RandomCameraPoint(rng);
    // Rays point away from the points.
    corrs.push_back({Ray{Vector3::Zero(), UnitVector3(-pc)}, pc});
  }
  auto poses = SolveP3P(corrs);
  ASSERT_TRUE(poses.ok());
  for (const auto& p : *poses) {
    for (const auto& c : corrs) {
      EXPECT_GT((p * c.world).dot(c.ray.direction.vec()), 0.0);
    }
  }
  EXPECT_FALSE(ContainsPose(*poses, SE3Pose::Identity(), 1e-6));
}

TEST(SolveGP3P, CentralCaseMatchesP3P) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const SE3Pose truth = RandomPose(rng);
    std::vector<RayPointCorrespondence> corrs;
    for (int i = 0; i < 3; ++i) {
      const Vector3 pc = RandomCameraPoint(rng);
      corrs.push_back({Ray{Vector3::Zero(), UnitVector3(pc)}, truth.Inverse() * pc});
    }
    auto central = SolveP3P(corrs);
    auto general = SolveGP3P(corrs);
    ASSERT_TRUE(central.ok());
    ASSERT_TRUE(general.ok());
    for (const auto& p : *central) EXPECT_TRUE(ContainsPose(*general, p, 1e-8));
    EXPECT_TRUE(ContainsPose(*general, truth, 1e-8));
  }
}

TEST(SolveGP3P, AxialOriginsSynthesizeAndRecover) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> shift(-0.005, 0.005);
  for (int trial = 0; trial < 1000; ++trial) {
    const SE3Pose truth = RandomPose(rng);
    const Vector3 axis = RandomUnit(rng);
    std::vector<RayPointCorrespondence> corrs;
    for (int i = 0; i < 3; ++i) {
      const Vector3 origin = shift(rng) * axis;
      const Vector3 pc = origin + RandomCameraPoint(rng);
      corrs.push_back({Ray{origin, UnitVector3(pc - origin)}, truth.Inverse() * pc});
    }
    auto poses = SolveGP3P(corrs);
    ASSERT_TRUE(poses.ok());
    for (const auto& p : *poses) {
      for (const auto& c : corrs) {
        EXPECT_LT(AngleBetween(p * c.world - c.ray.origin, c.ray.direction.vec()), 1e-8);
      }
    }
    EXPECT_TRUE(ContainsPose(*poses, truth, 1e-6)) << "trial " << trial;
  }
}

TEST(SolveGP3P, RefractiveVirtualCameraRays) {
  std::mt19937_64 rng(15);
  const std::vector<RefractiveCameraModel> models = {
      FlatModel(Vector3(0, 0, 1), 0.01), FlatModel(Vector3(0.166, 0.148, 0.975), 0.05),
      DomeModel(Vector3(0, 0, 0.003)), DomeModel(Vector3(0, 0, 0.03)),
      DomeModel(Vector3(0.003, 0, 0)), DomeModel(Vector3(0.03, 0, 0))};
  for (const auto& model : models) {
    for (int trial = 0; trial < 200; ++trial) {
      const SE3Pose truth = RandomPose(rng);
      std::vector<RayPointCorrespondence> corrs;
      for (int i = 0; i < 3; ++i) {
        corrs.push_back(RefractedCorrespondence(model, truth, truth.Inverse() *
                                                                  RandomCameraPoint(rng)));
      }
      auto poses = SolveGP3P(corrs);
      ASSERT_TRUE(poses.ok());
      EXPECT_TRUE(ContainsPose(*poses, truth, 1e-6));
    }
  }
}

TEST(SolveGP3P, ContinuousTowardsCentralLimit) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const SE3Pose truth = RandomPose(rng);
    std::array<Vector3, 3> pc, offset;
    for (int i = 0; i < 3; ++i) {
      pc[i] = RandomCameraPoint(rng);
      offset[i] = 0.01 * RandomUnit(rng);
    }
    SE3Pose previous = truth;
    bool first = true;
    for (int step = 100; step >= 0; --step) {
      const double s = step / 100.0;
      std::vector<RayPointCorrespondence> corrs;
      for (int i = 0; i < 3; ++i) {
        const Vector3 origin = s * offset[i];
        corrs.push_back({Ray{origin, UnitVector3(pc[i] - origin)}, truth.Inverse() * pc[i]});
      }
      auto poses = SolveGP3P(corrs);
      ASSERT_TRUE(poses.ok());
      ASSERT_FALSE(poses->empty());
      // Follow the candidate nearest to the previous step.
      double best = std::numeric_limits<double>::infinity();
      SE3Pose chosen;
      for (const auto& p : *poses) {
        const double d = (p.rotation - previous.rotation).norm() +
                         (p.translation - previous.translation).norm();
        if (d < best) {
          best = d;
          chosen = p;
        }
      }
      if (!first) EXPECT_LT(best, 1e-4);
      first = false;
      previous = chosen;
    }
    EXPECT_TRUE(PoseNear(previous, truth, 1e-8));
  }
}

TEST(SolveGP3P, CollinearIsDegenerate) {
  std::vector<RayPointCorrespondence> corrs;
  for (int i = 0; i < 3; ++i) {
    const Vector3 x(0.5 * i, 0.2 * i, 4.0 + i);
    corrs.push_back({Ray{Vector3(0, 0, 0.001 * i), UnitVector3(x)}, x});
  }
  EXPECT_EQ(SolveGP3P(corrs).code(), ErrorCode::kDegenerate);
}

struct TwoViewInstance {
  SE3Pose b_from_a;
  std::vector<PixelPair> pairs;
};

TwoViewInstance RandomTwoView(std::mt19937_64& rng, int count, double baseline = 1.0) {
  TwoViewInstance inst;
  std::uniform_real_distribution<double> angle(0.0, 0.5);
  inst.b_from_a.rotation = ExpSO3(angle(rng) * RandomUnit(rng));
  inst.b_from_a.translation = baseline * RandomUnit(rng);
  while (static_cast<int>(inst.pairs.size()) < count) {
    const Vector3 pa = RandomCameraPoint(rng, 2.0, 10.0);
    const Vector3 pb = inst.b_from_a * pa;
    if (pb.z() < 0.5) continue;
    inst.pairs.push_back(PixelPair::FromNormalized(pa, pb));
  }
  return inst;
}

Matrix3 NormalizedSigned(const Matrix3& e, const Matrix3& ref) {
  const Matrix3 n = e / e.norm();
  return (n - ref).norm() < (n + ref).norm() ? n : -n;
}

TEST(SolveFivePoint, SynthesizeAndRecover) {
  std::mt19937_64 rng(17);
  int recovered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = RandomTwoView(rng, 5);
    const Matrix3 truth = EssentialFromPose(inst.b_from_a).normalized();
    auto sols = SolveFivePoint(inst.pairs);
    ASSERT_TRUE(sols.ok());
    bool found = false;
    for (const Matrix3& e : *sols) {
      for (const auto& pair : inst.pairs) {
        EXPECT_LT(std::abs(pair.x_b.dot(e * pair.x_a)), 1e-8);
      }
      const Matrix3 trace = 2.0 * e * e.transpose() * e - (e * e.transpose()).trace() * e;
      EXPECT_LT(trace.norm(), 1e-8);
      if ((NormalizedSigned(e, truth) - truth).norm() < 1e-6) found = true;
    }
    if (found) ++recovered;
  }
  EXPECT_EQ(recovered, 1000);
}

TEST(SolveFivePoint, IdenticalPairsFailOrEmpty) {
  const PixelPair pair = PixelPair::FromNormalized(Vector3(0.1, 0.2, 1.0), Vector3(0.3, -0.1, 1.0));
  auto sols = SolveFivePoint(std::vector<PixelPair>(5, pair));
  if (sols.ok()) {
    // Any returned matrix must still satisfy the constraint.
    for (const auto& e : *sols) EXPECT_LT(std::abs(pair.x_b.dot(e * pair.x_a)), 1e-8);
  } else {
    EXPECT_EQ(sols.code(), ErrorCode::kNumericalFailure);
  }
}

TEST(DecomposeEssential, RecoversMotion) {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = RandomTwoView(rng, 30);
    auto pose = DecomposeEssential(EssentialFromPose(inst.b_from_a), inst.pairs);
    ASSERT_TRUE(pose.ok());
    EXPECT_LT((pose->rotation - inst.b_from_a.rotation).norm(), 1e-6);
    EXPECT_NEAR(pose->translation.norm(), 1.0, 1e-12);
    EXPECT_LT(numerics::RadToDeg(AngleBetween(pose->translation, inst.b_from_a.translation)),
              0.01);
  }
}

TEST(DecomposeEssential, ChoiceInvariantUnderSceneScaling) {
  std::mt19937_64 rng(19);
  const auto inst = RandomTwoView(rng, 30);
  const Matrix3 e = EssentialFromPose(inst.b_from_a);
  auto a = DecomposeEssential(e, inst.pairs);
  auto b = DecomposeEssential(1e3 * e, inst.pairs);
  auto c = DecomposeEssential(1e-3 * e, inst.pairs);
  ASSERT_TRUE(a.ok() && b.ok() && c.ok());
  EXPECT_LT((a->rotation - b->rotation).norm(), 1e-12);
  EXPECT_LT((a->translation - c->translation).norm(), 1e-12);
}

TEST(DecomposeEssential, MixedCheiralityHasNoParallax) {
  std::mt19937_64 rng(20);
  const SE3Pose pose = RandomTwoView(rng, 1).b_from_a;
  // Half of the finite points sit behind both cameras (the mirrored scene),
  // and points at infinity cast no vote: no factorization reaches 50%.
  std::vector<PixelPair> pairs;
  while (pairs.size() < 16) {
    const Vector3 pa = RandomCameraPoint(rng, 2.0, 10.0) * (pairs.size() % 2 ? -1.0 : 1.0);
    const Vector3 pb = pose * pa;
    if (std::abs(pb.z()) < 0.5 || (pb.z() > 0) != (pa.z() > 0)) continue;
    pairs.push_back(PixelPair::FromNormalized(pa, pb));
  }
  for (int i = 0; i < 4; ++i) {
    const Vector3 dir = RandomCameraPoint(rng);
    pairs.push_back(PixelPair::FromNormalized(dir, pose.rotation * dir));
  }
  EXPECT_EQ(DecomposeEssential(EssentialFromPose(pose), pairs).code(), ErrorCode::kNoParallax);
}

TEST(DecomposeEssential, SinglePairStillDecomposes) {
  std::mt19937_64 rng(21);
  const auto inst = RandomTwoView(rng, 1);
  EXPECT_TRUE(DecomposeEssential(EssentialFromPose(inst.b_from_a), inst.pairs).ok());
}

TEST(DecomposeEssential, PureRotationHasNoParallax) {
  std::mt19937_64 rng(22);
  const Matrix3 r = ExpSO3(0.3 * RandomUnit(rng));
  std::vector<PixelPair> pairs;
  for (int i = 0; i < 5; ++i) {
    const Vector3 pa = RandomCameraPoint(rng);
    pairs.push_back(PixelPair::FromNormalized(pa, r * pa));
  }
  auto sols = SolveFivePoint(pairs);
  if (!sols.ok()) return;
  for (const auto& e : *sols) {
    EXPECT_EQ(DecomposeEssential(e, pairs).code(), ErrorCode::kNoParallax);
  }
}

TEST(TriangulateDLT, PinholeTwoViews) {
  std::mt19937_64 rng(23);
  const auto k = Intrinsics();
  for (int trial = 0; trial < 100; ++trial) {
    const SE3Pose a = RandomPose(rng);
    const SE3Pose b = SE3Pose(ExpSO3(0.1 * RandomUnit(rng)), Vector3(1.0, 0.0, 0.0)) * a;
    const Vector3 pa = RandomCameraPoint(rng, 3.0, 8.0);
    const Vector3 world = a.Inverse() * pa;
    if ((b * world).z() < 0.5) continue;
    VirtualCamera vc;
    vc.focal = k.fx;
    vc.principal = Vector2(k.cx, k.cy);
    std::vector<TriangulationObservation> obs = {{vc, a, k.Project(a * world)},
                                                 {vc, b, k.Project(b * world)}};
    auto x = TriangulateDLT(obs);
    ASSERT_TRUE(x.ok());
    EXPECT_LT((*x - world).norm(), 1e-9);
  }
}

TEST(TriangulateDLT, FlatPortTwoViews) {
  const auto model = FlatModel(Vector3(0.166, 0.148, 0.975), 0.02);
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const SE3Pose a = RandomPose(rng);
    const SE3Pose b = SE3Pose(ExpSO3(0.05 * RandomUnit(rng)), Vector3(0.5, 0.1, 0.0)) * a;
    const Vector3 pa = 2.0 * RandomCameraPoint(rng, 1.0, 1.0).normalized();
    const Vector3 world = a.Inverse() * pa;
    if ((b * world).z() < 0.5) continue;
    std::vector<TriangulationObservation> obs;
    for (const SE3Pose& pose : {a, b}) {
      const Vector2 px = *ForwardProject(model, pose * world);
      obs.push_back({*ComputeVirtualCamera(model, px), pose, px});
    }
    auto x = TriangulateDLT(obs);
    ASSERT_TRUE(x.ok());
    EXPECT_LT((*x - world).norm(), 1e-7);
  }
}

TEST(TriangulateDLT, ParallelRaysAndCheirality) {
  const auto k = Intrinsics();
  VirtualCamera vc;
  vc.focal = k.fx;
  vc.principal = Vector2(k.cx, k.cy);
  const SE3Pose a;
  const SE3Pose b(Matrix3::Identity(), Vector3(-1e-3, 0, 0));
  const Vector3 far(0.0, 0.0, 1000.0);
  std::vector<TriangulationObservation> obs = {{vc, a, k.Project(a * far)},
                                               {vc, b, k.Project(b * far)}};
  EXPECT_EQ(TriangulateDLT(obs).code(), ErrorCode::kInsufficientAngle);

  // Rays that diverge: their closest approach lies behind both cameras.
  const SE3Pose c(Matrix3::Identity(), Vector3(-1.0, 0, 0));
  std::vector<TriangulationObservation> behind = {{vc, a, Vector2(k.cx - 100.0, k.cy)},
                                                  {vc, c, Vector2(k.cx + 100.0, k.cy)}};
  EXPECT_EQ(TriangulateDLT(behind).code(), ErrorCode::kCheiralityViolation);
}

TEST(SampsonDistance, ExactAndGuard) {
  std::mt19937_64 rng(25);
  const auto inst = RandomTwoView(rng, 10);
  const Matrix3 e = EssentialFromPose(inst.b_from_a);
  for (const auto& pair : inst.pairs) {
    EXPECT_LT(SampsonDistance(e, pair.x_a, pair.x_b), 1e-14);
  }
  const double d = SampsonDistance(Matrix3::Zero(), inst.pairs[0].x_a, inst.pairs[0].x_b);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_EQ(d, 0.0);
}

// Minimal total image displacement that satisfies the epipolar constraint,
// by iterating first-order corrections to convergence.
double GeometricEpipolarDistance(const Matrix3& e, const Vector3& x_a, const Vector3& x_b) {
  const Eigen::Vector4d p0(x_a.x(), x_a.y(), x_b.x(), x_b.y());
  Eigen::Vector4d p = p0;
  for (int it = 0; it < 50; ++it) {
    const Vector3 a(p[0], p[1], 1.0), b(p[2], p[3], 1.0);
    const Vector3 ea = e * a, etb = e.transpose() * b;
    const Eigen::Vector4d grad(etb.x(), etb.y(), ea.x(), ea.y());
    // Closest point to p0 on the constraint linearized at p.
    const double lambda = (b.dot(ea) + grad.dot(p0 - p)) / grad.squaredNorm();
    p = p0 - lambda * grad;
  }
  const Vector3 a(p[0], p[1], 1.0), b(p[2], p[3], 1.0);
  return std::sqrt((a - x_a).squaredNorm() + (b - x_b).squaredNorm());
}

TEST(SampsonDistance, MatchesGeometricDistanceForSmallNoise) {
  std::mt19937_64 rng(26);
  std::normal_distribution<double> noise(0.0, 5e-4);
  const auto inst = RandomTwoView(rng, 200);
  const Matrix3 e = EssentialFromPose(inst.b_from_a);
  for (const auto& pair : inst.pairs) {
    const Vector3 a = pair.x_a + Vector3(noise(rng), noise(rng), 0.0);
    const Vector3 b = pair.x_b + Vector3(noise(rng), noise(rng), 0.0);
    const double geometric = GeometricEpipolarDistance(e, a, b);
    const double sampson = SampsonDistance(e, a, b);
    EXPECT_NEAR(sampson, geometric, 0.1 * geometric + 1e-14);
  }
}

}  // namespace
}  // namespace rsfm
