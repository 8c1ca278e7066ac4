#include "rsfm/geometry.h"

#include <algorithm>
#include <cmath>

#include "rsfm/numerics.h"

namespace rsfm {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kTotalInternalReflection: return "TotalInternalReflection";
    case ErrorCode::kNoIntersection: return "NoIntersection";
    case ErrorCode::kParallelLines: return "ParallelLines";
    case ErrorCode::kCentralCamera: return "CentralCamera";
    case ErrorCode::kDegenerateAxialRay: return "DegenerateAxialRay";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kOptimizationFailed: return "OptimizationFailed";
    case ErrorCode::kDegenerate: return "Degenerate";
    case ErrorCode::kNoSolution: return "NoSolution";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
    case ErrorCode::kNoParallax: return "NoParallax";
    case ErrorCode::kInsufficientAngle: return "InsufficientAngle";
    case ErrorCode::kCheiralityViolation: return "ChieralityViolation";
    case ErrorCode::kRansacFailed: return "Failed";
    case ErrorCode::kMaxIterations: return "MaxIterations";
    case ErrorCode::kGaugeUnderconstrained: return "GaugeUnderconstrained";
    case ErrorCode::kInitializationFailed: return "InitializationFailed";
    case ErrorCode::kRegistrationFailed: return "RegistrationFailed";
    case ErrorCode::kInsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::kGenerationFailed: return "GenerationFailed";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

UnitVector3::UnitVector3(const Vector3& v) {
  const double norm = v.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("UnitVector3: zero or non-finite vector");
  }
  v_ = v / norm;
  // One extra pass pulls the norm to within an ulp or two of 1.
  v_ /= v_.norm();
}

UnitVector3 UnitVector3::operator-() const { return UnitVector3(-v_); }

SE3Pose SE3Pose::operator*(const SE3Pose& other) const {
  return SE3Pose(rotation * other.rotation, rotation * other.translation + translation);
}

SE3Pose SE3Pose::Inverse() const {
  const Matrix3 rt = rotation.transpose();
  return SE3Pose(rt, -rt * translation);
}

double RotationAngle(const Matrix3& a, const Matrix3& b) {
  return LogSO3(a.transpose() * b).norm();
}

double AngleBetween(const Vector3& a, const Vector3& b) {
  // atan2 form stays accurate for nearly parallel vectors.
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

Matrix3 Skew(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Matrix3 ExpSO3(const Vector3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    return Matrix3::Identity() + Skew(omega);
  }
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Vector3 LogSO3(const Matrix3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

Sphere::Sphere(const Vector3& c, double r) : center(c), radius(r) {
  if (!(r > 0.0)) {
    throw std::invalid_argument("Sphere: radius must be positive");
  }
}

Expected<UnitVector3> SnellRefract(const UnitVector3& incident,
                                   const UnitVector3& normal, double ratio) {
  const Vector3& v = incident.vec();
  const Vector3& n = normal.vec();
  const double c = n.dot(v);
  const double radicand = 1.0 - ratio * ratio * (1.0 - c * c);
  if (radicand < 0.0) {
    return {ErrorCode::kTotalInternalReflection, "snell radicand negative"};
  }
  const Vector3 refracted = ratio * v - (ratio * c - std::sqrt(radicand)) * n;
  return UnitVector3(refracted);
}

Expected<Vector3> IntersectRayPlane(const Ray& ray, const Plane& plane) {
  const double denom = plane.normal.vec().dot(ray.direction.vec());
  if (std::abs(denom) < numerics::kParallelTol) {
    return {ErrorCode::kNoIntersection, "ray parallel to plane"};
  }
  const double t = (plane.offset - plane.normal.vec().dot(ray.origin)) / denom;
  if (!(t > 0.0)) {
    return {ErrorCode::kNoIntersection, "plane behind ray origin"};
  }
  return ray.At(t);
}

Expected<Vector3> IntersectRaySphere(const Ray& ray, const Sphere& sphere) {
  // |o + t d - c|^2 = r^2 with |d| = 1: t^2 + 2 b t + k = 0.
  const Vector3 oc = ray.origin - sphere.center;
  const double b = oc.dot(ray.direction.vec());
  const double k = oc.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - k;
  if (disc < 0.0) {
    return {ErrorCode::kNoIntersection, "ray misses sphere"};
  }
  const double sq = std::sqrt(disc);
  // Stable root pair: t1 * t2 = k.
  const double q = b > 0.0 ? -(b + sq) : -(b - sq);
  double t0 = q;
  double t1 = q != 0.0 ? k / q : 0.0;
  if (t0 > t1) std::swap(t0, t1);
  double t = t0 > 0.0 ? t0 : t1;
  if (!(t > 0.0)) {
    return {ErrorCode::kNoIntersection, "sphere behind ray origin"};
  }
  return ray.At(t);
}

LineClosestPoints ClosestPointsOnLinesUnchecked(const Line& a, const Line& b) {
  // Cross-product form; stays accurate for nearly parallel lines.
  const Vector3& da = a.direction.vec();
  const Vector3& db = b.direction.vec();
  const Vector3 n = da.cross(db);
  const double n2 = n.squaredNorm();
  const Vector3 ab = b.origin - a.origin;
  const double sa = ab.cross(db).dot(n) / n2;
  const double sb = ab.cross(da).dot(n) / n2;
  LineClosestPoints out;
  out.on_a = a.At(sa);
  out.on_b = b.At(sb);
  out.distance = (out.on_a - out.on_b).norm();
  return out;
}

Expected<LineClosestPoints> ClosestPointsOnLines(const Line& a, const Line& b) {
  if (a.direction.vec().cross(b.direction.vec()).norm() < numerics::kLineParallelTol) {
    return {ErrorCode::kParallelLines, "lines are parallel"};
  }
  return ClosestPointsOnLinesUnchecked(a, b);
}

}  // namespace rsfm
