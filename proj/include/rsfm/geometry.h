#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "rsfm/status.h"

namespace rsfm {

using Vector2 = Eigen::Vector2d;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

// Direction vector held at unit norm.
class UnitVector3 {
 public:
  UnitVector3() : v_(0.0, 0.0, 1.0) {}
  // Normalizes the argument; a zero vector is rejected.
  explicit UnitVector3(const Vector3& v);
  UnitVector3(double x, double y, double z) : UnitVector3(Vector3(x, y, z)) {}

  const Vector3& vec() const { return v_; }
  operator const Vector3&() const { return v_; }  // NOLINT
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  double operator[](int i) const { return v_[i]; }
  UnitVector3 operator-() const;

 private:
  Vector3 v_;
};

// Rigid transform b_T_a: maps a point in frame a to frame b as R * x + t.
struct SE3Pose {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  SE3Pose() = default;
  SE3Pose(const Matrix3& r, const Vector3& t) : rotation(r), translation(t) {}
  SE3Pose(const Eigen::Quaterniond& q, const Vector3& t)
      : rotation(q.normalized().toRotationMatrix()), translation(t) {}

  static SE3Pose Identity() { return {}; }

  Vector3 operator*(const Vector3& x) const { return rotation * x + translation; }
  // (this * other)(x) = this(other(x)).
  SE3Pose operator*(const SE3Pose& other) const;
  SE3Pose Inverse() const;

  // Origin of frame b expressed in frame a (camera center for world-to-camera).
  Vector3 Center() const { return -rotation.transpose() * translation; }
  Eigen::Quaterniond Quaternion() const { return Eigen::Quaterniond(rotation); }
};

// Geodesic angle of R_a^T R_b in radians.
double RotationAngle(const Matrix3& a, const Matrix3& b);
// Angle between two non-zero vectors in radians.
double AngleBetween(const Vector3& a, const Vector3& b);
// Rotation exp map of an axis-angle vector.
Matrix3 ExpSO3(const Vector3& omega);
Vector3 LogSO3(const Matrix3& rotation);
Matrix3 Skew(const Vector3& v);

struct Ray {
  Vector3 origin = Vector3::Zero();
  UnitVector3 direction;

  Vector3 At(double t) const { return origin + t * direction.vec(); }
};

// Unbounded line through a point along a unit direction.
using Line = Ray;

// Points x with normal . x = offset.
struct Plane {
  UnitVector3 normal;
  double offset = 0.0;
};

struct Sphere {
  Vector3 center = Vector3::Zero();
  double radius = 1.0;

  Sphere() = default;
  Sphere(const Vector3& c, double r);
};

// Refracts the unit incident direction at an interface whose normal points
// toward the transmission side, with ratio = n_incident / n_transmitted.
Expected<UnitVector3> SnellRefract(const UnitVector3& incident,
                                   const UnitVector3& normal, double ratio);

Expected<Vector3> IntersectRayPlane(const Ray& ray, const Plane& plane);
Expected<Vector3> IntersectRaySphere(const Ray& ray, const Sphere& sphere);

struct LineClosestPoints {
  Vector3 on_a;
  Vector3 on_b;
  double distance = 0.0;
};

LineClosestPoints ClosestPointsOnLinesUnchecked(const Line& a, const Line& b);
Expected<LineClosestPoints> ClosestPointsOnLines(const Line& a, const Line& b);

}  // namespace rsfm
