#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "rsfm/geometry.h"
#include "rsfm/status.h"

namespace rsfm {

// Pinhole intrinsics with optional two-term radial distortion.
struct PinholeIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  double k1 = 0.0;
  double k2 = 0.0;

  // Horizontal field of view in degrees; fy = fx and centered principal point.
  static PinholeIntrinsics FromFov(double hfov_deg, int width, int height);

  bool IsValid() const;
  double MeanFocal() const { return 0.5 * (fx + fy); }

  Vector2 Distort(const Vector2& normalized) const;
  Vector2 Undistort(const Vector2& distorted) const;

  // Pixel -> undistorted normalized image coordinates.
  Vector2 PixelToNormalized(const Vector2& pixel) const;
  // Camera-frame point -> pixel (with distortion). Point must have z > 0.
  Vector2 Project(const Vector3& point) const;
};

struct MediaIndices {
  double air = 1.0;
  double glass = 1.52;
  double water = 1.334;
};

struct FlatPortParams {
  UnitVector3 normal;          // local camera frame, facing the scene
  double distance = 0.01;      // camera center to inner interface (m)
  double thickness = 0.005;    // glass thickness (m)
  MediaIndices indices;

  bool IsValid() const;
};

struct DomePortParams {
  Vector3 center = Vector3::Zero();  // decentering, local camera frame (m)
  double radius = 0.05;              // inner radius (m)
  double thickness = 0.005;          // m
  MediaIndices indices;

  bool IsValid() const;
};

enum class PortType { kPinhole, kFlat, kDome };

const char* PortTypeName(PortType type);

class RefractiveCameraModel {
 public:
  RefractiveCameraModel() = default;
  explicit RefractiveCameraModel(const PinholeIntrinsics& intrinsics)
      : intrinsics_(intrinsics) {}
  RefractiveCameraModel(const PinholeIntrinsics& intrinsics, const FlatPortParams& flat)
      : intrinsics_(intrinsics), port_(flat) {}
  RefractiveCameraModel(const PinholeIntrinsics& intrinsics, const DomePortParams& dome)
      : intrinsics_(intrinsics), port_(dome) {}

  const PinholeIntrinsics& intrinsics() const { return intrinsics_; }
  PinholeIntrinsics& mutable_intrinsics() { return intrinsics_; }

  PortType port_type() const;
  bool IsRefractive() const { return port_type() != PortType::kPinhole; }
  const FlatPortParams& flat() const { return std::get<FlatPortParams>(port_); }
  const DomePortParams& dome() const { return std::get<DomePortParams>(port_); }
  FlatPortParams& mutable_flat() { return std::get<FlatPortParams>(port_); }
  DomePortParams& mutable_dome() { return std::get<DomePortParams>(port_); }

  bool IsValid() const;

  // Optimizable refractive parameters: flat (nx, ny, nz, d_int), dome
  // (cx, cy, cz), pinhole: empty.
  std::vector<double> RefractiveParams() const;
  void SetRefractiveParams(const std::vector<double>& params);
  void SetRefractiveParams(const double* params);
  int NumRefractiveParams() const;

 private:
  PinholeIntrinsics intrinsics_;
  std::variant<std::monostate, FlatPortParams, DomePortParams> port_;
};

// Per-observation pinhole surrogate: identity rotation relative to the real
// camera, center on the refraction axis.
struct VirtualCamera {
  Vector3 center = Vector3::Zero();  // real-camera frame (m)
  double focal = 1.0;
  Vector2 principal = Vector2::Zero();

  // Projects a point given in the real-camera frame.
  Vector2 Project(const Vector3& point_in_real) const {
    const Vector3 p = point_in_real - center;
    return Vector2(focal * p.x() / p.z() + principal.x(),
                   focal * p.y() / p.z() + principal.y());
  }
  // Normalized virtual image coordinates of a pixel.
  Vector3 Normalized(const Vector2& pixel) const {
    return Vector3((pixel.x() - principal.x()) / focal,
                   (pixel.y() - principal.y()) / focal, 1.0);
  }
  // v_T_r: real-camera frame -> virtual-camera frame.
  SE3Pose FromReal() const { return SE3Pose(Matrix3::Identity(), -center); }
};

// Pixel -> ray in water (real-camera frame), origin on the outer interface.
Expected<Ray> BackProject(const RefractiveCameraModel& model, const Vector2& pixel);

// Line through the camera center along which rays cross the port normally.
Expected<Line> RefractionAxis(const RefractiveCameraModel& model);

Expected<VirtualCamera> ComputeVirtualCamera(const RefractiveCameraModel& model,
                                             const Vector2& pixel);

struct ForwardProjectResult {
  Vector2 pixel;
  int iterations = 0;
  bool damped = false;
};

// Refractive projection of a camera-frame point by fixed-point iteration over
// virtual cameras.
Expected<ForwardProjectResult> ForwardProjectDetailed(const RefractiveCameraModel& model,
                                                      const Vector3& point);
Expected<Vector2> ForwardProject(const RefractiveCameraModel& model, const Vector3& point);

struct PinholeFitOptions {
  int sample_count = 1000;
  double depth = 5.0;  // along the water ray from the outer interface (m)
  std::uint64_t seed = 0;
  bool fit_distortion = true;
};

struct PinholeFitResult {
  PinholeIntrinsics intrinsics;
  double initial_rms = 0.0;  // px, real intrinsics as the guess
  double final_rms = 0.0;    // px
};

// Pinhole (+ k1, k2) model that best reproduces the refractive projection of
// points sampled at a fixed depth.
Expected<PinholeFitResult> FitBestApproxPinhole(const RefractiveCameraModel& model,
                                                const PinholeFitOptions& options = {});

}  // namespace rsfm
