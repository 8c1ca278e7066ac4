#include "rsfm/camera.h"

#include <cmath>
#include <limits>
#include <random>

#include "rsfm/numerics.h"
#include "rsfm/optim.h"

namespace rsfm {

PinholeIntrinsics PinholeIntrinsics::FromFov(double hfov_deg, int width, int height) {
  PinholeIntrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 0.5 * width / std::tan(0.5 * numerics::DegToRad(hfov_deg));
  k.fy = k.fx;
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  return k;
}

bool PinholeIntrinsics::IsValid() const {
  return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 &&
         cx < width && cy >= 0.0 && cy < height && std::isfinite(k1) &&
         std::isfinite(k2);
}

Vector2 PinholeIntrinsics::Distort(const Vector2& normalized) const {
  if (k1 == 0.0 && k2 == 0.0) return normalized;
  const double r2 = normalized.squaredNorm();
  return normalized * (1.0 + k1 * r2 + k2 * r2 * r2);
}

Vector2 PinholeIntrinsics::Undistort(const Vector2& distorted) const {
  if (k1 == 0.0 && k2 == 0.0) return distorted;
  Vector2 u = distorted;
  for (int i = 0; i < numerics::kUndistortIters; ++i) {
    const double r2 = u.squaredNorm();
    u = distorted / (1.0 + k1 * r2 + k2 * r2 * r2);
  }
  return u;
}

Vector2 PinholeIntrinsics::PixelToNormalized(const Vector2& pixel) const {
  return Undistort(Vector2((pixel.x() - cx) / fx, (pixel.y() - cy) / fy));
}

Vector2 PinholeIntrinsics::Project(const Vector3& point) const {
  const Vector2 d = Distort(point.head<2>() / point.z());
  return Vector2(fx * d.x() + cx, fy * d.y() + cy);
}

bool FlatPortParams::IsValid() const {
  return normal.z() > 0.0 && distance > 0.0 && thickness >= 0.0;
}

bool DomePortParams::IsValid() const {
  return radius > 0.0 && thickness >= 0.0 && radius > thickness &&
         center.norm() < radius;
}

const char* PortTypeName(PortType type) {
  switch (type) {
    case PortType::kPinhole: return "pinhole";
    case PortType::kFlat: return "flat";
    case PortType::kDome: return "dome";
  }
  return "unknown";
}

PortType RefractiveCameraModel::port_type() const {
  if (std::holds_alternative<FlatPortParams>(port_)) return PortType::kFlat;
  if (std::holds_alternative<DomePortParams>(port_)) return PortType::kDome;
  return PortType::kPinhole;
}

bool RefractiveCameraModel::IsValid() const {
  if (!intrinsics_.IsValid()) return false;
  switch (port_type()) {
    case PortType::kFlat: return flat().IsValid();
    case PortType::kDome: return dome().IsValid();
    case PortType::kPinhole: return true;
  }
  return false;
}

int RefractiveCameraModel::NumRefractiveParams() const {
  switch (port_type()) {
    case PortType::kFlat: return 4;
    case PortType::kDome: return 3;
    case PortType::kPinhole: return 0;
  }
  return 0;
}

std::vector<double> RefractiveCameraModel::RefractiveParams() const {
  switch (port_type()) {
    case PortType::kFlat: {
      const auto& f = flat();
      return {f.normal.x(), f.normal.y(), f.normal.z(), f.distance};
    }
    case PortType::kDome: {
      const auto& d = dome();
      return {d.center.x(), d.center.y(), d.center.z()};
    }
    case PortType::kPinhole:
      return {};
  }
  return {};
}

void RefractiveCameraModel::SetRefractiveParams(const double* params) {
  switch (port_type()) {
    case PortType::kFlat: {
      auto& f = mutable_flat();
      f.normal = UnitVector3(params[0], params[1], params[2]);
      f.distance = params[3];
      return;
    }
    case PortType::kDome:
      mutable_dome().center = Vector3(params[0], params[1], params[2]);
      return;
    case PortType::kPinhole:
      return;
  }
}

void RefractiveCameraModel::SetRefractiveParams(const std::vector<double>& params) {
  if (static_cast<int>(params.size()) != NumRefractiveParams()) {
    throw std::invalid_argument("SetRefractiveParams: wrong parameter count");
  }
  SetRefractiveParams(params.data());
}

namespace {

Expected<Ray> TraceFlat(const FlatPortParams& port, const UnitVector3& dir) {
  const Ray cam_ray{Vector3::Zero(), dir};
  auto inner = IntersectRayPlane(cam_ray, Plane{port.normal, port.distance});
  if (!inner) return inner.error();
  auto in_glass = SnellRefract(dir, port.normal, port.indices.air / port.indices.glass);
  if (!in_glass) return in_glass.error();
  Vector3 outer_point = *inner;
  if (port.thickness > 0.0) {
    auto outer = IntersectRayPlane(Ray{*inner, *in_glass},
                                   Plane{port.normal, port.distance + port.thickness});
    if (!outer) return outer.error();
    outer_point = *outer;
  }
  auto in_water = SnellRefract(*in_glass, port.normal, port.indices.glass / port.indices.water);
  if (!in_water) return in_water.error();
  return Ray{outer_point, *in_water};
}

Expected<Ray> TraceDome(const DomePortParams& port, const UnitVector3& dir) {
  const Ray cam_ray{Vector3::Zero(), dir};
  auto inner = IntersectRaySphere(cam_ray, Sphere(port.center, port.radius));
  if (!inner) return inner.error();
  const UnitVector3 n_inner(*inner - port.center);
  auto in_glass = SnellRefract(dir, n_inner, port.indices.air / port.indices.glass);
  if (!in_glass) return in_glass.error();
  Vector3 outer_point = *inner;
  UnitVector3 n_outer = n_inner;
  if (port.thickness > 0.0) {
    auto outer = IntersectRaySphere(Ray{*inner, *in_glass},
                                    Sphere(port.center, port.radius + port.thickness));
    if (!outer) return outer.error();
    outer_point = *outer;
    n_outer = UnitVector3(outer_point - port.center);
  }
  auto in_water = SnellRefract(*in_glass, n_outer, port.indices.glass / port.indices.water);
  if (!in_water) return in_water.error();
  return Ray{outer_point, *in_water};
}

}  // namespace

Expected<Ray> BackProject(const RefractiveCameraModel& model, const Vector2& pixel) {
  const Vector2 n = model.intrinsics().PixelToNormalized(pixel);
  const UnitVector3 dir(n.x(), n.y(), 1.0);
  switch (model.port_type()) {
    case PortType::kFlat: return TraceFlat(model.flat(), dir);
    case PortType::kDome: return TraceDome(model.dome(), dir);
    case PortType::kPinhole: return Ray{Vector3::Zero(), dir};
  }
  return Ray{Vector3::Zero(), dir};
}

Expected<Line> RefractionAxis(const RefractiveCameraModel& model) {
  switch (model.port_type()) {
    case PortType::kFlat:
      return Line{Vector3::Zero(), model.flat().normal};
    case PortType::kDome: {
      const Vector3& c = model.dome().center;
      if (c.norm() < numerics::kCentralEpsilon) {
        return {ErrorCode::kCentralCamera, "dome is centered"};
      }
      return Line{Vector3::Zero(), UnitVector3(c)};
    }
    case PortType::kPinhole:
      return {ErrorCode::kCentralCamera, "pinhole camera"};
  }
  return {ErrorCode::kCentralCamera, ""};
}

Expected<VirtualCamera> ComputeVirtualCamera(const RefractiveCameraModel& model,
                                             const Vector2& pixel) {
  auto ray = BackProject(model, pixel);
  if (!ray) return ray.error();
  const Vector3& v = ray->direction.vec();
  if (!(v.z() > 0.0)) {
    return {ErrorCode::kNoIntersection, "water ray does not face forward"};
  }
  VirtualCamera vc;
  vc.focal = model.intrinsics().MeanFocal();
  vc.principal = pixel - vc.focal * v.head<2>() / v.z();

  auto axis = RefractionAxis(model);
  if (!axis) {
    // Central: the virtual camera sits at the real center.
    return vc;
  }
  auto closest = ClosestPointsOnLines(*axis, *ray);
  if (!closest) {
    // Ray travels along the axis; limit case keeps the real center.
    return vc;
  }
  vc.center = closest->on_a;
  return vc;
}

Expected<ForwardProjectResult> ForwardProjectDetailed(const RefractiveCameraModel& model,
                                                      const Vector3& point) {
  if (!(point.z() > 0.0)) {
    return {ErrorCode::kInvalidArgument, "point behind camera"};
  }
  ForwardProjectResult out;
  out.pixel = model.intrinsics().Project(point);
  if (!model.IsRefractive()) return out;
  if (model.port_type() == PortType::kDome &&
      model.dome().center.norm() < numerics::kCentralEpsilon) {
    // Centered dome: rays cross both spheres normally.
    out.iterations = 1;
    return out;
  }

  auto step = [&](const Vector2& px) -> Expected<Vector2> {
    auto vc = ComputeVirtualCamera(model, px);
    if (!vc) return vc.error();
    const Vector3 rel = point - vc->center;
    if (!(rel.z() > 0.0)) return {ErrorCode::kDiverged, "point behind virtual camera"};
    return vc->Project(point);
  };

  // Chord-preconditioned fixed point: p <- p + (I - J)^-1 (g(p) - p), with J
  // the finite-difference Jacobian of the map g, refreshed periodically.
  auto preconditioner = [&](const Vector2& px) -> Eigen::Matrix2d {
    constexpr double h = 1e-3;
    auto g0 = step(px);
    auto gx = step(px + Vector2(h, 0.0));
    auto gy = step(px + Vector2(0.0, h));
    if (!g0 || !gx || !gy) return Eigen::Matrix2d::Identity();
    Eigen::Matrix2d jac;
    jac.col(0) = (*gx - *g0) / h;
    jac.col(1) = (*gy - *g0) / h;
    const Eigen::Matrix2d a = Eigen::Matrix2d::Identity() - jac;
    if (!(std::abs(a.determinant()) > 1e-6)) return Eigen::Matrix2d::Identity();
    return a.inverse();
  };

  Vector2 px = out.pixel;
  Eigen::Matrix2d precond = preconditioner(px);
  double prev_step = std::numeric_limits<double>::infinity();
  int growth = 0;
  for (int it = 0; it < numerics::kForwardProjectMaxIters; ++it) {
    auto next = step(px);
    if (!next) break;
    const Vector2 delta = precond * (*next - px);
    const double dist = delta.norm();
    px += delta;
    out.iterations = it + 1;
    if (dist < numerics::kForwardProjectStepTol) {
      out.pixel = px;
      return out;
    }
    growth = dist > prev_step ? growth + 1 : 0;
    prev_step = dist;
    if (growth >= numerics::kForwardProjectGrowthLimit) break;
    if (it % 10 == 9) precond = preconditioner(px);
  }

  // Damped fallback with step halving.
  out.damped = true;
  px = out.pixel;
  double alpha = 0.5;
  for (int it = 0; it < numerics::kForwardProjectMaxIters; ++it) {
    auto next = step(px);
    if (!next) {
      alpha *= 0.5;
      if (alpha < 1e-6) break;
      continue;
    }
    const Vector2 delta = *next - px;
    if (delta.norm() < numerics::kForwardProjectStepTol) {
      out.pixel = px;
      out.iterations += it + 1;
      return out;
    }
    px += alpha * delta;
  }
  return {ErrorCode::kDiverged, "forward projection did not converge"};
}

Expected<Vector2> ForwardProject(const RefractiveCameraModel& model, const Vector3& point) {
  auto res = ForwardProjectDetailed(model, point);
  if (!res) return res.error();
  return res->pixel;
}

namespace {

class PinholeFitCost : public CostFunction {
 public:
  PinholeFitCost(std::vector<Vector3> points, std::vector<Vector2> pixels,
                 const PinholeIntrinsics& base)
      : points_(std::move(points)), pixels_(std::move(pixels)), base_(base) {}

  int NumResiduals() const override { return 2 * static_cast<int>(points_.size()); }

  bool Evaluate(const double* const* params, double* residuals,
                double* const* /*jacobians*/) const override {
    const PinholeIntrinsics k = Unpack(params[0]);
    for (size_t i = 0; i < points_.size(); ++i) {
      const Vector2 r = k.Project(points_[i]) - pixels_[i];
      residuals[2 * i] = r.x();
      residuals[2 * i + 1] = r.y();
    }
    return true;
  }

  PinholeIntrinsics Unpack(const double* p) const {
    PinholeIntrinsics k = base_;
    k.fx = p[0];
    k.fy = p[1];
    k.cx = p[2];
    k.cy = p[3];
    k.k1 = p[4];
    k.k2 = p[5];
    return k;
  }

 private:
  std::vector<Vector3> points_;
  std::vector<Vector2> pixels_;
  PinholeIntrinsics base_;
};

}  // namespace

Expected<PinholeFitResult> FitBestApproxPinhole(const RefractiveCameraModel& model,
                                                const PinholeFitOptions& options) {
  if (options.sample_count < 20 || !(options.depth > 0.0)) {
    return {ErrorCode::kInvalidArgument, "sample_count >= 20 and depth > 0 required"};
  }
  const PinholeIntrinsics& k = model.intrinsics();
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(k.width));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(k.height));
  std::vector<Vector3> points;
  std::vector<Vector2> pixels;
  points.reserve(options.sample_count);
  pixels.reserve(options.sample_count);
  for (int i = 0; i < options.sample_count; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    const Vector2 px(x, y);
    auto ray = BackProject(model, px);
    if (!ray) continue;
    const Vector3 p = ray->At(options.depth);
    if (!(p.z() > 0.0)) continue;
    points.push_back(p);
    pixels.push_back(px);
  }
  if (points.size() < 20) {
    return {ErrorCode::kOptimizationFailed, "too few valid samples"};
  }
  const double n = static_cast<double>(points.size());
  auto cost = std::make_shared<PinholeFitCost>(points, pixels, k);

  double params[6] = {k.fx, k.fy, k.cx, k.cy, options.fit_distortion ? k.k1 : 0.0,
                      options.fit_distortion ? k.k2 : 0.0};
  Problem problem;
  const int block = problem.AddParameterBlock(params, 6);
  if (!options.fit_distortion) problem.SetSubsetConstant(block, {4, 5});
  problem.AddResidualBlock(cost, RobustLoss::Trivial(), {block});

  PinholeFitResult result;
  const double initial = problem.EvaluateCost();
  result.initial_rms = std::sqrt(2.0 * initial / n);
  LMOptions lm;
  lm.max_iterations = 200;
  const SolveReport report = Solve(lm, &problem);
  if (!report.Usable() || !(report.final_cost <= initial)) {
    return {ErrorCode::kOptimizationFailed, "pinhole fit did not improve"};
  }
  result.intrinsics = cost->Unpack(params);
  result.final_rms = std::sqrt(2.0 * report.final_cost / n);
  return result;
}

}  // namespace rsfm
