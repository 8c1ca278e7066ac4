#include "rsfm/estimators.h"

#include <cmath>
#include <limits>
#include <optional>

namespace rsfm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> ModelKey(const RefractiveCameraModel& model) {
  const auto& k = model.intrinsics();
  std::vector<double> key = {k.fx, k.fy, k.cx, k.cy, double(k.width), double(k.height), k.k1,
                             k.k2, double(static_cast<int>(model.port_type()))};
  if (model.port_type() == PortType::kFlat) {
    const auto& f = model.flat();
    key.insert(key.end(), {f.normal.x(), f.normal.y(), f.normal.z(), f.distance, f.thickness,
                           f.indices.air, f.indices.glass, f.indices.water});
  } else if (model.port_type() == PortType::kDome) {
    const auto& d = model.dome();
    key.insert(key.end(), {d.center.x(), d.center.y(), d.center.z(), d.radius, d.thickness,
                           d.indices.air, d.indices.glass, d.indices.water});
  }
  return key;
}

Expected<SE3Pose> DecomposeOnInliers(const Matrix3& essential, const std::vector<PixelPair>& pairs,
                                     const std::vector<char>& mask) {
  std::vector<PixelPair> inliers;
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (mask[i]) inliers.push_back(pairs[i]);
  }
  return DecomposeEssential(essential, inliers);
}

Expected<RansacReport<Matrix3>> EssentialRansac(const std::vector<PixelPair>& pairs,
                                                const RansacOptions& options) {
  const std::function<std::vector<Matrix3>(const std::vector<int>&)> solver =
      [&](const std::vector<int>& sample) {
        std::vector<PixelPair> minimal;
        for (int i : sample) minimal.push_back(pairs[i]);
        auto sols = SolveFivePoint(minimal);
        return sols ? *sols : std::vector<Matrix3>{};
      };
  const std::function<double(const Matrix3&, int)> residual = [&](const Matrix3& e, int i) {
    return SampsonDistance(e, pairs[i].x_a, pairs[i].x_b);
  };
  return Ransac<Matrix3>(static_cast<int>(pairs.size()), 5, solver, residual, options);
}

// True when a single rotation maps most a-bearings onto b-bearings within
// the Sampson threshold, i.e. the pair carries no usable parallax.
bool ExplainedByRotation(const std::vector<PixelPair>& pairs, double threshold) {
  Matrix3 cov = Matrix3::Zero();
  for (const auto& p : pairs) cov += p.x_b.normalized() * p.x_a.normalized().transpose();
  const Eigen::JacobiSVD<Matrix3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 d = Matrix3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Matrix3 r = svd.matrixU() * d * svd.matrixV().transpose();
  size_t explained = 0;
  for (const auto& p : pairs) {
    if (AngleBetween(r * p.x_a, p.x_b) <= threshold) ++explained;
  }
  return 2 * explained >= pairs.size();
}

Expected<SE3Pose> SolveRelativePose(const std::vector<PixelPair>& pairs,
                                    const RansacOptions& options, RansacReport<Matrix3>* report) {
  auto ransac = EssentialRansac(pairs, options);
  if (!ransac) {
    if (ExplainedByRotation(pairs, options.threshold)) {
      return {ErrorCode::kNoParallax, "pure rotation"};
    }
    return ransac.error();
  }
  *report = *ransac;
  return DecomposeOnInliers(report->model, pairs, report->inlier_mask);
}

}  // namespace

double VirtualReprojectionError(const VirtualCamera& camera, const SE3Pose& cam_from_world,
                                const Vector3& world, const Vector2& pixel) {
  const Vector3 local = cam_from_world * world;
  if (!((local - camera.center).z() > 0.0)) return kInf;
  return (camera.Project(local) - pixel).norm();
}

Expected<RansacReport<SE3Pose>> EstimateAbsolutePoseRefractive(
    const RefractiveCameraModel& model, const std::vector<Correspondence2D3D>& corrs,
    const RansacOptions& options) {
  if (corrs.size() < 3) return {ErrorCode::kInvalidArgument, "need at least 3 correspondences"};
  const int n = static_cast<int>(corrs.size());
  std::vector<std::optional<VirtualCamera>> cameras(n);
  for (int i = 0; i < n; ++i) {
    auto vc = ComputeVirtualCamera(model, corrs[i].pixel);
    if (vc) cameras[i] = *vc;
  }

  const std::function<std::vector<SE3Pose>(const std::vector<int>&)> solver =
      [&](const std::vector<int>& sample) {
        std::vector<RayPointCorrespondence> rays;
        for (int i : sample) {
          if (!cameras[i]) return std::vector<SE3Pose>{};
          rays.push_back({Ray{cameras[i]->center,
                              UnitVector3(cameras[i]->Normalized(corrs[i].pixel))},
                          corrs[i].world});
        }
        auto poses = SolveGP3P(rays);
        return poses ? *poses : std::vector<SE3Pose>{};
      };
  const std::function<double(const SE3Pose&, int)> residual = [&](const SE3Pose& pose, int i) {
    if (!cameras[i]) return kInf;
    return VirtualReprojectionError(*cameras[i], pose, corrs[i].world, corrs[i].pixel);
  };
  return Ransac<SE3Pose>(n, 3, solver, residual, options);
}

Expected<RansacReport<SE3Pose>> EstimateAbsolutePoseCentral(
    const PinholeIntrinsics& intrinsics, const std::vector<Correspondence2D3D>& corrs,
    const RansacOptions& options) {
  if (corrs.size() < 3) return {ErrorCode::kInvalidArgument, "need at least 3 correspondences"};
  const int n = static_cast<int>(corrs.size());
  std::vector<Vector3> bearings(n);
  for (int i = 0; i < n; ++i) {
    const Vector2 m = intrinsics.PixelToNormalized(corrs[i].pixel);
    bearings[i] = Vector3(m.x(), m.y(), 1.0);
  }
  const std::function<std::vector<SE3Pose>(const std::vector<int>&)> solver =
      [&](const std::vector<int>& sample) {
        std::vector<RayPointCorrespondence> rays;
        for (int i : sample) {
          rays.push_back({Ray{Vector3::Zero(), UnitVector3(bearings[i])}, corrs[i].world});
        }
        auto poses = SolveP3P(rays);
        return poses ? *poses : std::vector<SE3Pose>{};
      };
  const std::function<double(const SE3Pose&, int)> residual = [&](const SE3Pose& pose, int i) {
    const Vector3 local = pose * corrs[i].world;
    if (!(local.z() > 0.0)) return kInf;
    return (intrinsics.Project(local) - corrs[i].pixel).norm();
  };
  return Ransac<SE3Pose>(n, 3, solver, residual, options);
}

Expected<PinholeIntrinsics> BestApproxPinholeCache::Get(const RefractiveCameraModel& model) {
  const auto key = ModelKey(model);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = fits_.find(key);
    if (it != fits_.end()) return it->second;
  }
  auto fit = FitBestApproxPinhole(model, options_);
  if (!fit) return fit.error();
  std::lock_guard<std::mutex> lock(mutex_);
  fits_[key] = fit->intrinsics;
  return fit->intrinsics;
}

std::vector<PixelPair> NormalizePixelPairs(const std::vector<std::pair<Vector2, Vector2>>& pixels,
                                           const PinholeIntrinsics& a,
                                           const PinholeIntrinsics& b) {
  std::vector<PixelPair> pairs;
  pairs.reserve(pixels.size());
  for (const auto& [pa, pb] : pixels) {
    PixelPair pair;
    pair.pixel_a = pa;
    pair.pixel_b = pb;
    const Vector2 na = a.PixelToNormalized(pa);
    const Vector2 nb = b.PixelToNormalized(pb);
    pair.x_a = Vector3(na.x(), na.y(), 1.0);
    pair.x_b = Vector3(nb.x(), nb.y(), 1.0);
    pairs.push_back(pair);
  }
  return pairs;
}

double VirtualSampsonResidual(const RefractiveCameraModel& model_a,
                              const RefractiveCameraModel& model_b, const SE3Pose& b_from_a,
                              const Vector2& pixel_a, const Vector2& pixel_b) {
  auto va = ComputeVirtualCamera(model_a, pixel_a);
  auto vb = ComputeVirtualCamera(model_b, pixel_b);
  if (!va || !vb) return kInf;
  // vb_T_va = vb_T_b * b_T_a * (va_T_a)^-1 with identity virtual rotations.
  const Vector3 t = b_from_a.rotation * va->center + b_from_a.translation - vb->center;
  const Matrix3 e = Skew(t) * b_from_a.rotation;
  return SampsonDistance(e, va->Normalized(pixel_a), vb->Normalized(pixel_b));
}

Expected<RelativePoseResult> EstimateRelativePoseRefractive(
    const RefractiveCameraModel& model_a, const RefractiveCameraModel& model_b,
    const std::vector<std::pair<Vector2, Vector2>>& pixels, const RelativePoseOptions& options,
    BestApproxPinholeCache* cache) {
  if (pixels.size() < 5) return {ErrorCode::kInvalidArgument, "need at least 5 pairs"};
  BestApproxPinholeCache local_cache;
  if (cache == nullptr) cache = &local_cache;
  auto approx_a = cache->Get(model_a);
  if (!approx_a) return approx_a.error();
  auto approx_b = cache->Get(model_b);
  if (!approx_b) return approx_b.error();

  const auto pairs = NormalizePixelPairs(pixels, *approx_a, *approx_b);
  RansacReport<Matrix3> ransac;
  auto pose = SolveRelativePose(pairs, options.ransac, &ransac);
  if (!pose) return pose.error();

  RelativePoseResult result;
  result.essential = ransac.model;
  result.report.model = *pose;
  result.report.inlier_mask = ransac.inlier_mask;
  result.report.num_inliers = ransac.num_inliers;
  result.report.inlier_ratio = ransac.inlier_ratio;
  result.report.mean_inlier_residual = ransac.mean_inlier_residual;
  result.report.iterations = ransac.iterations;
  result.report.success = true;
  result.pinhole_inlier_ratio = ransac.inlier_ratio;

  const int n = static_cast<int>(pixels.size());
  result.virtual_inlier_mask.assign(n, 0);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    const double r =
        VirtualSampsonResidual(model_a, model_b, *pose, pixels[i].first, pixels[i].second);
    if (r <= options.virtual_threshold) {
      result.virtual_inlier_mask[i] = 1;
      ++count;
    }
  }
  result.virtual_inlier_ratio = static_cast<double>(count) / n;
  return result;
}

Expected<RelativePoseResult> EstimateRelativePoseCentral(
    const PinholeIntrinsics& intrinsics_a, const PinholeIntrinsics& intrinsics_b,
    const std::vector<std::pair<Vector2, Vector2>>& pixels, const RansacOptions& options) {
  if (pixels.size() < 5) return {ErrorCode::kInvalidArgument, "need at least 5 pairs"};
  const auto pairs = NormalizePixelPairs(pixels, intrinsics_a, intrinsics_b);
  RansacReport<Matrix3> ransac;
  auto pose = SolveRelativePose(pairs, options, &ransac);
  if (!pose) return pose.error();

  RelativePoseResult result;
  result.essential = ransac.model;
  result.report.model = *pose;
  result.report.inlier_mask = ransac.inlier_mask;
  result.report.num_inliers = ransac.num_inliers;
  result.report.inlier_ratio = ransac.inlier_ratio;
  result.report.mean_inlier_residual = ransac.mean_inlier_residual;
  result.report.iterations = ransac.iterations;
  result.report.success = true;
  result.pinhole_inlier_ratio = ransac.inlier_ratio;
  result.virtual_inlier_mask = ransac.inlier_mask;
  result.virtual_inlier_ratio = ransac.inlier_ratio;
  return result;
}

}  // namespace rsfm
