#include "rsfm/bundle.h"

#include <cmath>
#include <limits>
#include <optional>

#include "rsfm/numerics.h"

namespace rsfm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix3 VirtualEssential(const VirtualCamera& va, const VirtualCamera& vb,
                         const SE3Pose& b_from_a) {
  const Vector3 t = b_from_a.rotation * va.center + b_from_a.translation - vb.center;
  return Skew(t) * b_from_a.rotation;
}

class RelativeEpipolarCost : public CostFunction {
 public:
  // A positive translation_norm means the translation block is a unit
  // direction scaled by it.
  RelativeEpipolarCost(const VirtualCamera& va, const VirtualCamera& vb, const Vector2& pa,
                       const Vector2& pb, EpipolarResidual kind, double translation_norm)
      : va_(va), vb_(vb), pa_(pa), pb_(pb), kind_(kind), translation_norm_(translation_norm) {}

  int NumResiduals() const override { return 1; }

  bool Evaluate(const double* const* params, double* residuals,
                double* const* /*jacobians*/) const override {
    Vector3 t(params[1][0], params[1][1], params[1][2]);
    if (translation_norm_ > 0.0) t *= translation_norm_;
    const SE3Pose pose(QuaternionArrayToRotation(params[0]), t);
    residuals[0] = VirtualEpipolarResidual(va_, vb_, pose, pa_, pb_, kind_);
    return std::isfinite(residuals[0]);
  }

 private:
  VirtualCamera va_;
  VirtualCamera vb_;
  Vector2 pa_;
  Vector2 pb_;
  EpipolarResidual kind_;
  double translation_norm_;
};

// Blocks: quaternion, translation, point, then optional intrinsics
// (fx, fy, cx, cy), refraction A (flat normal or dome center) and refraction B
// (flat distance). The pinhole part has analytic Jacobians; the virtual camera
// construction is differentiated numerically by the solver.
class ObservationCost : public CostFunction {
 public:
  ObservationCost(const RefractiveCameraModel& model, const Vector2& pixel, bool intrinsics,
                  bool refraction_a, bool refraction_b)
      : model_(model),
        pixel_(pixel),
        intrinsics_(intrinsics),
        refraction_a_(refraction_a),
        refraction_b_(refraction_b) {
    if (!intrinsics_ && !refraction_a_ && !refraction_b_) {
      auto vc = ComputeVirtualCamera(model_, pixel_);
      if (vc) fixed_camera_ = *vc;
    }
  }

  int NumResiduals() const override { return 2; }

  bool ProvidesJacobian(int block_index) const override { return block_index < 3; }

  bool Evaluate(const double* const* params, double* residuals,
                double* const* jacobians) const override {
    VirtualCamera vc;
    if (fixed_camera_) {
      vc = *fixed_camera_;
    } else {
      auto built = ComputeVirtualCamera(CurrentModel(params), pixel_);
      if (!built) return false;
      vc = *built;
    }
    const Matrix3 r = QuaternionArrayToRotation(params[0]);
    const Vector3 t(params[1][0], params[1][1], params[1][2]);
    const Vector3 x(params[2][0], params[2][1], params[2][2]);
    const Vector3 xc = r * x + t;
    const Vector3 q = xc - vc.center;
    if (!(q.z() > 0.0)) return false;
    const double iz = 1.0 / q.z();
    residuals[0] = vc.focal * q.x() * iz + vc.principal.x() - pixel_.x();
    residuals[1] = vc.focal * q.y() * iz + vc.principal.y() - pixel_.y();
    if (jacobians == nullptr) return true;

    Eigen::Matrix<double, 2, 3> dq;
    dq << vc.focal * iz, 0.0, -vc.focal * q.x() * iz * iz, 0.0, vc.focal * iz,
        -vc.focal * q.y() * iz * iz;
    if (jacobians[0] != nullptr) {
      // R <- Exp(delta) R, so d(xc)/d(delta) = -[R x]_x.
      Eigen::Map<Eigen::Matrix<double, 2, 3, Eigen::RowMajor>> j(jacobians[0]);
      j = -dq * Skew(r * x);
    }
    if (jacobians[1] != nullptr) {
      Eigen::Map<Eigen::Matrix<double, 2, 3, Eigen::RowMajor>> j(jacobians[1]);
      j = dq;
    }
    if (jacobians[2] != nullptr) {
      Eigen::Map<Eigen::Matrix<double, 2, 3, Eigen::RowMajor>> j(jacobians[2]);
      j = dq * r;
    }
    return true;
  }

 private:
  RefractiveCameraModel CurrentModel(const double* const* params) const {
    RefractiveCameraModel model = model_;
    int k = 3;
    if (intrinsics_) {
      const double* p = params[k++];
      auto& intr = model.mutable_intrinsics();
      intr.fx = p[0];
      intr.fy = p[1];
      intr.cx = p[2];
      intr.cy = p[3];
    }
    std::vector<double> refr = model.RefractiveParams();
    if (refraction_a_) {
      const double* p = params[k++];
      for (int i = 0; i < 3; ++i) refr[i] = p[i];
    }
    if (refraction_b_) refr[3] = params[k++][0];
    if (refraction_a_ || refraction_b_) model.SetRefractiveParams(refr);
    return model;
  }

  RefractiveCameraModel model_;
  Vector2 pixel_;
  bool intrinsics_;
  bool refraction_a_;
  bool refraction_b_;
  std::optional<VirtualCamera> fixed_camera_;
};

// w * (camera center - prior) over blocks (quaternion, translation).
class PositionPriorCost : public CostFunction {
 public:
  explicit PositionPriorCost(const PositionPrior& prior) : prior_(prior) {}

  int NumResiduals() const override { return 3; }

  bool Evaluate(const double* const* params, double* residuals,
                double* const* /*jacobians*/) const override {
    const Matrix3 r = QuaternionArrayToRotation(params[0]);
    const Vector3 t(params[1][0], params[1][1], params[1][2]);
    Eigen::Map<Vector3> out(residuals);
    out = prior_.weight * (-r.transpose() * t - prior_.center);
    return true;
  }

 private:
  PositionPrior prior_;
};

}  // namespace

double VirtualEpipolarResidual(const VirtualCamera& va, const VirtualCamera& vb,
                               const SE3Pose& b_from_a, const Vector2& pixel_a,
                               const Vector2& pixel_b, EpipolarResidual kind) {
  const Matrix3 e = VirtualEssential(va, vb, b_from_a);
  const Vector3 xa = va.Normalized(pixel_a);
  const Vector3 xb = vb.Normalized(pixel_b);
  const Vector3 exa = e * xa;
  const double algebraic = xb.dot(exa);
  if (kind == EpipolarResidual::kAlgebraic) return algebraic;
  const Vector3 etxb = e.transpose() * xb;
  const double den = exa.head<2>().squaredNorm() + etxb.head<2>().squaredNorm();
  if (den < numerics::kSampsonEps) return algebraic;
  return algebraic / std::sqrt(den);
}

Expected<RelativeRefineResult> RefineRelativePoseVirtualEpipolar(
    const RefractiveCameraModel& model_a, const RefractiveCameraModel& model_b,
    const std::vector<std::pair<Vector2, Vector2>>& inliers, const SE3Pose& initial_b_from_a,
    const RelativeRefineOptions& options) {
  if (inliers.size() < 5) return {ErrorCode::kInvalidArgument, "need at least 5 inlier pairs"};
  double q[4];
  RotationToQuaternionArray(initial_b_from_a.rotation, q);
  const double initial_norm = initial_b_from_a.translation.norm();
  if (!(initial_norm > 0.0)) return {ErrorCode::kInvalidArgument, "zero initial translation"};
  const double fixed_norm = options.fix_translation_norm ? initial_norm : 0.0;
  Vector3 t0 = initial_b_from_a.translation;
  if (options.fix_translation_norm) t0 /= initial_norm;
  double t[3] = {t0.x(), t0.y(), t0.z()};

  Problem problem;
  const int qb = problem.AddParameterBlock(q, 4, Manifold::kRotation);
  const int tb = problem.AddParameterBlock(
      t, 3, options.fix_translation_norm ? Manifold::kUnitSphere : Manifold::kEuclidean);
  for (const auto& [pa, pb] : inliers) {
    auto va = ComputeVirtualCamera(model_a, pa);
    auto vb = ComputeVirtualCamera(model_b, pb);
    if (!va || !vb) continue;
    problem.AddResidualBlock(
        std::make_shared<RelativeEpipolarCost>(*va, *vb, pa, pb, options.residual, fixed_norm),
        RobustLoss::Trivial(), {qb, tb});
  }
  if (problem.NumResidualBlocks() < 5) {
    return {ErrorCode::kInvalidArgument, "fewer than 5 pairs with valid virtual cameras"};
  }

  RelativeRefineResult result;
  result.report = Solve(options.lm, &problem);
  if (!result.report.Usable() || !(result.report.final_cost <= result.report.initial_cost)) {
    result.b_from_a = initial_b_from_a;
  } else {
    Vector3 t1(t[0], t[1], t[2]);
    if (options.fix_translation_norm) t1 *= fixed_norm;
    result.b_from_a = SE3Pose(QuaternionArrayToRotation(q), t1);
  }
  if (!options.keep_raw_scale) {
    const double norm = result.b_from_a.translation.norm();
    if (!(norm > 0.0)) return {ErrorCode::kNumericalFailure, "translation collapsed to zero"};
    result.b_from_a.translation /= norm;
  }
  return result;
}

Expected<Vector2> VirtualReprojectionResidual(const RefractiveCameraModel& model,
                                              const SE3Pose& cam_from_world, const Vector3& point,
                                              const Vector2& pixel) {
  auto vc = ComputeVirtualCamera(model, pixel);
  if (!vc) return vc.error();
  const Vector3 local = cam_from_world * point;
  if (!((local - vc->center).z() > 0.0)) {
    return {ErrorCode::kCheiralityViolation, "point behind virtual camera"};
  }
  return Vector2(vc->Project(local) - pixel);
}

std::shared_ptr<const CostFunction> MakeObservationCost(const RefractiveCameraModel& model,
                                                        const Vector2& pixel) {
  return std::make_shared<ObservationCost>(model, pixel, false, false, false);
}

double BundleCost(const ReconstructionState& state, const RobustLoss& loss) {
  double cost = 0.0;
  for (const auto& track : state.tracks) {
    if (!track.point) continue;
    for (const auto& obs : track.observations) {
      const ViewState& view = state.views[obs.view];
      if (!view.registered) continue;
      auto r = VirtualReprojectionResidual(state.cameras[view.camera], view.cam_from_world,
                                           *track.point, obs.pixel);
      if (!r) return kInf;
      cost += 0.5 * loss.Evaluate(r->squaredNorm())[0];
    }
  }
  return cost;
}

double RmsReprojectionError(const ReconstructionState& state) {
  double sum = 0.0;
  int count = 0;
  for (const auto& track : state.tracks) {
    if (!track.point) continue;
    for (const auto& obs : track.observations) {
      const ViewState& view = state.views[obs.view];
      if (!view.registered) continue;
      auto r = VirtualReprojectionResidual(state.cameras[view.camera], view.cam_from_world,
                                           *track.point, obs.pixel);
      if (!r) continue;
      sum += r->squaredNorm();
      ++count;
    }
  }
  return count > 0 ? std::sqrt(sum / count) : 0.0;
}

Expected<std::unique_ptr<BundleProblem>> BundleProblem::Build(
    const ReconstructionState& state, const BundleAdjustOptions& options) {
  std::unique_ptr<BundleProblem> bp(new BundleProblem());
  const int num_views = static_cast<int>(state.views.size());
  const int num_cameras = static_cast<int>(state.cameras.size());

  int anchor = state.anchor_view;
  if (anchor < 0 || anchor >= num_views || !state.views[anchor].registered) {
    anchor = -1;
    for (int v = 0; v < num_views && anchor < 0; ++v) {
      if (state.views[v].registered) anchor = v;
    }
  }
  if (anchor < 0) return {ErrorCode::kInvalidArgument, "no registered views"};

  const bool priors = options.use_position_priors && state.HasPriors();
  int scale_view = -1;
  int scale_coord = -1;
  if (!priors && options.fix_scale_gauge) {
    for (int v = 0; v < num_views && scale_view < 0; ++v) {
      if (v != anchor && state.views[v].registered) scale_view = v;
    }
    if (scale_view >= 0) {
      // Translation relative to the anchor frame decides the largest axis.
      state.views[scale_view].cam_from_world.translation.cwiseAbs().maxCoeff(&scale_coord);
    }
  }
  const bool scale_fixed = priors || scale_view >= 0 || !options.refine_poses;

  // Camera-level blocks.
  Problem& problem = bp->problem_;
  std::vector<int> intr_block(num_cameras, -1);
  std::vector<int> refr_a_block(num_cameras, -1);
  std::vector<int> refr_b_block(num_cameras, -1);
  bp->intrinsics_.resize(num_cameras);
  bp->refraction_a_.resize(num_cameras);
  bp->refraction_b_.resize(num_cameras);
  for (int c = 0; c < num_cameras; ++c) {
    const RefractiveCameraModel& model = state.cameras[c];
    if (options.refine_intrinsics) {
      const auto& k = model.intrinsics();
      bp->intrinsics_[c] = {k.fx, k.fy, k.cx, k.cy};
    }
    if (options.refine_refraction && model.IsRefractive()) {
      const std::vector<double> p = model.RefractiveParams();
      bp->refraction_a_[c] = {p[0], p[1], p[2]};
      if (model.port_type() == PortType::kFlat) {
        if (!scale_fixed) {
          return {ErrorCode::kGaugeUnderconstrained,
                  "interface distance is free but the scene scale is not fixed"};
        }
        bp->refraction_b_[c] = {p[3]};
      }
    }
  }
  for (int c = 0; c < num_cameras; ++c) {
    if (!bp->intrinsics_[c].empty()) {
      intr_block[c] = problem.AddParameterBlock(bp->intrinsics_[c].data(), 4);
    }
    if (!bp->refraction_a_[c].empty()) {
      const Manifold m = state.cameras[c].port_type() == PortType::kFlat ? Manifold::kUnitSphere
                                                                          : Manifold::kEuclidean;
      refr_a_block[c] = problem.AddParameterBlock(bp->refraction_a_[c].data(), 3, m);
    }
    if (!bp->refraction_b_[c].empty()) {
      refr_b_block[c] = problem.AddParameterBlock(bp->refraction_b_[c].data(), 1);
    }
  }

  // Pose blocks.
  std::vector<int> q_block(num_views, -1);
  std::vector<int> t_block(num_views, -1);
  for (int v = 0; v < num_views; ++v) {
    if (!state.views[v].registered) continue;
    std::vector<double> q(4);
    RotationToQuaternionArray(state.views[v].cam_from_world.rotation, q.data());
    const Vector3& t = state.views[v].cam_from_world.translation;
    bp->quaternions_.push_back(q);
    bp->translations_.push_back({t.x(), t.y(), t.z()});
    bp->view_index_.push_back(v);
  }
  for (size_t i = 0; i < bp->view_index_.size(); ++i) {
    const int v = bp->view_index_[i];
    q_block[v] = problem.AddParameterBlock(bp->quaternions_[i].data(), 4, Manifold::kRotation);
    t_block[v] = problem.AddParameterBlock(bp->translations_[i].data(), 3);
    if (!options.refine_poses || v == anchor) {
      problem.SetConstant(q_block[v]);
      problem.SetConstant(t_block[v]);
    } else if (v == scale_view) {
      problem.SetSubsetConstant(t_block[v], {scale_coord});
    }
  }

  // Points and observations.
  for (size_t k = 0; k < state.tracks.size(); ++k) {
    const Track& track = state.tracks[k];
    if (!track.point) continue;
    bp->points_.push_back({track.point->x(), track.point->y(), track.point->z()});
    bp->track_index_.push_back(static_cast<int>(k));
  }
  for (size_t i = 0; i < bp->track_index_.size(); ++i) {
    const Track& track = state.tracks[bp->track_index_[i]];
    int point_block = -1;
    for (const auto& obs : track.observations) {
      const ViewState& view = state.views[obs.view];
      if (!view.registered) continue;
      const RefractiveCameraModel& model = state.cameras[view.camera];
      if (!VirtualReprojectionResidual(model, view.cam_from_world, *track.point, obs.pixel)) {
        continue;
      }
      if (point_block < 0) {
        point_block = problem.AddParameterBlock(bp->points_[i].data(), 3);
        if (options.refine_points) {
          problem.SetEliminate(point_block);
        } else {
          problem.SetConstant(point_block);
        }
      }
      const int c = view.camera;
      std::vector<int> blocks = {q_block[obs.view], t_block[obs.view], point_block};
      if (intr_block[c] >= 0) blocks.push_back(intr_block[c]);
      if (refr_a_block[c] >= 0) blocks.push_back(refr_a_block[c]);
      if (refr_b_block[c] >= 0) blocks.push_back(refr_b_block[c]);
      problem.AddResidualBlock(
          std::make_shared<ObservationCost>(model, obs.pixel, intr_block[c] >= 0,
                                            refr_a_block[c] >= 0, refr_b_block[c] >= 0),
          options.loss, std::move(blocks));
    }
  }

  if (priors) {
    for (int v : bp->view_index_) {
      const auto& prior = state.views[v].prior;
      if (!prior) continue;
      problem.AddResidualBlock(std::make_shared<PositionPriorCost>(*prior), RobustLoss::Trivial(),
                               {q_block[v], t_block[v]});
    }
  }
  return bp;
}

void BundleProblem::Commit(ReconstructionState* state) const {
  for (size_t i = 0; i < view_index_.size(); ++i) {
    const auto& t = translations_[i];
    state->views[view_index_[i]].cam_from_world =
        SE3Pose(QuaternionArrayToRotation(quaternions_[i].data()), Vector3(t[0], t[1], t[2]));
  }
  for (size_t i = 0; i < track_index_.size(); ++i) {
    const auto& p = points_[i];
    state->tracks[track_index_[i]].point = Vector3(p[0], p[1], p[2]);
  }
  for (size_t c = 0; c < state->cameras.size(); ++c) {
    RefractiveCameraModel& model = state->cameras[c];
    if (!intrinsics_[c].empty()) {
      auto& k = model.mutable_intrinsics();
      k.fx = intrinsics_[c][0];
      k.fy = intrinsics_[c][1];
      k.cx = intrinsics_[c][2];
      k.cy = intrinsics_[c][3];
    }
    if (!refraction_a_[c].empty() || !refraction_b_[c].empty()) {
      std::vector<double> p = model.RefractiveParams();
      for (size_t i = 0; i < refraction_a_[c].size(); ++i) p[i] = refraction_a_[c][i];
      if (!refraction_b_[c].empty()) p[3] = refraction_b_[c][0];
      model.SetRefractiveParams(p);
    }
  }
}

Expected<SolveReport> BundleAdjust(ReconstructionState* state,
                                   const BundleAdjustOptions& options) {
  auto bp = BundleProblem::Build(*state, options);
  if (!bp) return bp.error();
  SolveReport report = Solve(options.lm, &(*bp)->problem());
  if (report.reason == TerminationReason::kNumericalFailure) {
    return {ErrorCode::kOptimizationFailed, "bundle adjustment hit non-finite residuals"};
  }
  (*bp)->Commit(state);
  return report;
}

}  // namespace rsfm
