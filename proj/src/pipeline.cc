#include "rsfm/pipeline.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Geometry>

#include "rsfm/numerics.h"
#include "rsfm/solvers.h"

namespace rsfm {
namespace {

double ObservationError(const ReconstructionState& state, int view, const Vector3& point,
                        const Vector2& pixel) {
  auto r = VirtualReprojectionResidual(state.CameraOf(view), state.views[view].cam_from_world,
                                       point, pixel);
  return r ? r->norm() : std::numeric_limits<double>::infinity();
}

std::optional<Vector3> Triangulate(const ReconstructionState& state,
                                   const std::vector<TrackObservation>& observations,
                                   double min_angle_deg) {
  std::vector<TriangulationObservation> obs;
  for (const auto& o : observations) {
    auto virt = ComputeVirtualCamera(state.CameraOf(o.view), o.pixel);
    if (!virt) continue;
    obs.push_back({*virt, state.views[o.view].cam_from_world, o.pixel});
  }
  if (obs.size() < 2) return std::nullopt;
  auto x = TriangulateDLT(obs, min_angle_deg);
  if (!x) return std::nullopt;
  return *x;
}

// Triangulates from the registered observations of a pointless track. When
// some observations exceed the reprojection limit they are removed and the
// point is re-estimated from the rest. Returns true on success.
bool TriangulateTrack(ReconstructionState* state, Track* track, const PipelineOptions& options,
                      int* removed) {
  std::vector<TrackObservation> registered;
  for (const auto& o : track->observations) {
    if (state->views[o.view].registered) registered.push_back(o);
  }
  if (registered.size() < 2) return false;
  auto point = Triangulate(*state, registered, options.min_triangulation_angle_deg);
  if (!point) return false;

  std::vector<TrackObservation> good;
  for (const auto& o : registered) {
    if (ObservationError(*state, o.view, *point, o.pixel) <= options.max_reprojection_px) {
      good.push_back(o);
    }
  }
  if (good.size() < 2) return false;
  if (good.size() < registered.size()) {
    point = Triangulate(*state, good, options.min_triangulation_angle_deg);
    if (!point) return false;
    for (const auto& o : good) {
      if (ObservationError(*state, o.view, *point, o.pixel) > options.max_reprojection_px) {
        return false;
      }
    }
    const auto bad = [&](const TrackObservation& o) {
      if (!state->views[o.view].registered) return false;
      return std::none_of(good.begin(), good.end(),
                          [&](const TrackObservation& g) { return g.view == o.view; });
    };
    const auto before = track->observations.size();
    std::erase_if(track->observations, bad);
    if (removed) *removed += static_cast<int>(before - track->observations.size());
  }
  track->point = *point;
  return true;
}

std::vector<std::pair<Vector2, Vector2>> SharedPixels(const ReconstructionState& state,
                                                      const std::vector<int>& tracks, int view_a,
                                                      int view_b) {
  std::vector<std::pair<Vector2, Vector2>> pixels;
  pixels.reserve(tracks.size());
  for (int id : tracks) {
    const Track& t = state.tracks[id];
    pixels.emplace_back(t.Find(view_a)->pixel, t.Find(view_b)->pixel);
  }
  return pixels;
}

Similarity Umeyama(const std::vector<Vector3>& source, const std::vector<Vector3>& target,
                   bool with_scale) {
  Eigen::Matrix3Xd src(3, source.size());
  Eigen::Matrix3Xd dst(3, target.size());
  for (size_t i = 0; i < source.size(); ++i) {
    src.col(i) = source[i];
    dst.col(i) = target[i];
  }
  const Eigen::Matrix4d m = Eigen::umeyama(src, dst, with_scale);
  Similarity s;
  const Matrix3 sr = m.topLeftCorner<3, 3>();
  s.scale = with_scale ? std::cbrt(sr.determinant()) : 1.0;
  s.rotation = sr / s.scale;
  s.translation = m.topRightCorner<3, 1>();
  return s;
}

// Aligns the reconstruction to the position priors of its registered views.
bool AlignToPriors(ReconstructionState* state) {
  std::vector<Vector3> centers;
  std::vector<Vector3> priors;
  for (const auto& v : state->views) {
    if (v.registered && v.prior) {
      centers.push_back(v.cam_from_world.Center());
      priors.push_back(v.prior->center);
    }
  }
  if (centers.size() < 3) return false;
  const Similarity s = Umeyama(centers, priors, true);
  if (!std::isfinite(s.scale) || s.scale <= 0.0) return false;
  TransformWorld(state, s.scale, s.rotation, s.translation);
  return true;
}

}  // namespace

RescoredRefinement RefineRelativePoseRescored(
    const RefractiveCameraModel& model_a, const RefractiveCameraModel& model_b,
    const std::vector<std::pair<Vector2, Vector2>>& pixels, const SE3Pose& initial_b_from_a,
    const std::vector<char>& initial_mask, double threshold, int rounds,
    const RelativeRefineOptions& options) {
  RescoredRefinement out;
  out.b_from_a = initial_b_from_a;
  out.inlier_mask = initial_mask;
  RelativeRefineOptions refine = options;
  refine.keep_raw_scale = true;  // the caller decides the scale
  for (int round = 0; round < rounds; ++round) {
    std::vector<std::pair<Vector2, Vector2>> inliers;
    for (size_t i = 0; i < pixels.size(); ++i) {
      if (out.inlier_mask[i]) inliers.push_back(pixels[i]);
    }
    if (inliers.size() < 5) break;
    auto refined = RefineRelativePoseVirtualEpipolar(model_a, model_b, inliers, out.b_from_a, refine);
    if (!refined) break;
    out.b_from_a = refined->b_from_a;
    ++out.rounds;
    int changed = 0;
    for (size_t i = 0; i < pixels.size(); ++i) {
      const char in = VirtualSampsonResidual(model_a, model_b, out.b_from_a, pixels[i].first,
                                             pixels[i].second) < threshold;
      changed += in != out.inlier_mask[i];
      out.inlier_mask[i] = in;
    }
    if (changed == 0) break;
  }
  const auto n = std::count(out.inlier_mask.begin(), out.inlier_mask.end(), 1);
  out.inlier_ratio = pixels.empty() ? 0.0 : static_cast<double>(n) / pixels.size();
  return out;
}

std::vector<int> SharedTracks(const ReconstructionState& state, int view_a, int view_b) {
  std::vector<int> shared;
  for (size_t i = 0; i < state.tracks.size(); ++i) {
    const Track& t = state.tracks[i];
    if (t.Find(view_a) && t.Find(view_b)) shared.push_back(static_cast<int>(i));
  }
  return shared;
}

Expected<bool> InitializeFromPair(ReconstructionState* state, int view_a, int view_b,
                                  const PipelineOptions& options,
                                  BestApproxPinholeCache* cache) {
  const int num_views = static_cast<int>(state->views.size());
  if (view_a < 0 || view_b < 0 || view_a >= num_views || view_b >= num_views ||
      view_a == view_b) {
    return {ErrorCode::kInvalidArgument, "invalid initial pair"};
  }
  const std::vector<int> shared = SharedTracks(*state, view_a, view_b);
  if (shared.size() < 5) {
    return {ErrorCode::kInitializationFailed, "fewer than 5 shared tracks"};
  }
  const auto pixels = SharedPixels(*state, shared, view_a, view_b);
  const RefractiveCameraModel& model_a = state->CameraOf(view_a);
  const RefractiveCameraModel& model_b = state->CameraOf(view_b);

  auto rel = model_a.IsRefractive() || model_b.IsRefractive()
                 ? EstimateRelativePoseRefractive(model_a, model_b, pixels, options.relative, cache)
                 : EstimateRelativePoseCentral(model_a.intrinsics(), model_b.intrinsics(), pixels,
                                               options.relative.ransac);
  if (!rel) {
    return {ErrorCode::kInitializationFailed,
            std::string("relative pose: ") + ErrorCodeName(rel.error().code) + " " +
                rel.error().message};
  }
  SE3Pose b_from_a = rel->report.model;
  if (options.refine_relative) {
    const RescoredRefinement refined = RefineRelativePoseRescored(
        model_a, model_b, pixels, b_from_a, rel->virtual_inlier_mask,
        options.relative.virtual_threshold, options.relative_refine_rounds,
        options.relative_refine);
    b_from_a = refined.b_from_a;
  }
  if (!(b_from_a.translation.norm() > 0.0)) {
    return {ErrorCode::kInitializationFailed, "zero baseline"};
  }
  b_from_a.translation.normalize();
  const auto& prior_a = state->views[view_a].prior;
  const auto& prior_b = state->views[view_b].prior;
  bool metric_pair = false;
  if (prior_a && prior_b) {
    const double baseline = (prior_b->center - prior_a->center).norm();
    if (baseline > 0.0) b_from_a.translation *= baseline;
    metric_pair = baseline > 0.0 && options.bundle.use_position_priors;
  }

  for (auto& v : state->views) v.registered = false;
  for (auto& t : state->tracks) t.point.reset();
  state->views[view_a].cam_from_world = SE3Pose::Identity();
  state->views[view_a].registered = true;
  state->views[view_b].cam_from_world = b_from_a;
  state->views[view_b].registered = true;
  state->anchor_view = view_a;

  TriangulateTracks(state, options);
  if (state->NumTriangulated() < options.min_initial_tracks) {
    return {ErrorCode::kInitializationFailed,
            "only " + std::to_string(state->NumTriangulated()) + " tracks triangulated"};
  }

  BundleAdjustOptions pair = options.bundle;
  pair.refine_intrinsics = false;
  pair.refine_refraction = false;
  pair.use_position_priors = false;
  // A prior baseline is trusted over the scale implied by a refractive model
  // that is still to be refined.
  pair.fix_scale_gauge =
      metric_pair || !options.auto_scale_gauge || NeedsScaleGauge(*state, pair);
  auto ba = BundleAdjust(state, pair);
  if (!ba) {
    return {ErrorCode::kInitializationFailed, "pair adjustment: " + ba.error().message};
  }
  FilterObservations(state, options);
  if (state->NumTriangulated() < options.min_initial_tracks) {
    return {ErrorCode::kInitializationFailed, "too few tracks after filtering"};
  }
  return true;
}

Expected<RansacReport<SE3Pose>> RegisterNextView(ReconstructionState* state, int view,
                                                 const PipelineOptions& options) {
  if (view < 0 || view >= static_cast<int>(state->views.size())) {
    return {ErrorCode::kInvalidArgument, "view out of range"};
  }
  std::vector<Correspondence2D3D> corrs;
  for (const auto& t : state->tracks) {
    if (!t.point) continue;
    if (const TrackObservation* o = t.Find(view)) corrs.push_back({o->pixel, *t.point});
  }
  if (corrs.size() < 3) {
    return {ErrorCode::kInvalidArgument, "fewer than 3 triangulated tracks in view"};
  }
  const RefractiveCameraModel& model = state->CameraOf(view);
  RansacOptions ransac = options.absolute;
  ransac.seed = SplitMix64(options.absolute.seed + static_cast<std::uint64_t>(view));
  auto est = model.IsRefractive() ? EstimateAbsolutePoseRefractive(model, corrs, ransac)
                                  : EstimateAbsolutePoseCentral(model.intrinsics(), corrs, ransac);
  if (!est || est->num_inliers < 3) {
    return {ErrorCode::kRegistrationFailed,
            est ? std::string("too few inliers")
                : std::string(ErrorCodeName(est.error().code)) + " " + est.error().message};
  }

  // Pose-only refinement on the inliers.
  std::array<double, 4> q;
  std::array<double, 3> t;
  RotationToQuaternionArray(est->model.rotation, q.data());
  for (int i = 0; i < 3; ++i) t[i] = est->model.translation[i];
  std::vector<std::array<double, 3>> points;
  points.reserve(corrs.size());
  Problem problem;
  const int qb = problem.AddParameterBlock(q.data(), 4, Manifold::kRotation);
  const int tb = problem.AddParameterBlock(t.data(), 3);
  for (size_t i = 0; i < corrs.size(); ++i) {
    if (!est->inlier_mask[i]) continue;
    points.push_back({corrs[i].world.x(), corrs[i].world.y(), corrs[i].world.z()});
    const int pb = problem.AddParameterBlock(points.back().data(), 3);
    problem.SetConstant(pb);
    problem.AddResidualBlock(MakeObservationCost(model, corrs[i].pixel), RobustLoss::Trivial(),
                             {qb, tb, pb});
  }
  const SolveReport report = Solve(options.bundle.lm, &problem);
  SE3Pose pose = est->model;
  if (report.Usable() && report.final_cost <= report.initial_cost) {
    pose = SE3Pose(QuaternionArrayToRotation(q.data()), Vector3(t[0], t[1], t[2]));
  }
  state->views[view].cam_from_world = pose;
  state->views[view].registered = true;
  RansacReport<SE3Pose> out = *est;
  out.model = pose;
  return out;
}

int TriangulateTracks(ReconstructionState* state, const PipelineOptions& options) {
  int added = 0;
  for (auto& track : state->tracks) {
    if (track.point) continue;
    if (TriangulateTrack(state, &track, options, nullptr)) ++added;
  }
  return added;
}

int FilterObservations(ReconstructionState* state, const PipelineOptions& options,
                       std::vector<std::string>* log) {
  int removed = 0;
  int retriangulated = 0;
  int dropped = 0;
  for (auto& track : state->tracks) {
    if (!track.point) continue;
    const auto before = track.observations.size();
    std::erase_if(track.observations, [&](const TrackObservation& o) {
      return state->views[o.view].registered &&
             ObservationError(*state, o.view, *track.point, o.pixel) > options.max_reprojection_px;
    });
    const int n = static_cast<int>(before - track.observations.size());
    if (n == 0) continue;
    removed += n;
    track.point.reset();
    if (TriangulateTrack(state, &track, options, &removed)) {
      ++retriangulated;
    } else {
      ++dropped;
    }
  }
  if (log && removed > 0) {
    std::ostringstream msg;
    msg << "removed " << removed << " observations; re-triangulated " << retriangulated
        << " tracks, " << dropped << " left without a point";
    log->push_back(msg.str());
  }
  return removed;
}

bool NeedsScaleGauge(const ReconstructionState& state, const BundleAdjustOptions& options) {
  if (options.refine_refraction) return true;
  for (const auto& cam : state.cameras) {
    switch (cam.port_type()) {
      case PortType::kPinhole:
        return true;
      case PortType::kDome:
        if (cam.dome().center.norm() < 1e-9) return true;
        break;
      case PortType::kFlat:
        break;
    }
  }
  return false;
}

void TransformWorld(ReconstructionState* state, double scale, const Matrix3& rotation,
                    const Vector3& translation) {
  // Camera models stay metric; only poses and points move.
  for (auto& v : state->views) {
    const Matrix3 r = v.cam_from_world.rotation * rotation.transpose();
    const Vector3 center = scale * (rotation * v.cam_from_world.Center()) + translation;
    v.cam_from_world = SE3Pose(r, -r * center);
  }
  for (auto& t : state->tracks) {
    if (t.point) t.point = scale * (rotation * *t.point) + translation;
  }
}

Expected<IncrementalReport> RunIncremental(ReconstructionState* state,
                                           const std::vector<int>& order,
                                           const PipelineOptions& options,
                                           BestApproxPinholeCache* cache) {
  if (order.size() < 2) return {ErrorCode::kInvalidArgument, "need at least two views"};
  if (options.ba_every < 1) return {ErrorCode::kInvalidArgument, "ba_every must be positive"};
  IncrementalReport report;
  auto init = InitializeFromPair(state, order[0], order[1], options, cache);
  if (!init) return init.error();
  report.registered = {order[0], order[1]};
  report.log.push_back("initialized from views " + std::to_string(order[0]) + " and " +
                       std::to_string(order[1]) + " with " +
                       std::to_string(state->NumTriangulated()) + " points");

  const auto global = [&] {
    BundleAdjustOptions ba = options.bundle;
    bool priors = false;
    if (options.bundle.use_position_priors && state->HasPriors() && AlignToPriors(state)) {
      if (!report.aligned_to_priors) report.log.push_back("aligned to position priors");
      report.aligned_to_priors = true;
      priors = true;
    }
    ba.use_position_priors = priors;
    // Priors that are not active yet will fix the scale later; until then the
    // scale stays where the prior baseline put it.
    const bool pending = options.bundle.use_position_priors && state->HasPriors() && !priors;
    if (options.auto_scale_gauge) ba.fix_scale_gauge = pending || NeedsScaleGauge(*state, ba);
    auto r = BundleAdjust(state, ba);
    if (!r) {
      report.log.push_back("global adjustment failed: " + r.error().message);
    } else {
      ++report.global_adjustments;
    }
    report.removed_observations += FilterObservations(state, options, &report.log);
    TriangulateTracks(state, options);
  };

  const auto try_register = [&](int view) {
    auto r = RegisterNextView(state, view, options);
    if (!r) {
      report.log.push_back("skipped view " + std::to_string(view) + ": " +
                           ErrorCodeName(r.error().code) + " " + r.error().message);
      return false;
    }
    report.registered.push_back(view);
    TriangulateTracks(state, options);
    return true;
  };

  int since = 0;
  std::vector<int> pending;
  for (size_t i = 2; i < order.size(); ++i) {
    if (!try_register(order[i])) {
      pending.push_back(order[i]);
      continue;
    }
    if (++since == options.ba_every) {
      global();
      since = 0;
    }
  }
  // One more attempt for views that lacked support earlier.
  for (int view : pending) {
    if (!try_register(view)) report.skipped.push_back(view);
  }
  global();
  return report;
}

Expected<MetricsRow> AlignAndScore(const ReconstructionState& state,
                                   const std::vector<SE3Pose>& ground_truth_poses,
                                   const std::vector<Vector3>& ground_truth_points, AlignMode mode,
                                   Similarity* alignment) {
  std::vector<int> views;
  std::vector<Vector3> est;
  std::vector<Vector3> gt;
  for (size_t v = 0; v < state.views.size() && v < ground_truth_poses.size(); ++v) {
    if (!state.views[v].registered) continue;
    views.push_back(static_cast<int>(v));
    est.push_back(state.views[v].cam_from_world.Center());
    gt.push_back(ground_truth_poses[v].Center());
  }
  if (views.size() < 3) {
    return {ErrorCode::kInsufficientOverlap, "fewer than 3 registered views"};
  }
  const Similarity s = Umeyama(est, gt, mode == AlignMode::kSimilarity);
  if (alignment) *alignment = s;

  MetricsRow row;
  row.registered = static_cast<int>(views.size());
  for (size_t i = 0; i < views.size(); ++i) {
    const Matrix3 r = state.views[views[i]].cam_from_world.rotation * s.rotation.transpose();
    row.rotation_deg +=
        numerics::RadToDeg(RotationAngle(r, ground_truth_poses[views[i]].rotation));
    row.position_mm += 1000.0 * (s * est[i] - gt[i]).norm();
  }
  row.rotation_deg /= views.size();
  row.position_mm /= views.size();

  int triangulated = 0;
  if (!ground_truth_points.empty()) {
    for (const auto& t : state.tracks) {
      if (!t.point) continue;
      const Vector3 p = s * *t.point;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& g : ground_truth_points) best = std::min(best, (p - g).squaredNorm());
      row.model_mm += 1000.0 * std::sqrt(best);
      ++triangulated;
    }
    if (triangulated > 0) row.model_mm /= triangulated;
  } else {
    triangulated = state.NumTriangulated();
  }
  row.inlier_ratio =
      state.tracks.empty() ? 0.0 : static_cast<double>(triangulated) / state.tracks.size();
  row.reprojection_px = RmsReprojectionError(state);
  return row;
}

Expected<bool> WritePly(const std::string& path, const ReconstructionState& state) {
  std::ofstream out(path);
  if (!out) return {ErrorCode::kInvalidArgument, "cannot write " + path};
  out << "ply\nformat ascii 1.0\nelement vertex " << state.NumTriangulated()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  out.precision(17);
  for (const auto& t : state.tracks) {
    if (t.point) out << t.point->x() << ' ' << t.point->y() << ' ' << t.point->z() << '\n';
  }
  if (!out) return {ErrorCode::kInvalidArgument, "write failed: " + path};
  return true;
}

Expected<bool> WritePoses(const std::string& path, const ReconstructionState& state) {
  std::ofstream out(path);
  if (!out) return {ErrorCode::kInvalidArgument, "cannot write " + path};
  out.precision(17);
  for (size_t v = 0; v < state.views.size(); ++v) {
    const ViewState& view = state.views[v];
    if (!view.registered) continue;
    const Eigen::Quaterniond q = view.cam_from_world.Quaternion();
    const Vector3& t = view.cam_from_world.translation;
    out << v << ' ' << q.w() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << t.x()
        << ' ' << t.y() << ' ' << t.z() << '\n';
  }
  if (!out) return {ErrorCode::kInvalidArgument, "write failed: " + path};
  return true;
}

}  // namespace rsfm
