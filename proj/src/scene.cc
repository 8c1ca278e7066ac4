#include "rsfm/scene.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "rsfm/numerics.h"
#include "rsfm/ransac.h"

namespace rsfm {
namespace {

constexpr int kMaxAttempts = 100;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(SplitMix64(seed)) {}

  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double Normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng_); }
  Vector3 InCube(double size) {
    return Vector3(Uniform(-0.5, 0.5), Uniform(-0.5, 0.5), Uniform(-0.5, 0.5)) * size;
  }
  Vector3 OnSphere() {
    Vector3 v;
    do {
      v = Vector3(Normal(1.0), Normal(1.0), Normal(1.0));
    } while (v.norm() < 1e-6);
    return v.normalized();
  }
  std::uint64_t Next() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

struct Projection {
  Vector2 pixel;
  Vector2 pinhole_pixel;
};

// Both projections of a world point, or nothing when either leaves the image.
std::optional<Projection> Observe(const RefractiveCameraModel& model, const SE3Pose& pose,
                                  const Vector3& world) {
  const Vector3 local = pose * world;
  if (!(local.z() > 0.0)) return std::nullopt;
  auto pixel = ForwardProject(model, local);
  if (!pixel || !InImage(model.intrinsics(), *pixel)) return std::nullopt;
  const Vector2 pinhole = model.intrinsics().Project(local);
  if (!InImage(model.intrinsics(), pinhole)) return std::nullopt;
  return Projection{*pixel, pinhole};
}

Expected<std::vector<SE3Pose>> RandomPoses(const SceneSpec& spec, Sampler* s) {
  const double roll = numerics::DegToRad(spec.max_roll_deg);
  const Vector3 p0 = s->InCube(spec.cube_size);
  const Vector3 target = p0 + s->OnSphere() * 0.5 * (spec.depth_min + spec.depth_max);
  std::vector<SE3Pose> poses = {LookAt(p0, target, s->Uniform(-roll, roll))};
  for (int v = 1; v < spec.num_views; ++v) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const Vector3 p = s->InCube(spec.cube_size);
      if ((p - p0).norm() < spec.min_baseline) continue;
      poses.push_back(LookAt(p, target, s->Uniform(-roll, roll)));
      placed = true;
    }
    if (!placed) return {ErrorCode::kGenerationFailed, "could not place views with the baseline"};
  }
  return poses;
}

std::vector<SE3Pose> SurveyPoses(const SceneSpec& spec, Sampler* s) {
  const PipelineConfig& p = spec.survey;
  const int cols = (spec.num_views + p.rows - 1) / p.rows;
  const double jitter = numerics::DegToRad(p.jitter_deg);
  // Downward looking: camera z along -Z, x along +X.
  Matrix3 down;
  down.col(0) = Vector3::UnitX();
  down.col(1) = -Vector3::UnitY();
  down.col(2) = -Vector3::UnitZ();
  std::vector<SE3Pose> poses;
  for (int i = 0; i < spec.num_views; ++i) {
    const int row = i / cols;
    int col = i % cols;
    Matrix3 world_from_cam = down;
    if (row % 2 == 1) {
      col = cols - 1 - col;
      world_from_cam = world_from_cam * ExpSO3(Vector3(0.0, 0.0, numerics::kPi));
    }
    const Vector3 center((col - 0.5 * (cols - 1)) * p.spacing,
                         (row - 0.5 * (p.rows - 1)) * p.row_spacing, p.altitude);
    const Vector3 wobble(s->Uniform(-jitter, jitter), s->Uniform(-jitter, jitter),
                         s->Uniform(-jitter, jitter));
    world_from_cam = world_from_cam * ExpSO3(wobble);
    const Vector3 offset(s->Uniform(-0.02, 0.02), s->Uniform(-0.02, 0.02),
                         s->Uniform(-0.02, 0.02));
    const Matrix3 r = world_from_cam.transpose();
    poses.emplace_back(r, -r * (center + offset));
  }
  return poses;
}

}  // namespace

SE3Pose LookAt(const Vector3& position, const Vector3& target, double roll_rad) {
  const Vector3 z = (target - position).normalized();
  Vector3 up = Vector3::UnitZ();
  if (std::abs(z.dot(up)) > 0.99) up = Vector3::UnitY();
  const Vector3 x = up.cross(z).normalized();
  const Vector3 y = z.cross(x);
  Matrix3 world_from_cam;
  world_from_cam << x, y, z;
  world_from_cam = world_from_cam * ExpSO3(Vector3(0.0, 0.0, roll_rad));
  const Matrix3 r = world_from_cam.transpose();
  return SE3Pose(r, -r * position);
}

bool InImage(const PinholeIntrinsics& intrinsics, const Vector2& pixel) {
  return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < intrinsics.width &&
         pixel.y() < intrinsics.height;
}

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return SplitMix64(SplitMix64(seed ^ SplitMix64(stream)) + index);
}

Expected<SyntheticScene> GenerateScene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.num_views < 1 || spec.num_points < 1) {
    return {ErrorCode::kInvalidArgument, "scene needs views and points"};
  }
  Sampler s(seed);
  SyntheticScene scene;
  scene.camera = spec.camera;
  const PinholeIntrinsics& k = spec.camera.intrinsics();

  if (spec.layout == SceneLayout::kRandom) {
    auto poses = RandomPoses(spec, &s);
    if (!poses) return poses.error();
    scene.poses = *poses;
  } else {
    scene.poses = SurveyPoses(spec, &s);
  }
  const int num_views = static_cast<int>(scene.poses.size());
  scene.observations.resize(num_views);

  // Survey footprint for point sampling.
  double x_extent = 0.0;
  double y_extent = 0.0;
  if (spec.layout == SceneLayout::kLawnMower) {
    for (const auto& pose : scene.poses) {
      x_extent = std::max(x_extent, std::abs(pose.Center().x()));
      y_extent = std::max(y_extent, std::abs(pose.Center().y()));
    }
    x_extent += spec.survey.altitude * k.cx / k.fx;
    y_extent += spec.survey.altitude * k.cy / k.fy;
  }

  const SE3Pose world_from_first = scene.poses[0].Inverse();
  for (int i = 0; i < spec.num_points; ++i) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Vector3 world;
      if (spec.layout == SceneLayout::kRandom) {
        const Vector2 pixel(s.Uniform(0.0, k.width), s.Uniform(0.0, k.height));
        const double depth = s.Uniform(spec.depth_min, spec.depth_max);
        auto ray = BackProject(spec.camera, pixel);
        if (!ray || !(ray->direction.z() > 0.0)) continue;
        const double t = (depth - ray->origin.z()) / ray->direction.z();
        if (!(t > 0.0)) continue;
        world = world_from_first * ray->At(t);
      } else {
        const double a = spec.survey.terrain_amplitude;
        const double x = s.Uniform(-x_extent, x_extent);
        const double y = s.Uniform(-y_extent, y_extent);
        const double z = 0.5 * a * std::sin(1.7 * x) * std::cos(1.3 * y) + s.Uniform(-0.5 * a, 0.5 * a);
        world = Vector3(x, y, z);
      }
      std::vector<std::pair<int, Projection>> seen;
      for (int v = 0; v < num_views; ++v) {
        if (auto proj = Observe(spec.camera, scene.poses[v], world)) seen.emplace_back(v, *proj);
      }
      const int needed = spec.layout == SceneLayout::kRandom ? num_views : std::min(2, num_views);
      const bool all = spec.layout != SceneLayout::kRandom ||
                       static_cast<int>(seen.size()) == num_views;
      if (!all || static_cast<int>(seen.size()) < needed) continue;
      const int id = static_cast<int>(scene.points.size());
      scene.points.push_back(world);
      for (const auto& [v, proj] : seen) {
        scene.observations[v].push_back({id, proj.pixel, proj.pinhole_pixel});
      }
      break;
    }
  }
  if (10 * static_cast<int>(scene.points.size()) < 9 * spec.num_points) {
    return {ErrorCode::kGenerationFailed, "fewer than 90% of the points are visible"};
  }
  scene.inlier.assign(scene.points.size(), 1);
  return scene;
}

SyntheticScene Corrupt(const SyntheticScene& scene, double sigma_px, double outlier_fraction,
                       std::uint64_t seed) {
  SyntheticScene out = scene;
  Sampler s(seed);
  const int n = static_cast<int>(scene.points.size());
  const int num_outliers =
      std::clamp(static_cast<int>(std::lround(outlier_fraction * n)), 0, n);

  // Partial Fisher-Yates with an explicit index draw for portability.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = 0; i < num_outliers; ++i) {
    const int j = i + static_cast<int>(s.Next() % static_cast<std::uint64_t>(n - i));
    std::swap(order[i], order[j]);
  }
  out.inlier.assign(n, 1);
  for (int i = 0; i < num_outliers; ++i) out.inlier[order[i]] = 0;
  out.num_outliers = num_outliers;

  const PinholeIntrinsics& k = scene.camera.intrinsics();
  for (auto& view : out.observations) {
    for (auto& obs : view) {
      if (!out.inlier[obs.point]) {
        const Vector2 random(s.Uniform(0.0, k.width), s.Uniform(0.0, k.height));
        obs.pixel = random;
        obs.pinhole_pixel = random;
      } else if (sigma_px > 0.0) {
        const Vector2 noise(s.Normal(sigma_px), s.Normal(sigma_px));
        obs.pixel += noise;
        obs.pinhole_pixel += noise;
      }
    }
  }
  return out;
}

ReconstructionState MakeReconstructionState(const SyntheticScene& scene,
                                            const RefractiveCameraModel& model,
                                            bool pinhole_pixels) {
  ReconstructionState state;
  state.cameras = {model};
  state.views.resize(scene.poses.size());
  state.tracks.resize(scene.points.size());
  for (size_t i = 0; i < scene.points.size(); ++i) {
    state.tracks[i].id = static_cast<int>(i);
    state.tracks[i].ground_truth = scene.points[i];
  }
  for (size_t v = 0; v < scene.observations.size(); ++v) {
    for (const auto& obs : scene.observations[v]) {
      state.tracks[obs.point].observations.push_back(
          {static_cast<int>(v), pinhole_pixels ? obs.pinhole_pixel : obs.pixel});
    }
  }
  return state;
}

}  // namespace rsfm
