#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsfm/camera.h"
#include "rsfm/status.h"

namespace rsfm {

enum class ExperimentKind { kAbsPose, kRelPose, kPipeline };

const char* ExperimentKindName(ExperimentKind kind);

struct NamedCamera {
  std::string label;
  RefractiveCameraModel model;
};

struct PipelineConfig {
  int views = 20;
  int rows = 2;
  double spacing = 0.16;     // along-track view spacing (m)
  double row_spacing = 0.4;  // m
  double altitude = 1.0;     // m above the mean terrain height
  double terrain_amplitude = 0.3;
  double jitter_deg = 3.0;   // per-view attitude perturbation
  int points = 1500;
  int ba_every = 5;
  double min_triangulation_angle_deg = 1.0;
  double max_reprojection_px = 4.0;
  // Perturbed refractive initialization for the refined variants.
  std::vector<double> flat_normal_init = {0.0, 0.0, 1.0};
  double flat_distance_scale = 1.5;
  std::vector<double> dome_center_init = {0.0, 0.0, 0.0};
  // Position priors from noisy ground-truth centers.
  double prior_sigma = 0.005;  // m
  double prior_weight = 100.0;  // 1/m
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kAbsPose;
  std::vector<NamedCamera> cameras;
  int num_points = 200;
  double outlier_fraction = 0.30;
  std::vector<double> sigmas;
  int trials = 200;
  std::uint64_t seed = 0;
  double depth_min = 1.0;
  double depth_max = 10.0;
  // Pose sampling bounds for abs/rel scenes.
  double cube_size = 2.0;
  double max_roll_deg = 15.0;
  double min_baseline = 0.5;
  // Inlier thresholds: max(min, k * sigma), in px for the absolute pose and
  // normalized units (scaled by 1/f) for the relative pose.
  double abs_threshold_min = 2.0;
  double abs_threshold_sigmas = 4.0;
  double rel_threshold_min = 1e-3;
  double rel_threshold_sigmas = 3.0;
  int threads = 0;  // 0: hardware concurrency
  PipelineConfig pipeline;

  Expected<bool> Validate() const;
};

// Defaults for an experiment kind, including the standard port set.
ExperimentConfig DefaultExperimentConfig(ExperimentKind kind);

// Camera used by the experiments when none is configured: 73 degree
// horizontal FOV at 1920 x 1280.
PinholeIntrinsics DefaultIntrinsics();

// Parses a TOML-subset config on top of the defaults for `kind`. The
// [experiment] table must name the kind; [camera.<label>] tables replace the
// default port set. Errors carry the line or the offending key.
Expected<ExperimentConfig> ParseExperimentConfig(const std::string& text, ExperimentKind kind,
                                                 const std::string& source = "config");
Expected<ExperimentConfig> LoadExperimentConfig(const std::string& path, ExperimentKind kind);

// Resolved config rendered in the same format.
std::string FormatExperimentConfig(const ExperimentConfig& config);

}  // namespace rsfm
