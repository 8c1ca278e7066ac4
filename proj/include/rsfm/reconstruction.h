#pragma once

#include <optional>
#include <vector>

#include "rsfm/camera.h"
#include "rsfm/geometry.h"

namespace rsfm {

struct TrackObservation {
  int view = -1;
  Vector2 pixel = Vector2::Zero();
};

struct Track {
  int id = -1;
  // At most one observation per view.
  std::vector<TrackObservation> observations;
  std::optional<Vector3> point;
  std::optional<Vector3> ground_truth;

  const TrackObservation* Find(int view) const;
};

// Soft constraint w * (camera center - center).
struct PositionPrior {
  Vector3 center = Vector3::Zero();
  double weight = 1.0;
};

struct ViewState {
  SE3Pose cam_from_world;
  bool registered = false;
  int camera = 0;
  std::optional<PositionPrior> prior;
};

struct ReconstructionState {
  std::vector<RefractiveCameraModel> cameras;
  std::vector<ViewState> views;
  std::vector<Track> tracks;
  // View whose pose is held constant by bundle adjustment.
  int anchor_view = -1;

  const RefractiveCameraModel& CameraOf(int view) const { return cameras[views[view].camera]; }
  int NumRegistered() const;
  int NumTriangulated() const;
  bool HasPriors() const;
  // Registered views observing the track.
  int NumRegisteredObservations(const Track& track) const;
};

}  // namespace rsfm
