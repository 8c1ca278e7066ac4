#include "rsfm/reconstruction.h"

namespace rsfm {

const TrackObservation* Track::Find(int view) const {
  for (const auto& obs : observations) {
    if (obs.view == view) return &obs;
  }
  return nullptr;
}

int ReconstructionState::NumRegistered() const {
  int n = 0;
  for (const auto& v : views) n += v.registered;
  return n;
}

int ReconstructionState::NumTriangulated() const {
  int n = 0;
  for (const auto& t : tracks) n += t.point.has_value();
  return n;
}

bool ReconstructionState::HasPriors() const {
  for (const auto& v : views) {
    if (v.registered && v.prior) return true;
  }
  return false;
}

int ReconstructionState::NumRegisteredObservations(const Track& track) const {
  int n = 0;
  for (const auto& obs : track.observations) n += views[obs.view].registered;
  return n;
}

}  // namespace rsfm
