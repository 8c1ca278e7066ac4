#pragma once

#include <string>
#include <vector>

namespace rsfm {

struct SelfTestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Noise-free invariants of the library: projection round trips, virtual
// camera reproduction, exact pose recovery, pinhole parity with the
// baselines, an exact end-to-end reconstruction and output determinism.
std::vector<SelfTestCheck> RunSelfTest();

}  // namespace rsfm
