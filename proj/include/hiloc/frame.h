#pragma once

#include <memory>
#include <vector>

#include "hiloc/features.h"

namespace hiloc {

/// One stereo frame as delivered to the tracker: handcrafted keypoints
/// (left image) with right-image u per keypoint, plus the learned channel
/// either as keypoints or as a dense grid.
struct FrameInput {
  double timestamp = 0.0;
  std::vector<Keypoint> handcrafted;
  /// NaN where no stereo match exists; empty for monocular input.
  std::vector<double> right_coords;
  std::vector<Keypoint> learned;
  std::shared_ptr<const FeatureGrid> learned_grid;

  bool has_learned() const { return !learned.empty() || learned_grid != nullptr; }
};

}  // namespace hiloc
