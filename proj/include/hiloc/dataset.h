#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hiloc/config.h"
#include "hiloc/eval.h"
#include "hiloc/frame.h"
#include "hiloc/synth.h"
#include "hiloc/worldmap.h"

namespace hiloc {

/// Everything cmd_synth reads from its configuration.
struct SynthSettings {
  WorldConfig world;
  AppearanceModel appearance;
  NoiseModel noise;
  CameraIntrinsics camera{450.0, 450.0, 320.0, 240.0, 640, 480};
  RenderOptions render;
  PriorMapOptions prior;
  std::string trajectory = "figure8";  // figure8 | circle | line
  int frames = 1000;
  double dt = 0.05;
  double speed = 2.0;
  double radius = 16.0;
  double height = 1.5;
  int prior_stride = 5;  // every n-th ground-truth pose becomes a prior keyframe

  /// Unknown keys are ignored; malformed values and a missing "seed"
  /// throw kConfig.
  static SynthSettings FromConfig(const Config& cfg);
  Config ToConfig() const;
  void Validate() const;
};

struct SynthDataset {
  World world;
  VisualMap prior{Channel::kLearned};
  RenderedSequence sequence;
};

SynthDataset GenerateDataset(const SynthSettings& settings);

/// Writes world.map, prior.map, gt.tum, dataset.cfg and frames/.
void WriteDataset(const std::string& dir, const SynthSettings& settings,
                  const SynthDataset& dataset);

/// One keypoint list file: "HILOC-KP v1 <timestamp> <D> <channel> <stereo>"
/// then one "u v score d0..dD-1 [uR]" line per keypoint; uR is "nan" when
/// there is no stereo match.
struct KeypointFile {
  double timestamp = 0.0;
  Channel channel = Channel::kHandcrafted;
  int descriptor_dim = 0;
  std::vector<Keypoint> keypoints;
  std::vector<double> right_coords;  // empty unless stereo
};

void WriteKeypointFile(std::ostream& out, const KeypointFile& file);
KeypointFile ReadKeypointFile(std::istream& in);

/// A dataset directory opened for sequential frame loading.
struct Dataset {
  std::string dir;
  Config config;
  CameraIntrinsics camera;
  double baseline = 0.0;
  Pose initial_pose;  // world-to-camera
  Trajectory ground_truth;
  int frame_count = 0;
  bool learned_grids = false;
};

/// Throws kIo when files are missing, kParse on malformed content.
Dataset OpenDataset(const std::string& dir);
FrameInput LoadFrame(const Dataset& dataset, int index);

std::string FramePath(const std::string& dir, int index, const std::string& suffix);

}  // namespace hiloc
