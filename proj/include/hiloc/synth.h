#pragma once

#include <cstdint>
#include <vector>

#include "hiloc/eval.h"
#include "hiloc/features.h"
#include "hiloc/frame.h"
#include "hiloc/worldmap.h"

namespace hiloc {

struct WorldConfig {
  int num_points = 2000;
  Vec3 extent = Vec3(70.0, 50.0, 8.0);  // meters, box side lengths
  Vec3 center = Vec3(0.0, 0.0, 1.5);
  int descriptor_dim = 32;
  std::uint64_t rng_seed = 0;

  void Validate() const;
};

/// Landmarks with one descriptor per feature channel.
struct World {
  std::vector<Vec3> points;
  std::vector<Descriptor> handcrafted;
  std::vector<Descriptor> learned;
  int descriptor_dim = 0;
};

/// Points uniform in the box, descriptors uniform on the unit sphere.
World GenerateWorld(const WorldConfig& cfg);

/// Cross-session appearance change.
struct AppearanceModel {
  double learned_drift = 0.1;       // [0, 1]
  double handcrafted_drift = 0.8;   // [0, 1]
  double dropout_learned = 0.0;     // per-keypoint probability
  double region_dropout_length = 0.0;    // meters per dropout region
  double region_dropout_fraction = 0.0;  // share of path length in regions

  void Validate() const;
};

struct NoiseModel {
  double pixel_sigma = 0.0;
  double detection_dropout = 0.0;
  double outlier_rate = 0.0;

  void Validate() const;
};

/// Rotate d towards a fresh random unit direction by drift * pi / 2.
Descriptor DriftDescriptor(const Descriptor& d, double drift, std::uint64_t seed,
                           std::uint64_t stream);

/// Camera-to-world poses of a forward-looking camera (z forward, y down,
/// world z up) moving at constant speed. Frame i is at time t0 + i * dt.
Trajectory StraightLineTrajectory(int frames, double dt, double speed,
                                  const Vec3& start, const Vec3& direction,
                                  double t0 = 0.0);
Trajectory CircleTrajectory(int frames, double dt, double speed, double radius,
                            double height, double t0 = 0.0);
/// Lemniscate of Gerono x = R sin s, y = R sin s cos s, traversed at
/// constant speed by arc-length reparameterisation.
Trajectory FigureEightTrajectory(int frames, double dt, double speed, double radius,
                                 double height, double t0 = 0.0);

/// Camera pose looking along a horizontal heading (radians from world x).
Pose CameraToWorldLooking(const Vec3& position, const Vec3& forward);

std::vector<Pose> WorldToCamera(const Trajectory& trajectory);

double PathLength(const Trajectory& trajectory);

struct RenderOptions {
  double baseline = 0.12;
  double min_depth = 1.0;
  double max_depth = 40.0;
  bool emit_learned = true;
  bool emit_grids = false;
  std::uint64_t rng_seed = 0;
};

struct PriorMapOptions {
  Channel channel = Channel::kLearned;  // which world descriptors to use
  double position_sigma = 0.0;
  double min_depth = 1.0;
  double max_depth = 40.0;
  std::uint64_t rng_seed = 0;
};

/// Map of one channel built from ground truth: one keyframe per mapping
/// pose (world-to-camera), keypoints at the projections of visible points
/// (plus pixel noise), observations, optional point position noise. Point
/// ids are world indices; unobserved points are omitted.
VisualMap MakePriorMap(const World& world, const std::vector<Pose>& mapping_poses,
                       const CameraIntrinsics& k, const NoiseModel& noise,
                       const PriorMapOptions& options = {});

/// Ground-truth map of all world points with learned descriptors and no
/// keyframes.
VisualMap WorldAsMap(const World& world);

struct RenderedSequence {
  std::vector<FrameInput> frames;
  Trajectory ground_truth;  // camera-to-world
  /// World index per keypoint; -1 marks an injected outlier.
  std::vector<std::vector<int>> handcrafted_sources;
  std::vector<std::vector<int>> learned_sources;
  /// Per frame: inside a learned-channel dropout region.
  std::vector<bool> in_dropout_region;
};

/// Per-frame keypoints of the localisation session. Handcrafted and
/// learned descriptors are drifted once per session from the world's.
RenderedSequence RenderSequence(const World& world, const Trajectory& trajectory,
                                const CameraIntrinsics& k,
                                const AppearanceModel& appearance,
                                const NoiseModel& noise, const RenderOptions& options = {});

/// Score map of unit Gaussian blobs (sigma 1 px, max-combined) at the
/// keypoint pixels; each keypoint's descriptor fills its cell.
FeatureGrid RenderGrid(const std::vector<Keypoint>& keypoints, const CameraIntrinsics& k,
                       int descriptor_dim);

/// Arc-length intervals [start, end) of the dropout regions along a path.
std::vector<std::pair<double, double>> DropoutRegions(double path_length,
                                                      const AppearanceModel& appearance,
                                                      std::uint64_t seed);

}  // namespace hiloc
