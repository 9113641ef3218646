#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "hiloc/features.h"
#include "hiloc/geometry.h"

namespace hiloc {

using PointId = std::int64_t;
using KeyframeId = std::int64_t;

struct Observation {
  KeyframeId keyframe_id = 0;
  int keypoint_index = 0;

  bool operator==(const Observation&) const = default;
};

struct MapPoint {
  PointId id = 0;
  Vec3 position = Vec3::Zero();
  Descriptor descriptor;
  Vec3 mean_view_dir = Vec3::UnitZ();
  std::vector<Observation> observations;
  Channel channel = Channel::kLearned;
};

struct Keyframe {
  KeyframeId id = 0;
  double timestamp = 0.0;
  Pose pose;  // world-to-camera
  CameraIntrinsics intrinsics;
  std::vector<Keypoint> keypoints;
  /// Right-image u per keypoint for stereo frames (NaN where unmatched);
  /// empty for monocular frames.
  std::vector<double> right_coords;

  bool is_stereo() const { return !right_coords.empty(); }
};

/// Id-indexed keyframes and points of one feature channel.
class VisualMap {
 public:
  explicit VisualMap(Channel channel = Channel::kLearned) : channel_(channel) {}

  Channel channel() const { return channel_; }

  const std::map<PointId, MapPoint>& points() const { return points_; }
  const std::map<KeyframeId, Keyframe>& keyframes() const { return keyframes_; }

  bool HasPoint(PointId id) const { return points_.count(id) != 0; }
  bool HasKeyframe(KeyframeId id) const { return keyframes_.count(id) != 0; }

  /// Throw kInvalidArgument on unknown ids.
  const MapPoint& point(PointId id) const;
  MapPoint& mutable_point(PointId id);
  const Keyframe& keyframe(KeyframeId id) const;
  Keyframe& mutable_keyframe(KeyframeId id);

  /// Throws kInvalidArgument on a duplicate id.
  void AddKeyframe(Keyframe keyframe);
  /// Throws kInvalidArgument on a duplicate id or kIntegrity when an
  /// observation references a missing keyframe or keypoint.
  void AddPoint(MapPoint point);
  void AddObservation(PointId point_id, const Observation& obs);
  void RemovePoint(PointId id);

  PointId NextPointId() const {
    return points_.empty() ? 0 : points_.rbegin()->first + 1;
  }
  KeyframeId NextKeyframeId() const {
    return keyframes_.empty() ? 0 : keyframes_.rbegin()->first + 1;
  }

  /// Referential-integrity sweep; throws kIntegrity on the first violation.
  void Validate() const;

 private:
  void CheckObservation(const Observation& obs) const;

  Channel channel_;
  std::map<PointId, MapPoint> points_;
  std::map<KeyframeId, Keyframe> keyframes_;
};

struct VisibilityParams {
  double max_view_angle = 60.0 * std::numbers::pi / 180.0;  // radians
  double max_distance = 40.0;                               // meters
};

/// Points that project in front of the camera inside the image, are seen
/// within max_view_angle of their mean viewing direction, and lie within
/// max_distance of the camera centre. Ordered by point id.
std::vector<const MapPoint*> VisibleCandidates(
    const VisualMap& map, const Pose& predicted_pose, const CameraIntrinsics& k,
    const VisibilityParams& params = {});

/// Same predicates, restricted to the given point ids.
std::vector<const MapPoint*> VisibleCandidates(
    const VisualMap& map, const std::vector<PointId>& subset,
    const Pose& predicted_pose, const CameraIntrinsics& k,
    const VisibilityParams& params = {});

bool IsVisible(const MapPoint& point, const Pose& pose,
               const CameraIntrinsics& k, const VisibilityParams& params);

/// Ids of points observed by keyframes whose centre lies within radius of
/// the given position, sorted ascending.
std::vector<PointId> PointsNearPosition(const VisualMap& map,
                                        const Vec3& position, double radius);

struct MeanViewDirResult {
  MapPoint point;
  bool degenerate = false;  // mean vanished; previous direction kept
};

/// Normalised mean of unit vectors from each observing camera centre to
/// the point.
MeanViewDirResult UpdateMeanViewDir(const MapPoint& point, const VisualMap& map);

/// Map file: "HILOC-MAP v1", then "META dim channel", then KF / KP / MP /
/// OBS records. Keyframe poses are written world-to-camera with a
/// Hamilton quaternion (qx qy qz qw). Reals use 17 significant digits.
void WriteMap(std::ostream& out, const VisualMap& map);
/// Throws kParse with a line number, or kIntegrity for dangling references.
VisualMap ReadMap(std::istream& in);
void SaveMap(const VisualMap& map, const std::string& path);
VisualMap LoadMap(const std::string& path);

}  // namespace hiloc
