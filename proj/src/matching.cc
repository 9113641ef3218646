#include "hiloc/matching.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "hiloc/error.h"

namespace hiloc {

namespace {

// Keypoint buckets for window queries.
class KeypointIndex {
 public:
  KeypointIndex(std::span<const Keypoint> keypoints, double cell)
      : cell_(std::max(cell, 1.0)) {
    for (size_t i = 0; i < keypoints.size(); ++i) {
      buckets_[Key(keypoints[i].pixel)].push_back(i);
    }
  }

  std::vector<size_t> Query(std::span<const Keypoint> keypoints, const Vec2& center,
                            double radius) const {
    std::vector<size_t> out;
    const long c0 = static_cast<long>(std::floor((center.x() - radius) / cell_));
    const long c1 = static_cast<long>(std::floor((center.x() + radius) / cell_));
    const long r0 = static_cast<long>(std::floor((center.y() - radius) / cell_));
    const long r1 = static_cast<long>(std::floor((center.y() + radius) / cell_));
    const double r2 = radius * radius;
    for (long r = r0; r <= r1; ++r) {
      for (long c = c0; c <= c1; ++c) {
        auto it = buckets_.find({r, c});
        if (it == buckets_.end()) continue;
        for (size_t i : it->second) {
          if ((keypoints[i].pixel - center).squaredNorm() <= r2) out.push_back(i);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::pair<long, long> Key(const Vec2& p) const {
    return {static_cast<long>(std::floor(p.y() / cell_)),
            static_cast<long>(std::floor(p.x() / cell_))};
  }

  double cell_;
  std::map<std::pair<long, long>, std::vector<size_t>> buckets_;
};

}  // namespace

MatchSet MatchCandidates(std::span<const Keypoint> keypoints, const CameraIntrinsics& k,
                         std::span<const MapPoint* const> candidates,
                         const Pose& pose_estimate, double window_radius,
                         const DescriptorMatchParams& descriptor, Channel channel) {
  if (!(window_radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "window_radius must be positive");
  }
  MatchSet out;
  out.source_channel = channel;
  if (keypoints.empty() || candidates.empty()) return out;

  const KeypointIndex index(keypoints, window_radius);
  // keypoint index -> best claim so far
  std::map<int, MatchPair> claims;
  for (const MapPoint* p : candidates) {
    const Vec3 pc = pose_estimate * p->position;
    if (!(pc.z() > kMinDepth)) continue;
    const Vec2 proj = ProjectCameraPoint(pc, k);
    const std::vector<size_t> window = index.Query(keypoints, proj, window_radius);
    if (window.empty()) continue;
    const auto m = MatchDescriptor(p->descriptor, keypoints, window, descriptor);
    if (!m) continue;
    MatchPair pair{p->id, static_cast<int>(m->index), m->distance,
                   keypoints[m->index].pixel - proj};
    auto [it, inserted] = claims.emplace(pair.keypoint_index, pair);
    if (!inserted) {
      const MatchPair& cur = it->second;
      if (pair.distance < cur.distance ||
          (pair.distance == cur.distance && pair.point_id < cur.point_id)) {
        it->second = pair;
      }
    }
  }
  for (const auto& [kp, pair] : claims) out.pairs.push_back(pair);
  std::sort(out.pairs.begin(), out.pairs.end(),
            [](const MatchPair& a, const MatchPair& b) { return a.point_id < b.point_id; });
  return out;
}

MatchSet ProjectionMatch(std::span<const Keypoint> keypoints, const CameraIntrinsics& k,
                         const VisualMap& map, const Pose& pose_estimate,
                         const ProjectionMatchParams& params) {
  if (!(params.window_radius > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "window_radius must be positive");
  }
  std::vector<const MapPoint*> candidates;
  if (params.prior_frame_radius > 0.0) {
    const auto near =
        PointsNearPosition(map, pose_estimate.center(), params.prior_frame_radius);
    candidates = VisibleCandidates(map, near, pose_estimate, k, params.visibility);
  } else {
    candidates = VisibleCandidates(map, pose_estimate, k, params.visibility);
  }
  return MatchCandidates(keypoints, k, candidates, pose_estimate, params.window_radius,
                         params.descriptor, map.channel());
}

MatchSet ProjectionMatch(const Keyframe& frame, const VisualMap& map,
                         const Pose& pose_estimate, const ProjectionMatchParams& params) {
  return ProjectionMatch(frame.keypoints, frame.intrinsics, map, pose_estimate, params);
}

MatchSet FilterMatches(const MatchSet& set, const std::vector<bool>& keep) {
  MatchSet out;
  out.source_channel = set.source_channel;
  for (size_t i = 0; i < set.pairs.size(); ++i) {
    if (keep[i]) out.pairs.push_back(set.pairs[i]);
  }
  return out;
}

AlignResult IterativeAlign(std::span<const Keypoint> keypoints, const CameraIntrinsics& k,
                           const VisualMap& prior, const Pose& initial_pose,
                           const AlignParams& params) {
  if (params.rounds < 1) {
    throw Error(ErrorCode::kInvalidArgument, "rounds must be >= 1");
  }
  AlignResult result;
  result.pose = initial_pose;
  Pose pose = initial_pose;
  double radius = params.match.window_radius;
  MatchSet matches;
  for (int round = 0; round < params.rounds; ++round) {
    ProjectionMatchParams mp = params.match;
    mp.window_radius = radius;
    matches = ProjectionMatch(keypoints, k, prior, pose, mp);
    if (matches.size() < 4) {
      result.round_match_counts.push_back(static_cast<int>(matches.size()));
      return result;
    }
    std::vector<PoseMatch> pm;
    pm.reserve(matches.size());
    for (const MatchPair& p : matches.pairs) {
      pm.push_back({prior.point(p.point_id).position, keypoints[p.keypoint_index].pixel});
    }
    PoseEstimate est;
    try {
      est = OptimizePose(pm, k, pose, params.kernel, params.solver, params.pose);
    } catch (const Error&) {
      result.round_match_counts.push_back(0);
      return result;
    }
    pose = est.pose;
    matches = FilterMatches(matches, est.inliers);
    for (MatchPair& p : matches.pairs) {
      p.residual = keypoints[p.keypoint_index].pixel -
                   Project(pose, k, prior.point(p.point_id).position);
    }
    result.round_match_counts.push_back(static_cast<int>(matches.size()));
    radius = std::max(radius * 0.5, params.min_window_radius);
  }
  if (static_cast<int>(matches.size()) < params.min_prior_matches) return result;
  result.aligned = true;
  result.pose = pose;
  result.matches = std::move(matches);
  return result;
}

AlignResult IterativeAlign(const Keyframe& frame, const VisualMap& prior,
                           const Pose& initial_pose, const AlignParams& params) {
  return IterativeAlign(frame.keypoints, frame.intrinsics, prior, initial_pose, params);
}

}  // namespace hiloc
