#pragma once

#include <span>
#include <vector>

#include "hiloc/estimation.h"
#include "hiloc/features.h"
#include "hiloc/worldmap.h"

namespace hiloc {

struct MatchPair {
  PointId point_id = 0;
  int keypoint_index = 0;
  double distance = 0.0;
  Vec2 residual = Vec2::Zero();  // keypoint pixel minus projection
};

struct MatchSet {
  std::vector<MatchPair> pairs;
  Channel source_channel = Channel::kLearned;

  size_t size() const { return pairs.size(); }
};

struct ProjectionMatchParams {
  double window_radius = 15.0;  // pixels
  DescriptorMatchParams descriptor;
  VisibilityParams visibility;
  /// When positive, only points observed by map keyframes within this
  /// distance (meters) of the predicted camera centre are considered.
  double prior_frame_radius = 0.0;
};

/// Projects every candidate with pose_estimate, searches keypoints within
/// window_radius of the projection and keeps the descriptor match. A
/// keypoint claimed by several points goes to the smallest descriptor
/// distance, then the smaller point id. Pairs are ordered by point id.
/// Throws kInvalidArgument unless window_radius > 0.
MatchSet MatchCandidates(std::span<const Keypoint> keypoints,
                         const CameraIntrinsics& k,
                         std::span<const MapPoint* const> candidates,
                         const Pose& pose_estimate, double window_radius,
                         const DescriptorMatchParams& descriptor,
                         Channel channel);

/// Candidate selection (visibility, optional prior-frame radius) followed
/// by MatchCandidates.
MatchSet ProjectionMatch(std::span<const Keypoint> keypoints,
                         const CameraIntrinsics& k, const VisualMap& map,
                         const Pose& pose_estimate,
                         const ProjectionMatchParams& params);

MatchSet ProjectionMatch(const Keyframe& frame, const VisualMap& map,
                         const Pose& pose_estimate,
                         const ProjectionMatchParams& params);

/// Keep only pairs whose flag is set; flags are parallel to set.pairs.
MatchSet FilterMatches(const MatchSet& set, const std::vector<bool>& keep);

struct AlignParams {
  int rounds = 2;
  ProjectionMatchParams match{
      .window_radius = 15.0, .descriptor = {}, .visibility = {}, .prior_frame_radius = 10.0};
  double min_window_radius = 4.0;
  int min_prior_matches = 10;
  RobustKernel kernel = RobustKernel::Huber(kHuberDelta2Dof);
  SolverConfig solver;
  PoseOptimizationParams pose;
};

struct AlignResult {
  bool aligned = false;
  Pose pose;          // initial pose when alignment failed
  MatchSet matches;   // inlier pairs of the last round
  std::vector<int> round_match_counts;
};

/// Alternates projection matching and pose optimisation against a prior
/// map; the search radius halves each round down to min_window_radius.
AlignResult IterativeAlign(std::span<const Keypoint> keypoints,
                           const CameraIntrinsics& k, const VisualMap& prior,
                           const Pose& initial_pose, const AlignParams& params = {});

AlignResult IterativeAlign(const Keyframe& frame, const VisualMap& prior,
                           const Pose& initial_pose, const AlignParams& params = {});

}  // namespace hiloc
