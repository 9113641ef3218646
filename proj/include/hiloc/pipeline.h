#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "hiloc/eval.h"
#include "hiloc/frame.h"
#include "hiloc/hba.h"
#include "hiloc/matching.h"
#include "hiloc/worldmap.h"

namespace hiloc {

enum class TrackingStatus { kInitializing, kTracking, kLost };

const char* TrackingStatusName(TrackingStatus status);

struct TrackingState {
  TrackingStatus status = TrackingStatus::kInitializing;
  Pose current_pose;             // world-to-camera
  Twist motion_model = Twist::Zero();  // left increment per frame interval
  KeyframeId last_keyframe_id = -1;
  int frames_since_alignment = 0;
};

struct KeyframePolicy {
  double max_translation = 0.5;   // meters since the last keyframe
  double max_rotation_deg = 10.0;
  double min_tracked_ratio = 0.6;
};

/// True when the camera moved more than max_translation or rotated more
/// than max_rotation_deg since the last keyframe, or when fewer than
/// min_tracked_ratio of the last keyframe's points were tracked.
bool SelectKeyframe(const KeyframePolicy& policy, const Pose& last_keyframe_pose,
                    const Pose& current_pose, int tracked_points, int reference_points);

struct PipelineConfig {
  CameraIntrinsics intrinsics;
  double baseline = 0.12;
  Pose initial_pose;  // world-to-camera pose of the first frame

  // Tracking.
  int min_track_inliers = 15;
  double track_window_radius = 7.0;
  int recent_keyframes = 10;  // keyframes whose points are tracked
  DescriptorMatchParams track_descriptor;
  PoseOptimizationParams pose;
  double max_stereo_depth = 40.0;
  double min_disparity = 0.5;
  KeyframePolicy keyframes;

  // Alignment.
  int align_every = 3;  // every k-th keyframe
  int window_size = 8;
  int fixed_size = 2;
  int hba_iterations = 15;
  int max_learned_keypoints = 500;  // when the learned channel is a grid
  AlignParams align;
  /// Corrections with a larger translation are treated as failures.
  double max_correction_translation = 5.0;
  /// Wait for the in-flight job at each keyframe boundary so merges land
  /// on the same frame in every run. Otherwise results merge whenever a
  /// keyframe boundary finds them finished.
  bool deterministic_merge = true;
};

/// Everything an alignment job needs, copied out of the tracker.
struct AlignmentJob {
  std::uint64_t sequence = 0;
  KeyframeId keyframe_id = 0;
  std::vector<Keypoint> learned;
  std::shared_ptr<const FeatureGrid> learned_grid;
  LocalWindow window;
  VisualMap snapshot{Channel::kHandcrafted};  // window keyframes and points only
};

struct AlignmentOutcome {
  std::uint64_t sequence = 0;
  KeyframeId keyframe_id = 0;
  bool aligned = false;
  std::optional<PriorAssociation> association;
  LocalWindow window;
  std::optional<HbaResult> hba;
};

/// Runs the learned-channel detection, IterativeAlign against the prior
/// and the windowed joint optimisation. Pure function of its inputs.
AlignmentOutcome RunAlignmentJob(const AlignmentJob& job, const VisualMap& prior,
                                 const PipelineConfig& config);

/// Single background thread with one pending slot. Submitting while a job
/// is pending replaces it; the running job is never interrupted.
class AlignmentWorker {
 public:
  using Runner = std::function<AlignmentOutcome(const AlignmentJob&)>;

  explicit AlignmentWorker(Runner runner);
  ~AlignmentWorker();
  AlignmentWorker(const AlignmentWorker&) = delete;
  AlignmentWorker& operator=(const AlignmentWorker&) = delete;

  /// Returns true when a pending job was replaced.
  bool Submit(AlignmentJob job);
  /// Finished outcomes in completion order; non-blocking.
  std::vector<AlignmentOutcome> TakeFinished();
  /// Blocks until no job is pending or running.
  void WaitIdle();
  bool Busy() const;

  int started() const;
  int replaced() const;

 private:
  void Loop();

  Runner runner_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<AlignmentJob> pending_;
  bool running_ = false;
  bool stop_ = false;
  int started_ = 0;
  int replaced_ = 0;
  std::vector<AlignmentOutcome> finished_;
  std::thread thread_;
};

struct FrameRecord {
  double timestamp = 0.0;
  TrackingStatus status = TrackingStatus::kInitializing;
  int inliers = 0;
  int prior_matches = 0;
  double tmap_translation_norm = 0.0;
  bool keyframe = false;
  bool job_in_flight = false;   // an alignment job was pending or running
  double tracking_cpu_seconds = 0.0;  // thread CPU time of the tracking step
};

struct PipelineStats {
  int keyframes = 0;
  int jobs_submitted = 0;
  int jobs_replaced = 0;
  int merges_applied = 0;
  int stale_discarded = 0;
  int alignment_failures = 0;
};

/// Stereo tracker over the handcrafted channel with optional asynchronous
/// alignment to a learned-channel prior map. Without a prior map it is a
/// pure odometry system.
class Localizer {
 public:
  explicit Localizer(PipelineConfig config,
                     std::shared_ptr<const VisualMap> prior = nullptr);
  ~Localizer();

  /// Tracks one frame and returns its world-to-camera pose estimate.
  Pose ProcessFrame(const FrameInput& frame);
  /// Waits for the last job and merges it; call after the last frame.
  void Finish();

  const TrackingState& state() const { return state_; }
  const VisualMap& local_map() const { return local_map_; }
  const std::vector<FrameRecord>& records() const { return records_; }
  const PipelineStats& stats() const { return stats_; }
  /// Camera-to-world estimates, one per processed frame.
  const Trajectory& trajectory() const { return trajectory_; }

  /// Applies an outcome if it is newer than the last merged one. Returns
  /// false for stale or failed outcomes.
  bool Merge(const AlignmentOutcome& outcome);

 private:
  struct TrackResult {
    Pose pose;
    std::vector<MatchPair> inliers;
    bool ok = false;
  };

  TrackResult Track(const FrameInput& frame, const Pose& predicted);
  KeyframeId InsertKeyframe(const FrameInput& frame, const std::vector<MatchPair>& tracked);
  void RefineKeyframePoints(KeyframeId id);
  void MergeFinished(bool wait);
  void ScheduleAlignment(KeyframeId id, const FrameInput& frame);
  std::vector<PointId> RecentPoints() const;

  PipelineConfig config_;
  std::shared_ptr<const VisualMap> prior_;
  VisualMap local_map_{Channel::kHandcrafted};
  TrackingState state_;
  std::map<KeyframeId, std::vector<PointId>> keyframe_points_;  // sorted
  int last_keyframe_points_ = 0;
  std::map<KeyframeId, PriorAssociation> associations_;
  std::unique_ptr<AlignmentWorker> worker_;
  std::uint64_t next_sequence_ = 1;
  std::uint64_t last_merged_sequence_ = 0;
  int keyframes_since_alignment_ = 0;
  int last_merge_prior_matches_ = 0;
  double last_tmap_norm_ = 0.0;
  bool merged_this_frame_ = false;
  std::vector<FrameRecord> records_;
  PipelineStats stats_;
  Trajectory trajectory_;
};

/// "timestamp,status,inliers,prior_matches,tmap_translation_norm".
void WriteStatusCsv(std::ostream& out, const std::vector<FrameRecord>& records);

}  // namespace hiloc
