#include "hiloc/pipeline.h"

#include <time.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <set>

#include "hiloc/error.h"
#include "hiloc/estimation.h"

namespace hiloc {

namespace {

double ThreadCpuSeconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return ts.tv_sec + 1e-9 * ts.tv_nsec;
}

bool HasStereo(const FrameInput& frame, int min_count) {
  int n = 0;
  for (double ur : frame.right_coords) n += std::isfinite(ur) ? 1 : 0;
  return n >= min_count;
}

}  // namespace

const char* TrackingStatusName(TrackingStatus status) {
  switch (status) {
    case TrackingStatus::kInitializing: return "initializing";
    case TrackingStatus::kTracking: return "tracking";
    case TrackingStatus::kLost: return "lost";
  }
  return "unknown";
}

bool SelectKeyframe(const KeyframePolicy& policy, const Pose& last_keyframe_pose,
                    const Pose& current_pose, int tracked_points, int reference_points) {
  const Pose rel = current_pose * last_keyframe_pose.inverse();
  const double translation = (current_pose.center() - last_keyframe_pose.center()).norm();
  const double rotation_deg = So3Log(rel.rotation()).norm() * 180.0 / std::numbers::pi;
  if (translation > policy.max_translation) return true;
  if (rotation_deg > policy.max_rotation_deg) return true;
  if (reference_points > 0 &&
      static_cast<double>(tracked_points) < policy.min_tracked_ratio * reference_points) {
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Alignment job

AlignmentOutcome RunAlignmentJob(const AlignmentJob& job, const VisualMap& prior,
                                 const PipelineConfig& config) {
  AlignmentOutcome out;
  out.sequence = job.sequence;
  out.keyframe_id = job.keyframe_id;
  out.window = job.window;

  const Keyframe& kf = job.snapshot.keyframe(job.keyframe_id);
  std::vector<Keypoint> learned = job.learned;
  if (learned.empty() && job.learned_grid) {
    const FeatureGrid& grid = *job.learned_grid;
    learned = DetectKeypoints(
        grid, config.max_learned_keypoints,
        DefaultMinSpacing(grid.height(), grid.width(), config.max_learned_keypoints));
  }
  if (learned.empty()) return out;

  AlignResult aligned;
  try {
    aligned = IterativeAlign(learned, kf.intrinsics, prior, kf.pose, config.align);
  } catch (const Error&) {
    return out;
  }
  if (!aligned.aligned) return out;

  PriorAssociation assoc;
  assoc.keyframe_id = job.keyframe_id;
  assoc.matches = aligned.matches;
  assoc.keypoint_pixels.reserve(learned.size());
  for (const Keypoint& kp : learned) assoc.keypoint_pixels.push_back(kp.pixel);
  out.window.prior_assocs.push_back(assoc);
  out.window.t_map = Pose::Identity();
  out.association = std::move(assoc);

  try {
    SolverConfig solver;
    solver.max_iterations = config.hba_iterations;
    out.hba = LocalBundleAdjust(out.window, job.snapshot, prior,
                                RobustKernel::Huber(kHuberDelta2Dof), solver);
  } catch (const Error&) {
    return out;
  }
  out.aligned = true;
  return out;
}

// ---------------------------------------------------------------------------
// Worker

AlignmentWorker::AlignmentWorker(Runner runner)
    : runner_(std::move(runner)), thread_([this] { Loop(); }) {}

AlignmentWorker::~AlignmentWorker() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
    pending_.reset();
  }
  cv_.notify_all();
  thread_.join();
}

bool AlignmentWorker::Submit(AlignmentJob job) {
  bool replaced = false;
  {
    std::lock_guard lock(mu_);
    replaced = pending_.has_value();
    if (replaced) ++replaced_;
    pending_ = std::move(job);
  }
  cv_.notify_all();
  return replaced;
}

std::vector<AlignmentOutcome> AlignmentWorker::TakeFinished() {
  std::lock_guard lock(mu_);
  std::vector<AlignmentOutcome> out;
  out.swap(finished_);
  return out;
}

void AlignmentWorker::WaitIdle() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return !pending_ && !running_; });
}

bool AlignmentWorker::Busy() const {
  std::lock_guard lock(mu_);
  return pending_.has_value() || running_;
}

int AlignmentWorker::started() const {
  std::lock_guard lock(mu_);
  return started_;
}

int AlignmentWorker::replaced() const {
  std::lock_guard lock(mu_);
  return replaced_;
}

void AlignmentWorker::Loop() {
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [this] { return stop_ || pending_.has_value(); });
    if (stop_) return;
    AlignmentJob job = std::move(*pending_);
    pending_.reset();
    running_ = true;
    ++started_;
    lock.unlock();
    AlignmentOutcome outcome = runner_(job);
    lock.lock();
    finished_.push_back(std::move(outcome));
    running_ = false;
    cv_.notify_all();
  }
}

// ---------------------------------------------------------------------------
// Localizer

Localizer::Localizer(PipelineConfig config, std::shared_ptr<const VisualMap> prior)
    : config_(std::move(config)), prior_(std::move(prior)) {
  config_.intrinsics.Validate();
  if (!(config_.baseline > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "baseline must be positive");
  }
  if (config_.align_every < 1) {
    throw Error(ErrorCode::kInvalidArgument, "align_every must be >= 1");
  }
  state_.current_pose = config_.initial_pose;
  if (prior_) {
    auto prior_map = prior_;
    const PipelineConfig cfg = config_;
    worker_ = std::make_unique<AlignmentWorker>(
        [prior_map, cfg](const AlignmentJob& job) {
          return RunAlignmentJob(job, *prior_map, cfg);
        });
  }
}

Localizer::~Localizer() = default;

std::vector<PointId> Localizer::RecentPoints() const {
  std::set<PointId> ids;
  int n = 0;
  for (auto it = keyframe_points_.rbegin();
       it != keyframe_points_.rend() && n < config_.recent_keyframes; ++it, ++n) {
    ids.insert(it->second.begin(), it->second.end());
  }
  return {ids.begin(), ids.end()};
}

Localizer::TrackResult Localizer::Track(const FrameInput& frame, const Pose& predicted) {
  TrackResult result;
  result.pose = predicted;
  if (frame.handcrafted.empty()) return result;
  const CameraIntrinsics& k = config_.intrinsics;
  const auto candidates = VisibleCandidates(local_map_, RecentPoints(), predicted, k);
  MatchSet matches = MatchCandidates(frame.handcrafted, k, candidates, predicted,
                                     config_.track_window_radius, config_.track_descriptor,
                                     Channel::kHandcrafted);
  if (static_cast<int>(matches.size()) < 2 * config_.min_track_inliers) {
    matches = MatchCandidates(frame.handcrafted, k, candidates, predicted,
                              2.0 * config_.track_window_radius,
                              config_.track_descriptor, Channel::kHandcrafted);
  }
  if (matches.size() < 4) return result;
  std::vector<PoseMatch> pm;
  pm.reserve(matches.size());
  for (const MatchPair& m : matches.pairs) {
    pm.push_back({local_map_.point(m.point_id).position,
                  frame.handcrafted[m.keypoint_index].pixel});
  }
  PoseEstimate est;
  try {
    est = OptimizePose(pm, k, predicted, RobustKernel::Huber(kHuberDelta2Dof), {},
                       config_.pose);
  } catch (const Error&) {
    return result;
  }
  for (size_t i = 0; i < matches.size(); ++i) {
    if (est.inliers[i]) result.inliers.push_back(matches.pairs[i]);
  }
  result.ok = static_cast<int>(result.inliers.size()) >= config_.min_track_inliers;
  if (result.ok) result.pose = est.pose;
  return result;
}

KeyframeId Localizer::InsertKeyframe(const FrameInput& frame,
                                     const std::vector<MatchPair>& tracked) {
  const CameraIntrinsics& k = config_.intrinsics;
  Keyframe kf;
  kf.id = local_map_.NextKeyframeId();
  kf.timestamp = frame.timestamp;
  kf.pose = state_.current_pose;
  kf.intrinsics = k;
  kf.keypoints = frame.handcrafted;
  kf.right_coords = frame.right_coords;
  const KeyframeId id = kf.id;
  const Pose c2w = kf.pose.inverse();
  local_map_.AddKeyframe(std::move(kf));
  const Keyframe& stored = local_map_.keyframe(id);

  std::vector<PointId>& seen = keyframe_points_[id];
  std::vector<char> used(stored.keypoints.size(), 0);
  for (const MatchPair& m : tracked) {
    local_map_.AddObservation(m.point_id, {id, m.keypoint_index});
    used[m.keypoint_index] = 1;
    seen.push_back(m.point_id);
  }
  RefineKeyframePoints(id);

  if (stored.is_stereo()) {
    for (size_t i = 0; i < stored.keypoints.size(); ++i) {
      const double ur = stored.right_coords[i];
      if (used[i] || !std::isfinite(ur)) continue;
      const Keypoint& kp = stored.keypoints[i];
      double depth = 0.0;
      try {
        depth = StereoDepth(k.fx, config_.baseline, kp.pixel.x(), ur, config_.min_disparity);
      } catch (const Error&) {
        continue;
      }
      if (depth > config_.max_stereo_depth) continue;
      MapPoint p;
      p.id = local_map_.NextPointId();
      p.position = c2w * Backproject(kp.pixel, depth, k);
      p.descriptor = kp.descriptor;
      p.channel = Channel::kHandcrafted;
      p.mean_view_dir = (p.position - c2w.translation()).normalized();
      p.observations.push_back({id, static_cast<int>(i)});
      seen.push_back(p.id);
      local_map_.AddPoint(std::move(p));
    }
  }
  std::sort(seen.begin(), seen.end());
  state_.last_keyframe_id = id;
  ++stats_.keyframes;
  return id;
}

void Localizer::RefineKeyframePoints(KeyframeId id) {
  const CameraIntrinsics& k = config_.intrinsics;
  const Pose right_offset(Mat3::Identity(), Vec3(-config_.baseline, 0.0, 0.0));
  for (PointId pid : keyframe_points_[id]) {
    MapPoint& p = local_map_.mutable_point(pid);
    if (p.observations.size() < 2) continue;
    std::vector<PointObservation> obs;
    for (const Observation& o : p.observations) {
      const Keyframe& kf = local_map_.keyframe(o.keyframe_id);
      obs.push_back({kf.pose, kf.keypoints[o.keypoint_index].pixel});
      if (kf.is_stereo() && std::isfinite(kf.right_coords[o.keypoint_index])) {
        obs.push_back({right_offset * kf.pose,
                       Vec2(kf.right_coords[o.keypoint_index],
                            kf.keypoints[o.keypoint_index].pixel.y())});
      }
    }
    try {
      p.position = RefinePoint(obs, k, p.position).position;
    } catch (const Error&) {
      continue;
    }
    p = UpdateMeanViewDir(p, local_map_).point;
  }
}

void Localizer::ScheduleAlignment(KeyframeId id, const FrameInput& frame) {
  if (!worker_) return;
  if (++keyframes_since_alignment_ < config_.align_every) return;
  if (!frame.has_learned()) return;
  keyframes_since_alignment_ = 0;
  state_.frames_since_alignment = 0;

  AlignmentJob job;
  job.sequence = next_sequence_++;
  job.keyframe_id = id;
  job.learned = frame.learned;
  job.learned_grid = frame.learned_grid;

  std::vector<KeyframeId> ids;
  for (const auto& [kid, pts] : keyframe_points_) ids.push_back(kid);
  const int n = static_cast<int>(ids.size());
  const int flex_begin = std::max(0, n - config_.window_size);
  const int fixed_begin = std::max(0, flex_begin - config_.fixed_size);
  LocalWindow& w = job.window;
  w.fixed.assign(ids.begin() + fixed_begin, ids.begin() + flex_begin);
  w.flexible.assign(ids.begin() + flex_begin, ids.end());
  std::set<PointId> local;
  for (KeyframeId kid : w.flexible) {
    const auto& pts = keyframe_points_.at(kid);
    local.insert(pts.begin(), pts.end());
    auto it = associations_.find(kid);
    if (it != associations_.end()) w.prior_assocs.push_back(it->second);
  }
  w.local_points.assign(local.begin(), local.end());

  std::set<KeyframeId> in_window(w.fixed.begin(), w.fixed.end());
  in_window.insert(w.flexible.begin(), w.flexible.end());
  for (KeyframeId kid : in_window) job.snapshot.AddKeyframe(local_map_.keyframe(kid));
  for (PointId pid : w.local_points) {
    MapPoint p = local_map_.point(pid);
    std::erase_if(p.observations, [&](const Observation& o) {
      return !in_window.count(o.keyframe_id);
    });
    job.snapshot.AddPoint(std::move(p));
  }
  ++stats_.jobs_submitted;
  if (worker_->Submit(std::move(job))) ++stats_.jobs_replaced;
}

bool Localizer::Merge(const AlignmentOutcome& outcome) {
  if (outcome.sequence <= last_merged_sequence_) {
    ++stats_.stale_discarded;
    return false;
  }
  last_merged_sequence_ = outcome.sequence;
  if (!outcome.aligned || !outcome.hba || !outcome.hba->t_map_estimated) {
    ++stats_.alignment_failures;
    return false;
  }
  const HbaResult& hba = *outcome.hba;
  const Pose& t_map = hba.t_map;
  if (!(t_map.translation().norm() <= config_.max_correction_translation)) {
    ++stats_.alignment_failures;
    return false;
  }
  if (outcome.association) associations_[outcome.keyframe_id] = *outcome.association;
  CommitResult(hba, local_map_);

  // Fold t_map into the window and everything tracked since the snapshot.
  KeyframeId first = outcome.window.flexible.front();
  if (!outcome.window.fixed.empty()) first = std::min(first, outcome.window.fixed.front());
  const Pose inv = t_map.inverse();
  std::set<PointId> moved;
  for (auto it = keyframe_points_.lower_bound(first); it != keyframe_points_.end(); ++it) {
    Keyframe& kf = local_map_.mutable_keyframe(it->first);
    kf.pose = kf.pose * t_map;
    moved.insert(it->second.begin(), it->second.end());
  }
  for (PointId pid : moved) {
    MapPoint& p = local_map_.mutable_point(pid);
    p.position = inv * p.position;
    p.mean_view_dir = inv.rotation() * p.mean_view_dir;
  }
  state_.current_pose = state_.current_pose * t_map;

  last_merge_prior_matches_ =
      outcome.association ? static_cast<int>(outcome.association->matches.size()) : 0;
  last_tmap_norm_ = t_map.translation().norm();
  merged_this_frame_ = true;
  ++stats_.merges_applied;
  return true;
}

void Localizer::MergeFinished(bool wait) {
  if (!worker_) return;
  if (wait) worker_->WaitIdle();
  for (const AlignmentOutcome& outcome : worker_->TakeFinished()) Merge(outcome);
}

void Localizer::Finish() { MergeFinished(true); }

Pose Localizer::ProcessFrame(const FrameInput& frame) {
  if (!trajectory_.samples.empty() &&
      !(frame.timestamp > trajectory_.samples.back().timestamp)) {
    throw Error(ErrorCode::kInvalidArgument, "frame timestamps must strictly increase");
  }
  if (!frame.right_coords.empty() && frame.right_coords.size() != frame.handcrafted.size()) {
    throw Error(ErrorCode::kInvalidArgument, "right_coords must parallel the keypoints");
  }
  FrameRecord rec;
  rec.timestamp = frame.timestamp;
  rec.job_in_flight = worker_ && worker_->Busy();
  merged_this_frame_ = false;

  const double cpu_start = ThreadCpuSeconds();
  const bool fresh = state_.status != TrackingStatus::kTracking;
  bool insert_keyframe = false;
  std::vector<MatchPair> tracked;

  if (state_.status == TrackingStatus::kInitializing) {
    if (HasStereo(frame, config_.min_track_inliers)) {
      state_.status = TrackingStatus::kTracking;
      insert_keyframe = true;
    }
  } else {
    const Pose predicted = Se3Exp(state_.motion_model) * state_.current_pose;
    TrackResult tr = Track(frame, predicted);
    if (tr.ok) {
      state_.motion_model = Se3Log(tr.pose * state_.current_pose.inverse());
      state_.current_pose = tr.pose;
      state_.status = TrackingStatus::kTracking;
      tracked = std::move(tr.inliers);
      rec.inliers = static_cast<int>(tracked.size());
      if (fresh) {
        insert_keyframe = true;
      } else {
        const Keyframe& last = local_map_.keyframe(state_.last_keyframe_id);
        insert_keyframe = SelectKeyframe(config_.keyframes, last.pose, state_.current_pose,
                                         rec.inliers, last_keyframe_points_);
      }
    } else {
      state_.current_pose = predicted;
      if (state_.status == TrackingStatus::kLost &&
          HasStereo(frame, config_.min_track_inliers)) {
        // Re-initialise at the dead-reckoned pose.
        state_.status = TrackingStatus::kTracking;
        insert_keyframe = true;
      } else {
        state_.status = TrackingStatus::kLost;
      }
    }
  }
  rec.tracking_cpu_seconds = ThreadCpuSeconds() - cpu_start;
  ++state_.frames_since_alignment;

  if (insert_keyframe) {
    MergeFinished(config_.deterministic_merge);
    const KeyframeId id = InsertKeyframe(frame, tracked);
    last_keyframe_points_ = static_cast<int>(keyframe_points_[id].size());
    if (rec.inliers == 0) rec.inliers = last_keyframe_points_;
    ScheduleAlignment(id, frame);
    rec.keyframe = true;
  }
  rec.status = state_.status;
  if (merged_this_frame_) {
    rec.prior_matches = last_merge_prior_matches_;
    rec.tmap_translation_norm = last_tmap_norm_;
  }
  records_.push_back(rec);
  trajectory_.samples.push_back({frame.timestamp, state_.current_pose.inverse()});
  return state_.current_pose;
}

void WriteStatusCsv(std::ostream& out, const std::vector<FrameRecord>& records) {
  out << "timestamp,status,inliers,prior_matches,tmap_translation_norm\n"
      << std::setprecision(9);
  for (const FrameRecord& r : records) {
    out << r.timestamp << ',' << TrackingStatusName(r.status) << ',' << r.inliers << ','
        << r.prior_matches << ',' << r.tmap_translation_norm << '\n';
  }
}

}  // namespace hiloc
