#include "hiloc/hba.h"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <iomanip>
#include <ostream>
#include <set>
#include <unordered_map>

#include "hiloc/error.h"

namespace hiloc {

namespace {

constexpr double kBehindCameraPenalty = 1e6;

}  // namespace

void LocalWindow::Validate() const {
  const std::set<KeyframeId> flex(flexible.begin(), flexible.end());
  for (KeyframeId id : fixed) {
    if (flex.count(id)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "keyframe " + std::to_string(id) + " is both flexible and fixed");
    }
  }
}

LocalWindow BuildWindow(const VisualMap& local_map, int window_size, int fixed_size) {
  if (window_size < 1 || fixed_size < 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid window sizes");
  }
  std::vector<KeyframeId> ids;
  for (const auto& [id, kf] : local_map.keyframes()) ids.push_back(id);
  LocalWindow w;
  const int n = static_cast<int>(ids.size());
  const int flex_begin = std::max(0, n - window_size);
  const int fixed_begin = std::max(0, flex_begin - fixed_size);
  w.fixed.assign(ids.begin() + fixed_begin, ids.begin() + flex_begin);
  w.flexible.assign(ids.begin() + flex_begin, ids.end());
  const std::set<KeyframeId> flex(w.flexible.begin(), w.flexible.end());
  for (const auto& [id, p] : local_map.points()) {
    for (const Observation& obs : p.observations) {
      if (flex.count(obs.keyframe_id)) {
        w.local_points.push_back(id);
        break;
      }
    }
  }
  return w;
}

HbaProblem::HbaProblem(const LocalWindow& window, const VisualMap& local_map,
                       const VisualMap& prior, const RobustKernel& kernel)
    : kernel_(kernel) {
  window.Validate();
  if (window.flexible.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "window has no flexible keyframes");
  }
  std::unordered_map<KeyframeId, int> slot_of;
  for (KeyframeId id : window.flexible) {
    const Keyframe& kf = local_map.keyframe(id);
    slot_of[id] = static_cast<int>(flexible_ids_.size());
    flexible_ids_.push_back(id);
    flexible_k_.push_back(kf.intrinsics);
    initial_.flexible_poses.push_back(kf.pose);
  }
  for (KeyframeId id : window.fixed) {
    const Keyframe& kf = local_map.keyframe(id);
    slot_of[id] = -1 - static_cast<int>(fixed_poses_.size());
    fixed_poses_.push_back(kf.pose);
    fixed_k_.push_back(kf.intrinsics);
  }
  initial_.t_map = window.t_map;

  int free_count = 0;
  for (PointId pid : window.local_points) {
    const MapPoint& p = local_map.point(pid);
    const int m = static_cast<int>(point_ids_.size());
    int n_obs = 0;
    for (const Observation& obs : p.observations) {
      auto it = slot_of.find(obs.keyframe_id);
      if (it == slot_of.end()) continue;
      const Keyframe& kf = local_map.keyframe(obs.keyframe_id);
      hand_obs_.push_back({m, it->second, kf.keypoints[obs.keypoint_index].pixel});
      ++n_obs;
    }
    point_ids_.push_back(pid);
    initial_.points.push_back(p.position);
    const bool is_free = n_obs >= 2;
    point_free_.push_back(is_free);
    point_col_.push_back(is_free ? free_count++ : -1);
  }

  for (const PriorAssociation& assoc : window.prior_assocs) {
    auto it = slot_of.find(assoc.keyframe_id);
    if (it == slot_of.end() || it->second < 0) continue;
    for (const MatchPair& pair : assoc.matches.pairs) {
      prior_obs_.push_back({it->second, prior.point(pair.point_id).position,
                            assoc.keypoint_pixels.at(pair.keypoint_index)});
    }
  }
}

int HbaProblem::reduced_dim() const {
  return (estimates_t_map() ? 6 : 0) + 6 * num_flexible();
}

int HbaProblem::full_dim() const {
  int free = 0;
  for (bool f : point_free_) free += f;
  return reduced_dim() + 3 * free;
}

double HbaProblem::Cost(const HbaState& s) const {
  double cost = 0.0;
  for (const HandObs& o : hand_obs_) {
    const Vec3 pc = SlotPose(s, o.slot) * s.points[o.point];
    if (!(pc.z() > kMinDepth)) {
      cost += kernel_.Cost(kBehindCameraPenalty);
      continue;
    }
    cost += kernel_.Cost((o.pixel - ProjectCameraPoint(pc, IntrinsicsFor(o.slot))).squaredNorm());
  }
  for (const PriorObs& o : prior_obs_) {
    const Vec3 pc = s.flexible_poses[o.slot] * (s.t_map * o.prior_point);
    if (!(pc.z() > kMinDepth)) {
      cost += kernel_.Cost(kBehindCameraPenalty);
      continue;
    }
    cost += kernel_.Cost((o.pixel - ProjectCameraPoint(pc, flexible_k_[o.slot])).squaredNorm());
  }
  return 0.5 * cost;
}

Eigen::VectorXd HbaProblem::Residuals(const HbaState& s) const {
  Eigen::VectorXd r(2 * (hand_obs_.size() + prior_obs_.size()));
  int row = 0;
  for (const HandObs& o : hand_obs_) {
    const Vec3 pc = SlotPose(s, o.slot) * s.points[o.point];
    r.segment<2>(row) = o.pixel - ProjectCameraPoint(pc, IntrinsicsFor(o.slot));
    row += 2;
  }
  for (const PriorObs& o : prior_obs_) {
    const Vec3 pc = s.flexible_poses[o.slot] * (s.t_map * o.prior_point);
    r.segment<2>(row) = o.pixel - ProjectCameraPoint(pc, flexible_k_[o.slot]);
    row += 2;
  }
  return r;
}

Eigen::MatrixXd HbaProblem::DenseJacobian(const HbaState& s) const {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * (hand_obs_.size() + prior_obs_.size()),
                                            full_dim());
  int row = 0;
  for (const HandObs& o : hand_obs_) {
    const Pose& pose = SlotPose(s, o.slot);
    const Vec3 pc = pose * s.points[o.point];
    const CameraIntrinsics& k = IntrinsicsFor(o.slot);
    if (o.slot >= 0) j.block<2, 6>(row, PoseOffset(o.slot)) = JacobianWrtPose(pc, k);
    if (point_free_[o.point]) {
      j.block<2, 3>(row, PointOffset(o.point)) = JacobianWrtPoint(pc, pose, k);
    }
    row += 2;
  }
  for (const PriorObs& o : prior_obs_) {
    const Pose& pose = s.flexible_poses[o.slot];
    const CameraIntrinsics& k = flexible_k_[o.slot];
    j.block<2, 6>(row, 0) = JacobianWrtTmap(o.prior_point, pose, s.t_map, k);
    j.block<2, 6>(row, PoseOffset(o.slot)) =
        JacobianWrtPosePrior(o.prior_point, pose, s.t_map, k);
    row += 2;
  }
  return j;
}

void HbaProblem::Linearize(const HbaState& s) {
  const int nc = reduced_dim();
  h_cc_.setZero(nc, nc);
  g_c_.setZero(nc);
  const size_t np = point_ids_.size();
  h_pp_.assign(np, Mat3::Zero());
  g_p_.assign(np, Vec3::Zero());
  h_cp_.assign(np, {});

  for (const HandObs& o : hand_obs_) {
    const Pose& pose = SlotPose(s, o.slot);
    const Vec3 pc = pose * s.points[o.point];
    if (!(pc.z() > kMinDepth)) continue;
    const CameraIntrinsics& k = IntrinsicsFor(o.slot);
    const Vec2 r = o.pixel - ProjectCameraPoint(pc, k);
    const double w = kernel_.Weight(r.squaredNorm());
    Mat26 jp;
    if (o.slot >= 0) {
      jp = JacobianWrtPose(pc, k);
      const int off = PoseOffset(o.slot);
      h_cc_.block<6, 6>(off, off).noalias() += w * jp.transpose() * jp;
      g_c_.segment<6>(off).noalias() += w * jp.transpose() * r;
    }
    if (!point_free_[o.point]) continue;
    const Mat23 jx = JacobianWrtPoint(pc, pose, k);
    h_pp_[o.point].noalias() += w * jx.transpose() * jx;
    g_p_[o.point].noalias() += w * jx.transpose() * r;
    if (o.slot >= 0) {
      const int off = PoseOffset(o.slot);
      Eigen::Matrix<double, 6, 3> block = w * jp.transpose() * jx;
      auto& row = h_cp_[o.point];
      auto it = std::find_if(row.begin(), row.end(),
                             [&](const auto& e) { return e.first == off; });
      if (it == row.end()) {
        row.emplace_back(off, block);
      } else {
        it->second += block;
      }
    }
  }

  for (const PriorObs& o : prior_obs_) {
    const Pose& pose = s.flexible_poses[o.slot];
    const CameraIntrinsics& k = flexible_k_[o.slot];
    const Vec3 pc = pose * (s.t_map * o.prior_point);
    if (!(pc.z() > kMinDepth)) continue;
    const Vec2 r = o.pixel - ProjectCameraPoint(pc, k);
    const double w = kernel_.Weight(r.squaredNorm());
    const Mat26 jt = JacobianWrtTmap(o.prior_point, pose, s.t_map, k);
    const Mat26 jj = JacobianWrtPosePrior(o.prior_point, pose, s.t_map, k);
    const int off = PoseOffset(o.slot);
    h_cc_.block<6, 6>(0, 0).noalias() += w * jt.transpose() * jt;
    h_cc_.block<6, 6>(off, off).noalias() += w * jj.transpose() * jj;
    const Eigen::Matrix<double, 6, 6> cross = w * jt.transpose() * jj;
    h_cc_.block<6, 6>(0, off) += cross;
    h_cc_.block<6, 6>(off, 0) += cross.transpose();
    g_c_.segment<6>(0).noalias() += w * jt.transpose() * r;
    g_c_.segment<6>(off).noalias() += w * jj.transpose() * r;
  }
}

std::optional<Eigen::VectorXd> HbaProblem::Solve(double damping) const {
  const int nc = reduced_dim();
  Eigen::MatrixXd s = h_cc_;
  s.diagonal().array() += damping * (h_cc_.diagonal().array() + 1e-9);
  Eigen::VectorXd rhs = -g_c_;

  std::vector<Mat3> c_inv(point_ids_.size());
  for (size_t m = 0; m < point_ids_.size(); ++m) {
    if (!point_free_[m]) continue;
    Mat3 c = h_pp_[m];
    c.diagonal().array() += damping * (h_pp_[m].diagonal().array() + 1e-9);
    Eigen::LDLT<Mat3> ldlt(c);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
    c_inv[m] = ldlt.solve(Mat3::Identity());
    const auto& blocks = h_cp_[m];
    for (const auto& [off_a, wa] : blocks) {
      const Eigen::Matrix<double, 6, 3> wa_cinv = wa * c_inv[m];
      rhs.segment<6>(off_a).noalias() += wa_cinv * g_p_[m];
      for (const auto& [off_b, wb] : blocks) {
        s.block<6, 6>(off_a, off_b).noalias() -= wa_cinv * wb.transpose();
      }
    }
  }

  Eigen::VectorXd step(full_dim());
  if (nc > 0) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
    step.head(nc) = ldlt.solve(rhs);
  }
  for (size_t m = 0; m < point_ids_.size(); ++m) {
    if (!point_free_[m]) continue;
    Vec3 b = -g_p_[m];
    for (const auto& [off, w] : h_cp_[m]) b.noalias() -= w.transpose() * step.segment<6>(off);
    step.segment<3>(PointOffset(static_cast<int>(m))) = c_inv[m] * b;
  }
  return step;
}

HbaState HbaProblem::Retract(const HbaState& s, const Eigen::VectorXd& step) const {
  HbaState out = s;
  if (estimates_t_map()) out.t_map = Se3Exp(Twist(step.segment<6>(0))) * s.t_map;
  for (int j = 0; j < num_flexible(); ++j) {
    out.flexible_poses[j] = Se3Exp(Twist(step.segment<6>(PoseOffset(j)))) * s.flexible_poses[j];
  }
  for (size_t m = 0; m < point_ids_.size(); ++m) {
    if (point_free_[m]) out.points[m] += step.segment<3>(PointOffset(static_cast<int>(m)));
  }
  return out;
}

HbaResult LocalBundleAdjust(const LocalWindow& window, const VisualMap& local_map,
                            const VisualMap& prior, const RobustKernel& kernel,
                            const SolverConfig& cfg) {
  cfg.Validate();
  HbaProblem problem(window, local_map, prior, kernel);
  HbaState state = problem.InitialState();

  HbaResult result;
  result.report.handcrafted_residuals = problem.num_handcrafted_residuals();
  result.report.prior_residuals = problem.num_prior_residuals();
  const SolveSummary summary = RunLevenbergMarquardt(
      problem, state, cfg, [&](const HbaState& s, const IterationLog& log) {
        result.report.log.push_back(
            {log.iteration, log.cost, log.damping, Se3Log(s.t_map)});
      });
  result.report.initial_cost = summary.initial_cost;
  result.report.final_cost = summary.final_cost;
  result.report.iterations = summary.iterations;

  for (int j = 0; j < problem.num_flexible(); ++j) {
    result.poses.emplace(problem.flexible_ids()[j], state.flexible_poses[j]);
  }
  for (int m = 0; m < problem.num_points(); ++m) {
    result.points.emplace(problem.point_ids()[m], state.points[m]);
  }
  result.t_map = state.t_map;
  result.t_map_estimated = problem.estimates_t_map();
  return result;
}

void CommitResult(const HbaResult& result, VisualMap& local_map) {
  for (const auto& [id, pose] : result.poses) local_map.mutable_keyframe(id).pose = pose;
  for (const auto& [id, x] : result.points) local_map.mutable_point(id).position = x;
}

void ApplyCorrection(LocalWindow& window, const Pose& t_map, VisualMap& local_map) {
  const Pose inv = t_map.inverse();
  for (KeyframeId id : window.flexible) {
    Keyframe& kf = local_map.mutable_keyframe(id);
    kf.pose = kf.pose * t_map;
  }
  for (PointId id : window.local_points) {
    MapPoint& p = local_map.mutable_point(id);
    p.position = inv * p.position;
    p.mean_view_dir = inv.rotation() * p.mean_view_dir;
  }
  window.t_map = Pose::Identity();
}

void WriteHbaLog(std::ostream& out, const HbaReport& report) {
  out << "HILOC-HBA v1\n" << std::setprecision(17);
  for (const HbaIteration& it : report.log) {
    out << it.iteration << ' ' << it.cost << ' ' << it.damping;
    for (int i = 0; i < 6; ++i) out << ' ' << it.t_map[i];
    out << '\n';
  }
}

}  // namespace hiloc
