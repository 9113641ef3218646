#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hiloc/estimation.h"
#include "hiloc/matching.h"
#include "hiloc/worldmap.h"

namespace hiloc {

/// Matches of one flexible keyframe against the prior map. Pixels are
/// indexed by MatchPair::keypoint_index.
struct PriorAssociation {
  KeyframeId keyframe_id = 0;
  MatchSet matches;
  std::vector<Vec2> keypoint_pixels;
};

/// Flexible keyframes are optimised; fixed keyframes only contribute
/// residuals. t_map maps prior-map coordinates into the local map frame.
struct LocalWindow {
  std::vector<KeyframeId> flexible;
  std::vector<KeyframeId> fixed;
  std::vector<PointId> local_points;
  std::vector<PriorAssociation> prior_assocs;
  Pose t_map;

  /// Throws kInvalidArgument on overlap between flexible and fixed.
  void Validate() const;
};

/// Last window_size keyframes (by id) are flexible, the fixed_size before
/// them are fixed; local_points are the points observed by any flexible
/// keyframe. t_map starts at identity.
LocalWindow BuildWindow(const VisualMap& local_map, int window_size = 8,
                        int fixed_size = 2);

struct HbaIteration {
  int iteration = 0;
  double cost = 0.0;
  double damping = 0.0;
  Twist t_map = Twist::Zero();
};

struct HbaReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int handcrafted_residuals = 0;
  int prior_residuals = 0;
  std::vector<HbaIteration> log;
};

struct HbaResult {
  std::map<KeyframeId, Pose> poses;  // flexible keyframes, local frame
  std::map<PointId, Vec3> points;    // local points, local frame
  Pose t_map;
  /// False when there were no prior residuals; t_map is then the input.
  bool t_map_estimated = false;
  HbaReport report;
};

/// Parameter state of the joint problem.
struct HbaState {
  std::vector<Pose> flexible_poses;
  Pose t_map;
  std::vector<Vec3> points;
};

/// Joint reprojection problem over flexible poses, local points and t_map:
///   handcrafted  e = z - pi(T_j X_i)
///   prior        e = z - pi(T_j T_map X_prior)
/// Pose and t_map perturbations are left multiplications.
class HbaProblem {
 public:
  HbaProblem(const LocalWindow& window, const VisualMap& local_map,
             const VisualMap& prior, const RobustKernel& kernel);

  HbaState InitialState() const { return initial_; }
  int num_flexible() const { return static_cast<int>(flexible_ids_.size()); }
  int num_points() const { return static_cast<int>(point_ids_.size()); }
  bool estimates_t_map() const { return !prior_obs_.empty(); }
  int num_handcrafted_residuals() const { return static_cast<int>(hand_obs_.size()); }
  int num_prior_residuals() const { return static_cast<int>(prior_obs_.size()); }
  const std::vector<KeyframeId>& flexible_ids() const { return flexible_ids_; }
  const std::vector<PointId>& point_ids() const { return point_ids_; }
  /// False for points held fixed (fewer than two observations in the window).
  bool point_is_free(int m) const { return point_free_[m]; }

  /// Number of pose parameters: 6 (t_map, when estimated) + 6 per flexible.
  int reduced_dim() const;

  using State = HbaState;
  double Cost(const HbaState& state) const;
  void Linearize(const HbaState& state);
  /// Schur complement over points, then back-substitution.
  std::optional<Eigen::VectorXd> Solve(double damping) const;
  HbaState Retract(const HbaState& state, const Eigen::VectorXd& step) const;

  /// Stacked residuals, handcrafted first then prior (2 rows each).
  Eigen::VectorXd Residuals(const HbaState& state) const;
  /// Dense Jacobian of Residuals w.r.t. the full step vector
  /// [t_map?, poses, points]. Intended for verification.
  Eigen::MatrixXd DenseJacobian(const HbaState& state) const;
  /// Full step dimension (reduced_dim + 3 per free point).
  int full_dim() const;

 private:
  struct HandObs {
    int point;  // index into point_ids_
    int slot;   // flexible index, or -1 - fixed index
    Vec2 pixel;
  };
  struct PriorObs {
    int slot;
    Vec3 prior_point;
    Vec2 pixel;
  };

  const Pose& SlotPose(const HbaState& s, int slot) const {
    return slot >= 0 ? s.flexible_poses[slot] : fixed_poses_[-1 - slot];
  }
  int PoseOffset(int slot) const { return (estimates_t_map() ? 6 : 0) + 6 * slot; }
  int PointOffset(int m) const { return reduced_dim() + 3 * point_col_[m]; }

  const CameraIntrinsics& IntrinsicsFor(int slot) const {
    return slot >= 0 ? flexible_k_[slot] : fixed_k_[-1 - slot];
  }

  RobustKernel kernel_;
  std::vector<KeyframeId> flexible_ids_;
  std::vector<CameraIntrinsics> flexible_k_;
  std::vector<Pose> fixed_poses_;
  std::vector<CameraIntrinsics> fixed_k_;
  std::vector<PointId> point_ids_;
  std::vector<bool> point_free_;
  std::vector<int> point_col_;  // column index among free points, or -1
  std::vector<HandObs> hand_obs_;
  std::vector<PriorObs> prior_obs_;
  HbaState initial_;

  // Linearisation.
  Eigen::MatrixXd h_cc_;
  Eigen::VectorXd g_c_;
  std::vector<Mat3> h_pp_;
  std::vector<Vec3> g_p_;
  std::vector<std::vector<std::pair<int, Eigen::Matrix<double, 6, 3>>>> h_cp_;
};

/// Minimises the joint cost. Fixed poses and prior points are never
/// modified. Throws kInvalidArgument for an empty window.
HbaResult LocalBundleAdjust(const LocalWindow& window, const VisualMap& local_map,
                            const VisualMap& prior,
                            const RobustKernel& kernel = RobustKernel::Huber(kHuberDelta2Dof),
                            const SolverConfig& cfg = {.max_iterations = 15});

/// Writes optimised flexible poses and local points into the map (still in
/// the local frame).
void CommitResult(const HbaResult& result, VisualMap& local_map);

/// Folds t_map into flexible poses (T_j <- T_j T_map) and local points
/// (X <- T_map^-1 X), expressing them in the prior frame; resets
/// window.t_map to identity.
void ApplyCorrection(LocalWindow& window, const Pose& t_map, VisualMap& local_map);

/// "HILOC-HBA v1" followed by "iteration cost damping t_map twist (6)".
void WriteHbaLog(std::ostream& out, const HbaReport& report);

}  // namespace hiloc
