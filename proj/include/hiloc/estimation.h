#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "hiloc/geometry.h"

namespace hiloc {

struct RobustKernel {
  enum class Kind { kNone, kHuber };
  Kind kind = Kind::kNone;
  double delta = 1.0;  // pixels

  static RobustKernel None() { return {}; }
  /// Throws kInvalidArgument unless delta > 0.
  static RobustKernel Huber(double delta);

  /// rho(s) for a squared residual norm s; rho(s) = s inside the kernel.
  double Cost(double squared_norm) const;
  /// IRLS weight rho'(s).
  double Weight(double squared_norm) const;
};

/// 95% chi-square threshold for 2 DoF, as a pixel radius with sigma = 1.
inline constexpr double kHuberDelta2Dof = 2.447;
inline constexpr double kChi2TwoDof95 = 5.991;

struct SolverConfig {
  int max_iterations = 10;
  double convergence_tol = 1e-8;  // relative cost decrease
  double damping_init = 1e-4;
  double damping_scale = 10.0;
  /// Damping escalations tried per iteration before giving up.
  int max_rejections = 10;

  void Validate() const;
};

struct IterationLog {
  int iteration = 0;
  double cost = 0.0;
  double damping = 0.0;
  bool accepted = false;
};

struct SolveSummary {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<IterationLog> log;
};

/// Levenberg-style damped Gauss-Newton. Problem supplies
///   using State;
///   double Cost(const State&);
///   void Linearize(const State&);
///   std::optional<Eigen::VectorXd> Solve(double damping);
///   State Retract(const State&, const Eigen::VectorXd& step);
/// Steps that do not strictly lower the cost are rejected and the damping
/// is multiplied by damping_scale; accepted steps divide it. on_iteration
/// sees the state after every outer iteration.
template <typename Problem>
SolveSummary RunLevenbergMarquardt(
    Problem& problem, typename Problem::State& state, const SolverConfig& cfg,
    const std::function<void(const typename Problem::State&, const IterationLog&)>&
        on_iteration = {}) {
  SolveSummary summary;
  double cost = problem.Cost(state);
  summary.initial_cost = cost;
  double damping = cfg.damping_init;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    if (!(cost > 0.0)) break;
    problem.Linearize(state);
    bool accepted = false;
    double relative_decrease = 0.0;
    for (int attempt = 0; attempt <= cfg.max_rejections; ++attempt) {
      const std::optional<Eigen::VectorXd> step = problem.Solve(damping);
      if (step && step->allFinite()) {
        typename Problem::State candidate = problem.Retract(state, *step);
        const double candidate_cost = problem.Cost(candidate);
        if (candidate_cost < cost) {
          relative_decrease = (cost - candidate_cost) / cost;
          state = std::move(candidate);
          cost = candidate_cost;
          damping = std::max(damping / cfg.damping_scale, 1e-15);
          accepted = true;
          break;
        }
      }
      damping *= cfg.damping_scale;
    }
    summary.iterations = iter + 1;
    summary.log.push_back({iter, cost, damping, accepted});
    if (on_iteration) on_iteration(state, summary.log.back());
    if (!accepted || relative_decrease < cfg.convergence_tol) break;
  }
  summary.final_cost = cost;
  return summary;
}

struct PoseMatch {
  Vec3 world_point;
  Vec2 pixel;
};

struct PoseOptimizationParams {
  double pixel_sigma = 1.0;
  /// Optimise / reclassify rounds; later rounds use only current inliers.
  int outlier_rounds = 3;
};

struct PoseEstimate {
  Pose pose;
  std::vector<bool> inliers;
  double final_cost = 0.0;  // robustified cost over the final inlier set
  int num_inliers = 0;
  std::vector<SolveSummary> rounds;
};

/// Minimises 1/2 sum rho(|z_i - pi(T X_i)|^2) over T with left
/// perturbations. Residuals whose squared norm is below
/// 5.991 sigma^2 at the final pose are inliers.
/// Throws kUnderdetermined for fewer than 4 matches and kNoValidResiduals
/// when no point lies in front of the initial camera.
PoseEstimate OptimizePose(const std::vector<PoseMatch>& matches,
                          const CameraIntrinsics& k, const Pose& initial,
                          const RobustKernel& kernel = RobustKernel::Huber(kHuberDelta2Dof),
                          const SolverConfig& cfg = {},
                          const PoseOptimizationParams& params = {});

/// Depth from a rectified stereo disparity, fx * b / (uL - uR). Throws
/// kUnreliableDisparity when uL - uR <= disparity_min.
double StereoDepth(double fx, double baseline, double u_left, double u_right,
                   double disparity_min = 0.5);

struct PointObservation {
  Pose pose;  // world-to-camera
  Vec2 pixel;
};

struct PointRefinementParams {
  double min_parallax_deg = 0.5;
};

struct PointEstimate {
  Vec3 position;
  double final_cost = 0.0;
  SolveSummary summary;
};

/// Largest angle between viewing rays to the point, in degrees.
double MaxParallaxDeg(const std::vector<PointObservation>& observations,
                      const Vec3& point);

/// Gauss-Newton refinement of a single map point position with the pose
/// held fixed. No robust kernel. Throws kInsufficientParallax for fewer
/// than two observations or parallax below the threshold.
PointEstimate RefinePoint(const std::vector<PointObservation>& observations,
                          const CameraIntrinsics& k, const Vec3& initial,
                          const SolverConfig& cfg = {.max_iterations = 5},
                          const PointRefinementParams& params = {});

struct PointRefinementJob {
  std::vector<PointObservation> observations;
  Vec3 initial;
};

/// Independent refinements; failed jobs yield std::nullopt.
std::vector<std::optional<PointEstimate>> RefinePoints(
    const std::vector<PointRefinementJob>& jobs, const CameraIntrinsics& k,
    const SolverConfig& cfg = {.max_iterations = 5},
    const PointRefinementParams& params = {});

}  // namespace hiloc
