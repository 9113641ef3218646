#include "hiloc/estimation.h"

#include <Eigen/Cholesky>
#include <cmath>
#include <numbers>

#include "hiloc/error.h"

namespace hiloc {

namespace {

// Squared residual charged for a point that falls behind the near plane,
// so a step cannot lower the cost by pushing points out of view.
constexpr double kBehindCameraPenalty = 1e6;

template <int N>
std::optional<Eigen::VectorXd> SolveDampedDense(const Eigen::Matrix<double, N, N>& h,
                                                const Eigen::Matrix<double, N, 1>& g,
                                                double damping) {
  Eigen::Matrix<double, N, N> a = h;
  a.diagonal().array() += damping * (h.diagonal().array() + 1e-9);
  Eigen::LDLT<Eigen::Matrix<double, N, N>> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  Eigen::VectorXd step = ldlt.solve(-g);
  return step;
}

class PoseProblem {
 public:
  using State = Pose;

  PoseProblem(const std::vector<PoseMatch>& matches, const std::vector<size_t>& active,
              const CameraIntrinsics& k, const RobustKernel& kernel)
      : matches_(matches), active_(active), k_(k), kernel_(kernel) {}

  double Cost(const Pose& pose) const {
    double cost = 0.0;
    for (size_t i : active_) {
      const Vec3 pc = pose * matches_[i].world_point;
      if (!(pc.z() > kMinDepth)) {
        cost += kernel_.Cost(kBehindCameraPenalty);
        continue;
      }
      cost += kernel_.Cost((matches_[i].pixel - ProjectCameraPoint(pc, k_)).squaredNorm());
    }
    return 0.5 * cost;
  }

  void Linearize(const Pose& pose) {
    h_.setZero();
    g_.setZero();
    for (size_t i : active_) {
      const Vec3 pc = pose * matches_[i].world_point;
      if (!(pc.z() > kMinDepth)) continue;
      const Vec2 r = matches_[i].pixel - ProjectCameraPoint(pc, k_);
      const Mat26 j = JacobianWrtPose(pc, k_);
      const double w = kernel_.Weight(r.squaredNorm());
      h_.noalias() += w * j.transpose() * j;
      g_.noalias() += w * j.transpose() * r;
    }
  }

  std::optional<Eigen::VectorXd> Solve(double damping) const {
    return SolveDampedDense<6>(h_, g_, damping);
  }

  Pose Retract(const Pose& pose, const Eigen::VectorXd& step) const {
    return Se3Exp(Twist(step)) * pose;
  }

 private:
  const std::vector<PoseMatch>& matches_;
  const std::vector<size_t>& active_;
  const CameraIntrinsics& k_;
  const RobustKernel& kernel_;
  Eigen::Matrix<double, 6, 6> h_;
  Eigen::Matrix<double, 6, 1> g_;
};

class PointProblem {
 public:
  using State = Vec3;

  PointProblem(const std::vector<PointObservation>& obs, const CameraIntrinsics& k)
      : obs_(obs), k_(k) {}

  double Cost(const Vec3& x) const {
    double cost = 0.0;
    for (const PointObservation& o : obs_) {
      const Vec3 pc = o.pose * x;
      if (!(pc.z() > kMinDepth)) {
        cost += kBehindCameraPenalty;
        continue;
      }
      cost += (o.pixel - ProjectCameraPoint(pc, k_)).squaredNorm();
    }
    return 0.5 * cost;
  }

  void Linearize(const Vec3& x) {
    h_.setZero();
    g_.setZero();
    for (const PointObservation& o : obs_) {
      const Vec3 pc = o.pose * x;
      if (!(pc.z() > kMinDepth)) continue;
      const Vec2 r = o.pixel - ProjectCameraPoint(pc, k_);
      const Mat23 j = JacobianWrtPoint(pc, o.pose, k_);
      h_.noalias() += j.transpose() * j;
      g_.noalias() += j.transpose() * r;
    }
  }

  std::optional<Eigen::VectorXd> Solve(double damping) const {
    return SolveDampedDense<3>(h_, g_, damping);
  }

  Vec3 Retract(const Vec3& x, const Eigen::VectorXd& step) const {
    return x + step.head<3>();
  }

 private:
  const std::vector<PointObservation>& obs_;
  const CameraIntrinsics& k_;
  Mat3 h_;
  Vec3 g_;
};

}  // namespace

RobustKernel RobustKernel::Huber(double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw Error(ErrorCode::kInvalidArgument, "huber delta must be positive");
  }
  return {Kind::kHuber, delta};
}

double RobustKernel::Cost(double s) const {
  if (kind == Kind::kNone) return s;
  const double d2 = delta * delta;
  if (s <= d2) return s;
  return 2.0 * delta * std::sqrt(s) - d2;
}

double RobustKernel::Weight(double s) const {
  if (kind == Kind::kNone) return 1.0;
  if (s <= delta * delta) return 1.0;
  return delta / std::sqrt(s);
}

void SolverConfig::Validate() const {
  if (max_iterations < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_iterations must be >= 1");
  }
  if (!(convergence_tol > 0.0) || !(damping_init > 0.0) || !(damping_scale > 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "solver tolerances must be positive");
  }
}

PoseEstimate OptimizePose(const std::vector<PoseMatch>& matches,
                          const CameraIntrinsics& k, const Pose& initial,
                          const RobustKernel& kernel, const SolverConfig& cfg,
                          const PoseOptimizationParams& params) {
  cfg.Validate();
  if (matches.size() < 4) {
    throw Error(ErrorCode::kUnderdetermined,
                "pose optimisation needs at least 4 matches, got " +
                    std::to_string(matches.size()));
  }
  size_t valid = 0;
  for (const PoseMatch& m : matches) {
    if ((initial * m.world_point).z() > kMinDepth) ++valid;
  }
  if (valid == 0) {
    throw Error(ErrorCode::kNoValidResiduals, "no match lies in front of the camera");
  }

  const double chi2 = kChi2TwoDof95 * params.pixel_sigma * params.pixel_sigma;
  auto classify = [&](const Pose& pose, std::vector<bool>* inliers) {
    int n = 0;
    for (size_t i = 0; i < matches.size(); ++i) {
      const Vec3 pc = pose * matches[i].world_point;
      bool ok = false;
      if (pc.z() > kMinDepth) {
        ok = (matches[i].pixel - ProjectCameraPoint(pc, k)).squaredNorm() < chi2;
      }
      (*inliers)[i] = ok;
      n += ok;
    }
    return n;
  };

  PoseEstimate est;
  est.pose = initial;
  est.inliers.assign(matches.size(), true);
  std::vector<size_t> active(matches.size());
  for (size_t i = 0; i < active.size(); ++i) active[i] = i;

  const int rounds = std::max(1, params.outlier_rounds);
  for (int round = 0; round < rounds; ++round) {
    PoseProblem problem(matches, active, k, kernel);
    est.rounds.push_back(RunLevenbergMarquardt(problem, est.pose, cfg));
    std::vector<bool> inliers(matches.size());
    const int n = classify(est.pose, &inliers);
    const bool unchanged = inliers == est.inliers;
    est.inliers = std::move(inliers);
    est.num_inliers = n;
    if (unchanged || n < 4) break;
    active.clear();
    for (size_t i = 0; i < matches.size(); ++i) {
      if (est.inliers[i]) active.push_back(i);
    }
  }

  std::vector<size_t> final_set;
  for (size_t i = 0; i < matches.size(); ++i) {
    if (est.inliers[i]) final_set.push_back(i);
  }
  est.final_cost = PoseProblem(matches, final_set, k, kernel).Cost(est.pose);
  return est;
}

double StereoDepth(double fx, double baseline, double u_left, double u_right,
                   double disparity_min) {
  const double disparity = u_left - u_right;
  if (!(disparity > disparity_min)) {
    throw Error(ErrorCode::kUnreliableDisparity,
                "disparity " + std::to_string(disparity) + " px is not above " +
                    std::to_string(disparity_min));
  }
  return fx * baseline / disparity;
}

double MaxParallaxDeg(const std::vector<PointObservation>& observations,
                      const Vec3& point) {
  double best = 0.0;
  for (size_t a = 0; a < observations.size(); ++a) {
    const Vec3 ra = (point - observations[a].pose.center()).normalized();
    for (size_t b = a + 1; b < observations.size(); ++b) {
      const Vec3 rb = (point - observations[b].pose.center()).normalized();
      const double angle = std::atan2(ra.cross(rb).norm(), ra.dot(rb));
      best = std::max(best, angle);
    }
  }
  return best * 180.0 / std::numbers::pi;
}

PointEstimate RefinePoint(const std::vector<PointObservation>& observations,
                          const CameraIntrinsics& k, const Vec3& initial,
                          const SolverConfig& cfg,
                          const PointRefinementParams& params) {
  cfg.Validate();
  if (observations.size() < 2) {
    throw Error(ErrorCode::kInsufficientParallax,
                "point refinement needs at least two observations");
  }
  if (MaxParallaxDeg(observations, initial) < params.min_parallax_deg) {
    throw Error(ErrorCode::kInsufficientParallax, "triangulation angle too small");
  }
  PointEstimate est;
  est.position = initial;
  PointProblem problem(observations, k);
  est.summary = RunLevenbergMarquardt(problem, est.position, cfg);
  est.final_cost = est.summary.final_cost;
  return est;
}

std::vector<std::optional<PointEstimate>> RefinePoints(
    const std::vector<PointRefinementJob>& jobs, const CameraIntrinsics& k,
    const SolverConfig& cfg, const PointRefinementParams& params) {
  std::vector<std::optional<PointEstimate>> out(jobs.size());
  for (size_t i = 0; i < jobs.size(); ++i) {
    try {
      out[i] = RefinePoint(jobs[i].observations, k, jobs[i].initial, cfg, params);
    } catch (const Error&) {
      // left empty
    }
  }
  return out;
}

}  // namespace hiloc
