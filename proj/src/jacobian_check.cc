#include "hiloc/jacobian_check.h"

#include <algorithm>
#include <functional>
#include <random>

#include "hiloc/error.h"
#include "hiloc/geometry.h"

namespace hiloc {

namespace {

constexpr double kStep = 1e-6;

template <int N>
Eigen::Matrix<double, 2, N> CentralDifference(
    const std::function<Vec2(const Eigen::Matrix<double, N, 1>&)>& f) {
  Eigen::Matrix<double, 2, N> j;
  for (int i = 0; i < N; ++i) {
    Eigen::Matrix<double, N, 1> d = Eigen::Matrix<double, N, 1>::Zero();
    d[i] = kStep;
    j.col(i) = (f(d) - f(-d)) / (2.0 * kStep);
  }
  return j;
}

double RelativeError(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-12);
}

}  // namespace

JacobianCheckReport CheckJacobians(std::uint64_t seed, int trials, double tolerance,
                                   bool inject_fault) {
  if (trials < 1) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> depth(2.0, 30.0);
  const CameraIntrinsics k{450.0, 450.0, 320.0, 240.0, 640, 480};

  auto random_pose = [&](double rot, double trans) {
    return Se3Exp((Twist() << trans * unit(rng), trans * unit(rng), trans * unit(rng),
                   rot * unit(rng), rot * unit(rng), rot * unit(rng))
                      .finished());
  };
  // A world point that lands in front of the camera inside the image.
  auto point_in_view = [&](const Pose& w2c) {
    const Vec2 px(320.0 + 300.0 * unit(rng), 240.0 + 220.0 * unit(rng));
    return Vec3(w2c.inverse() * Backproject(px, depth(rng), k));
  };

  JacobianCheckEntry pose{"pose", trials, 0.0}, point{"point", trials, 0.0};
  JacobianCheckEntry tmap{"t_map", trials, 0.0}, prior_pose{"prior_pose", trials, 0.0};
  for (int t = 0; t < trials; ++t) {
    const Pose tj = random_pose(1.0, 5.0);
    const Vec3 x = point_in_view(tj);
    const Vec3 pc = tj * x;
    const Vec2 z = Project(tj, k, x);

    const auto fd_pose = CentralDifference<6>(
        [&](const Vec6& d) { return Vec2(z - Project(Se3Exp(d) * tj, k, x)); });
    pose.max_relative_error =
        std::max(pose.max_relative_error, RelativeError(JacobianWrtPose(pc, k), fd_pose));

    const auto fd_point = CentralDifference<3>(
        [&](const Vec3& d) { return Vec2(z - Project(tj, k, Vec3(x + d))); });
    point.max_relative_error = std::max(
        point.max_relative_error, RelativeError(JacobianWrtPoint(pc, tj, k), fd_point));

    const Pose t_map = random_pose(0.2, 1.0);
    const Vec3 prior_x = t_map.inverse() * x;
    const auto fd_tmap = CentralDifference<6>([&](const Vec6& d) {
      return Vec2(z - Project(tj * (Se3Exp(d) * t_map), k, prior_x));
    });
    Mat26 j_tmap = JacobianWrtTmap(prior_x, tj, t_map, k);
    if (inject_fault) j_tmap.col(3) = -j_tmap.col(3);
    tmap.max_relative_error =
        std::max(tmap.max_relative_error, RelativeError(j_tmap, fd_tmap));

    const auto fd_prior_pose = CentralDifference<6>([&](const Vec6& d) {
      return Vec2(z - Project((Se3Exp(d) * tj) * t_map, k, prior_x));
    });
    prior_pose.max_relative_error =
        std::max(prior_pose.max_relative_error,
                 RelativeError(JacobianWrtPosePrior(prior_x, tj, t_map, k), fd_prior_pose));
  }
  JacobianCheckReport report;
  report.entries = {pose, point, tmap, prior_pose};
  for (const auto& e : report.entries) {
    report.max_relative_error = std::max(report.max_relative_error, e.max_relative_error);
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace hiloc
