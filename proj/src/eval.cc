#include "hiloc/eval.h"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "hiloc/error.h"

namespace hiloc {

void Trajectory::Validate() const {
  for (size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].timestamp > samples[i - 1].timestamp)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "trajectory timestamps must strictly increase");
    }
  }
}

Trajectory ReadTum(std::istream& in) {
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v) {
      if (!(ls >> x)) {
        throw Error(ErrorCode::kParse,
                    "line " + std::to_string(line_no) + ": expected 8 numbers");
      }
    }
    try {
      traj.samples.push_back(
          {v[0], Pose::FromQuaternion(Eigen::Quaterniond(v[7], v[4], v[5], v[6]),
                                      Vec3(v[1], v[2], v[3]))});
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    traj.Validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  return traj;
}

Trajectory LoadTum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  return ReadTum(in);
}

void WriteTum(std::ostream& out, const Trajectory& trajectory) {
  out << std::setprecision(9);
  for (const TrajectorySample& s : trajectory.samples) {
    const Eigen::Quaterniond q = s.pose.quaternion();
    const Vec3& t = s.pose.translation();
    out << s.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x()
        << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
}

void SaveTum(const std::string& path, const Trajectory& trajectory) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  WriteTum(out, trajectory);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

std::vector<PosePair> Associate(const Trajectory& est, const Trajectory& gt,
                                double max_dt) {
  if (est.samples.empty() || gt.samples.empty()) {
    throw Error(ErrorCode::kNoOverlap, "empty trajectory");
  }
  // (|dt|, est index, gt index) for every pair inside the window.
  std::vector<std::tuple<double, size_t, size_t>> candidates;
  for (size_t i = 0; i < est.samples.size(); ++i) {
    const double t = est.samples[i].timestamp;
    auto lo = std::lower_bound(gt.samples.begin(), gt.samples.end(), t - max_dt,
                               [](const TrajectorySample& s, double v) {
                                 return s.timestamp < v;
                               });
    for (auto it = lo; it != gt.samples.end() && it->timestamp <= t + max_dt; ++it) {
      candidates.emplace_back(std::abs(it->timestamp - t), i,
                              static_cast<size_t>(it - gt.samples.begin()));
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> used_est(est.samples.size()), used_gt(gt.samples.size());
  std::vector<std::pair<size_t, size_t>> accepted;
  for (const auto& [dt, i, j] : candidates) {
    if (used_est[i] || used_gt[j]) continue;
    used_est[i] = used_gt[j] = 1;
    accepted.emplace_back(i, j);
  }
  if (accepted.empty()) {
    throw Error(ErrorCode::kNoOverlap, "no timestamps pair within max_dt");
  }
  std::sort(accepted.begin(), accepted.end());
  std::vector<PosePair> out;
  out.reserve(accepted.size());
  for (const auto& [i, j] : accepted) {
    out.push_back({est.samples[i].pose, gt.samples[j].pose, est.samples[i].timestamp,
                   gt.samples[j].timestamp});
  }
  return out;
}

Pose UmeyamaAlign(const std::vector<PosePair>& pairs) {
  if (pairs.size() < 3) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "alignment needs at least three pairs");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = pairs[i].estimate.translation();
    dst.col(i) = pairs[i].ground_truth.translation();
  }
  const Eigen::Matrix3Xd centered = src.colwise() - src.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] < 1e-9 * sv[0]) {
    throw Error(ErrorCode::kDegenerateConfiguration,
                "estimate positions are collinear or coincident");
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
  // Polish the rotation so Pose's orthonormality check sees exact output.
  Eigen::Quaterniond q(Mat3(t.topLeftCorner<3, 3>()));
  return Pose(q.normalized().toRotationMatrix(), t.topRightCorner<3, 1>());
}

namespace {

ErrorStats Summarize(std::vector<double> errors) {
  ErrorStats s;
  double sq = 0.0, sum = 0.0;
  for (double e : errors) {
    sq += e * e;
    sum += e;
    s.max = std::max(s.max, e);
  }
  if (!errors.empty()) {
    s.rmse = std::sqrt(sq / errors.size());
    s.mean = sum / errors.size();
  }
  s.errors = std::move(errors);
  return s;
}

}  // namespace

ErrorStats AbsoluteTrajectoryError(const std::vector<PosePair>& pairs) {
  const Pose g = UmeyamaAlign(pairs);
  std::vector<double> errors;
  errors.reserve(pairs.size());
  for (const PosePair& p : pairs) {
    errors.push_back((p.ground_truth.translation() - g * p.estimate.translation()).norm());
  }
  return Summarize(std::move(errors));
}

ErrorStats AbsoluteTrajectoryError(const Trajectory& est, const Trajectory& gt,
                                   double max_dt) {
  return AbsoluteTrajectoryError(Associate(est, gt, max_dt));
}

ErrorStats RelativePoseError(const std::vector<PosePair>& pairs, int delta) {
  if (delta < 1) throw Error(ErrorCode::kInvalidArgument, "delta must be >= 1");
  if (pairs.size() < static_cast<size_t>(delta) + 1) {
    throw Error(ErrorCode::kInsufficientData,
                "need at least delta + 1 paired samples for RPE");
  }
  std::vector<double> errors;
  for (size_t i = 0; i + delta < pairs.size(); ++i) {
    const Pose gt_rel = pairs[i].ground_truth.inverse() * pairs[i + delta].ground_truth;
    const Pose est_rel = pairs[i].estimate.inverse() * pairs[i + delta].estimate;
    errors.push_back((gt_rel.inverse() * est_rel).translation().norm());
  }
  return Summarize(std::move(errors));
}

ErrorStats RelativePoseError(const Trajectory& est, const Trajectory& gt, int delta,
                             double max_dt) {
  return RelativePoseError(Associate(est, gt, max_dt), delta);
}

void WriteMetricsCsv(std::ostream& out, const ErrorStats& ate, const ErrorStats& rpe) {
  out << "metric,value,unit,samples\n" << std::setprecision(9);
  out << "ate_rmse," << ate.rmse << ",m," << ate.errors.size() << '\n';
  out << "ate_mean," << ate.mean << ",m," << ate.errors.size() << '\n';
  out << "ate_max," << ate.max << ",m," << ate.errors.size() << '\n';
  out << "rpe_rmse," << rpe.rmse << ",m," << rpe.errors.size() << '\n';
  out << "rpe_mean," << rpe.mean << ",m," << rpe.errors.size() << '\n';
}

}  // namespace hiloc
