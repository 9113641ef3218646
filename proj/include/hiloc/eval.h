#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hiloc/geometry.h"

namespace hiloc {

struct TrajectorySample {
  double timestamp = 0.0;
  Pose pose;  // camera-to-world
};

struct Trajectory {
  std::vector<TrajectorySample> samples;

  /// Throws kInvalidArgument unless timestamps strictly increase.
  void Validate() const;
  size_t size() const { return samples.size(); }
};

/// TUM format: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.
Trajectory ReadTum(std::istream& in);
Trajectory LoadTum(const std::string& path);
/// Written with 9 significant digits.
void WriteTum(std::ostream& out, const Trajectory& trajectory);
void SaveTum(const std::string& path, const Trajectory& trajectory);

struct PosePair {
  Pose estimate;
  Pose ground_truth;
  double est_time = 0.0;
  double gt_time = 0.0;
};

/// Nearest-timestamp pairing with |dt| <= max_dt. Candidate pairs are
/// accepted greedily by increasing |dt| (then estimate index), each sample
/// used at most once. Result is ordered by estimate time. Throws
/// kNoOverlap when nothing pairs.
std::vector<PosePair> Associate(const Trajectory& est, const Trajectory& gt,
                                double max_dt = 0.02);

/// Rigid transform G minimising sum |gt_i - G est_i|^2 over positions (no
/// scale). Throws kDegenerateConfiguration for fewer than three pairs or
/// collinear estimate positions.
Pose UmeyamaAlign(const std::vector<PosePair>& pairs);

struct ErrorStats {
  double rmse = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::vector<double> errors;
};

ErrorStats AbsoluteTrajectoryError(const std::vector<PosePair>& pairs);
ErrorStats AbsoluteTrajectoryError(const Trajectory& est, const Trajectory& gt,
                                   double max_dt = 0.02);

/// Translational RMSE of (gt_i^-1 gt_{i+d})^-1 (est_i^-1 est_{i+d}) over
/// consecutive paired samples. Throws kInsufficientData for fewer than
/// delta + 1 pairs.
ErrorStats RelativePoseError(const std::vector<PosePair>& pairs, int delta = 1);
ErrorStats RelativePoseError(const Trajectory& est, const Trajectory& gt,
                             int delta = 1, double max_dt = 0.02);

/// "metric,value,unit,samples" CSV.
void WriteMetricsCsv(std::ostream& out, const ErrorStats& ate, const ErrorStats& rpe);

}  // namespace hiloc
