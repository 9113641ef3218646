#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hiloc {

struct JacobianCheckEntry {
  std::string name;
  int trials = 0;
  double max_relative_error = 0.0;
};

struct JacobianCheckReport {
  std::vector<JacobianCheckEntry> entries;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Compares the analytic reprojection Jacobians (pose, point, t_map and
/// keyframe pose of the prior residual) with central differences over
/// random non-degenerate configurations. inject_fault flips the sign of
/// one t_map column so the gate can be seen to fail.
JacobianCheckReport CheckJacobians(std::uint64_t seed, int trials,
                                   double tolerance = 1e-5, bool inject_fault = false);

}  // namespace hiloc
