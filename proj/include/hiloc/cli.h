#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hiloc/config.h"
#include "hiloc/dataset.h"
#include "hiloc/pipeline.h"

namespace hiloc {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitData = 4,
};

/// Runs one command. args excludes the program name. Output goes to out,
/// diagnostics to err.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Pipeline settings for a dataset, with run-config overrides
/// (min_track_inliers, track_window_radius, align_every, window_size, ...).
PipelineConfig MakePipelineConfig(const Config& run, const Dataset& dataset);

}  // namespace hiloc
