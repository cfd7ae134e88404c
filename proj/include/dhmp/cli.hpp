#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dhmp/model.hpp"
#include "dhmp/oracle.hpp"

namespace dhmp::cli {

/// Stable exit codes for scripting.
enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kUserError = 2,
  kIoError = 3,
  kNumericError = 4,
};

/// Entry point of the `dhmp` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string version_string();

struct ExportSummary {
  std::vector<std::string> files;
  /// Per time step and level: fraction of the top-10% error nodes that are
  /// still present at that level.
  std::vector<std::vector<double>> challenging_retention;
};

/// Writes plot-ready CSVs for `traj` at the given steps plus a README.
ExportSummary export_trajectory(const model::Model& model,
                                const oracle::NormStats& norm,
                                const oracle::Trajectory& traj,
                                const std::vector<int>& steps,
                                bool deterministic_select,
                                std::uint64_t eval_seed,
                                const std::filesystem::path& out_dir);

}  // namespace dhmp::cli
