#pragma once

// Batch driver: flat key=value configuration, workflow dispatch and the run
// manifest.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netflow/error.hpp"

namespace netflow::cli {

/// Bad key, bad value or a parameter outside its documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kSolverFailure = 3,
  kVerifyFailure = 4,
};

struct RunConfig {
  std::string command;  // discrete | verify | flow | steady1d | steady-plap | steady-penalized | converge
  std::string mesh_file;  // empty: structured nx x ny unit square
  std::size_t nx = 8;
  std::size_t ny = 8;
  double r = 1.0;
  double c2 = 1.0;
  double D = 0.0;
  double gamma = 2.0;
  double dt = 1e-2;
  double t_end = 1.0;
  std::vector<double> eps{1e-1, 1e-2, 1e-3};
  std::size_t levels = 5;
  std::size_t coarse_nx = 4;
  std::uint64_t seed = 1;
  std::filesystem::path out = "netflow_out";
  std::string source = "cos";
  double amplitude = 1.0;
  std::size_t N = 1024;
  bool rescaled = true;
  std::size_t snapshot_every = 0;
  double psd_tol = 1e-10;
  double poincare = 0.05066059182116889;  // 1 / (2 pi^2), unit square
  std::string c0 = "bump";
};

/// Lines of `key=value`; '#' starts a comment.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin);
void apply_override(RunConfig& config, const std::string& assignment);
void validate(const RunConfig& config);

/// Parses `[--config FILE] [key=value ...]`. Throws ConfigError.
RunConfig parse_config(std::span<const std::string> args);

std::string usage();

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

std::string sha256_file(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& dir, const RunConfig& config,
                    std::span<const std::string> files, int exit_code, const std::string& message);

/// Runs the configured workflow, writes its artifacts into config.out and the
/// manifest (also on failure). Returns the process exit code.
int dispatch(const RunConfig& config, std::ostream& log);

/// Entry point used by the executable.
int main(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace netflow::cli
