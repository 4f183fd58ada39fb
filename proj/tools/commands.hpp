#pragma once

#include "config.hpp"
#include "io.hpp"

#include "gsgw/amortized.hpp"
#include "gsgw/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gsgw::cli {

struct RunOptions {
  std::filesystem::path out_dir = "out";
  /// Replaces run.seeds with a single seed.
  std::optional<std::uint64_t> seed;
  /// amortized: train, eval or constraints.
  std::string subcommand;
  bool verbose = false;
};

/// Runs one command for every configured seed. Each record is appended to
/// <out>/results.jsonl and its artifacts land in <out>/<run_id>/.
std::vector<ResultRecord> run_command(const RunConfig& cfg, const RunOptions& opts);

/// Preset named by solver.preset with any solver.* overrides applied.
SolverConfig solver_config(const RunConfig& cfg, std::uint64_t seed);

MatcherParams matcher_from_checkpoint(const Checkpoint& ckpt);
Checkpoint matcher_checkpoint(const MatcherParams& params);

/// Largest deviations of the hard amortized plan from the identity,
/// transpose, rigid-invariance and permutation-equivariance identities.
struct ConstraintReport {
  double identity = 0.0;
  double transpose = 0.0;
  double rigid = 0.0;
  double permutation = 0.0;

  double worst() const;
};
ConstraintReport check_constraints(const MatcherParams& params, const std::vector<LabeledCloud>& shapes,
                                   std::uint64_t seed);

}  // namespace gsgw::cli
