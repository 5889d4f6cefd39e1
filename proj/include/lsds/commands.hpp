#pragma once

// Subcommand implementations behind the `lsds` executable. Each returns a
// process exit code: 0 ok, 1 runtime failure, 2 usage or configuration error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lsds/config.hpp"

namespace lsds {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Loads config.dataset, or generates synthetic data when it is empty.
std::vector<SequenceSample> load_or_generate(const RunConfig& config);

int cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out);
int cmd_train(const RunConfig& config, const std::filesystem::path& run_dir, bool resume, std::ostream& out);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::string split = "test";  // train | val | test | all
  std::size_t seeds = 1;       // evaluation seeds seed, seed+1, ...
  std::filesystem::path output;
};
// Writes {"split", "seeds", "mean": {...}, "std": {...}, "runs": [...]}.
int cmd_eval(const RunConfig& config, const EvalOptions& options, std::ostream& out);

struct PredictOptions {
  std::filesystem::path checkpoint;
  std::size_t horizon = 0;  // weeks; 0 means the full window
  std::string split = "test";
  std::size_t seeds = 1;
  std::filesystem::path output;  // sweep CSV
};
int cmd_predict(const RunConfig& config, const PredictOptions& options, std::ostream& out);

// Writes week_counts.csv and fuzzy_entropy.csv into out_dir.
int cmd_diagnose(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream& out);

struct GradcheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return error < tolerance; }
};

// Finite-difference checks of every primitive, encoder block, ODE function,
// backprop through the solver and the assembled model.
std::vector<GradcheckResult> gradcheck_suite(std::uint64_t seed);
int cmd_gradcheck(std::uint64_t seed, std::ostream& out);

}  // namespace lsds
