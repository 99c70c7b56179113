#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsketch/analysis.hpp"
#include "fedsketch/config.hpp"
#include "fedsketch/data.hpp"
#include "fedsketch/federation.hpp"
#include "fedsketch/hashing.hpp"

namespace fedsketch::cli {

// Process exit codes. Config problems (bad keys, inconsistent fields,
// missing referenced files) and data problems (malformed file contents) get
// distinct codes so scripts can tell them apart; verification suites use a
// third code when a checked statement fails.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitAssert = 4;

// Everything an experiment run needs, assembled from a resolved config:
// loaded or generated data, the evaluation split, the client partition and
// the label hash scheme. prepare_run fills data-dependent defaults (the
// frequent-class count) back into cfg so the echoed config is complete.
struct PreparedRun {
  data::SparseDataset train;
  data::SparseDataset test;  // empty when the run has no evaluation split
  data::PartitionPlan plan;
  std::optional<hashing::LabelHashScheme> scheme;
  std::vector<std::uint32_t> frequent_set;  // sorted ascending
  fed::FedConfig fed;
};

PreparedRun prepare_run(config::ExperimentConfig& cfg);

// Dispatches to the configured algorithm.
fed::TrainedGlobal execute_run(const PreparedRun& run);

// Key-value run summary: best round, metrics at the best round, byte
// accounting (raw plus human-readable), model size and parameter count.
std::string summary_text(const config::ExperimentConfig& cfg,
                         const PreparedRun& run,
                         const fed::TrainedGlobal& result);

// history.csv, summary.txt, config_resolved.cfg, plan.txt and (for fedmlh)
// scheme.txt under cfg.out_dir, each written atomically.
void write_run_artifacts(const config::ExperimentConfig& cfg,
                         const PreparedRun& run,
                         const fed::TrainedGlobal& result);

// Verification suites at their documented defaults (trials = 0 keeps the
// default count). Every report's pass rule is a hard assertion; the driver
// exits nonzero when any report fails.
//
// bucket-gain: independent synthetic labels, p=100, B=10, N=2000, 20
// positives per class, one report per class; plus the bucket amplification
// case p=1024, B=32, 50 positives per class, where the expected positive
// count of a bucket must land within 10% of 32x the single-class count.
std::vector<analysis::VerificationReport> suite_bucket_gain(std::uint64_t trials,
                                                       std::uint64_t seed);
// collision: p=200, delta=0.05, R in {1,2,4}, B = min_table_size(p, delta, R).
std::vector<analysis::VerificationReport> suite_collision(std::uint64_t trials,
                                                       std::uint64_t seed);
// contraction: p=500, B in {10,50,250}, random Dirichlet class-distribution
// pairs, single-table schemes per pair; plus monotonicity of the mean KL
// reduction as B shrinks. statistic = mean reduction, pass = no violation.
std::vector<analysis::VerificationReport> suite_contraction(std::uint64_t pairs,
                                                         std::uint64_t schemes,
                                                         std::uint64_t seed);
// mse: sample sizes 10,20,...,10240, unit Gaussian, slope must be -1 +- 0.1.
// Per-size MSE values are appended to *mse_out when given.
std::vector<analysis::VerificationReport> suite_mse(
    std::uint64_t trials, std::uint64_t seed,
    std::vector<double>* mse_out = nullptr);

// Comparison table across completed run directories; the first directory is
// the baseline for the communication-cost and rounds ratios.
std::string report_csv(const std::vector<std::string>& run_dirs);

// Full command-line driver: run | verify | synth | partition | report.
// Returns an exit code, never throws.
int run_cli(int argc, const char* const* argv);

}  // namespace fedsketch::cli
