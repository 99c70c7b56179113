#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsketch/data.hpp"

namespace fedsketch::analysis {

// One statistical or exact check: statistic vs bound with a Monte-Carlo
// standard error. margin = statistic - bound. The pass rule is baked in by
// the producing oracle (documented per function).
struct VerificationReport {
  std::string statement;
  std::uint64_t trials = 0;
  double statistic = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  double stderr_val = 0.0;
  bool pass = false;
};

// CSV columns: statement,trials,statistic,bound,margin,stderr,pass — values
// round-trip exactly (shortest-representation floats).
std::string reports_to_csv(const std::vector<VerificationReport>& reports);
std::vector<VerificationReport> reports_from_csv(const std::string& text);
// Key-value text, one block per report, blank-line separated.
std::string reports_to_kv(const std::vector<VerificationReport>& reports);

// Expected positive count of the bucket containing class j, under labels
// drawn independently per class with rates counts[l]/N. Monte Carlo over
// random single tables, conditioned on h(j) = 0 by rejection; counts samples
// whose union bucket label is positive (not label events). Pass rule:
// statistic >= bound - 3 stderr, where bound = n_j + (N_lab-n_j)/B - N_lab/B^2.
VerificationReport verify_bucket_gain(std::uint64_t N,
                                 const std::vector<std::uint64_t>& counts,
                                 std::uint32_t B, std::uint32_t class_j,
                                 std::uint64_t trials, std::uint64_t seed);

// Same statistic on a real dataset's label sets (no independence available):
// the bound is reported for orientation, the pass rule is identical but the
// result is descriptive.
VerificationReport verify_bucket_gain_dataset(const data::SparseDataset& ds,
                                         std::uint32_t B, std::uint32_t class_j,
                                         std::uint64_t trials, std::uint64_t seed);

// Fraction of random R-table schemes with some class pair colliding in every
// table. Pass rule: statistic <= delta + 3 stderr. R <= 8.
VerificationReport verify_collision_rate(std::uint32_t p, std::uint64_t B,
                                 std::uint32_t R, double delta,
                                 std::uint64_t trials, std::uint64_t seed);

// Bucket-level KL never exceeds class-level KL: exact inequality with 1e-12
// tolerance over `schemes` random single tables into B buckets. Pass rule:
// zero violations; statistic is the mean bucket KL, bound the class KL.
// Buckets that receive no class are dropped before the KL call.
VerificationReport verify_kl_contraction(const Eigen::Ref<const Eigen::VectorXd>& pi_a,
                                   const Eigen::Ref<const Eigen::VectorXd>& pi_b,
                                   std::uint32_t B, std::uint64_t schemes,
                                   std::uint64_t seed);

// Sample-mean MSE on a zero-mean Gaussian cluster across sample sizes; fits
// the log-log slope. Pass rule: |slope + 1| <= 0.1. Per-size MSEs are
// appended to *mse_out when given. All-zero MSEs (zero variance) yield
// slope 0 and pass=false rather than a log-domain error.
VerificationReport mse_scaling_demo(const std::vector<std::uint64_t>& sizes,
                                    const std::vector<double>& sigmas,
                                    std::uint64_t trials, std::uint64_t seed,
                                    std::vector<double>* mse_out = nullptr);

}  // namespace fedsketch::analysis
