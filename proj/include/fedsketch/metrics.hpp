#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fedsketch/hashing.hpp"

namespace fedsketch::metrics {

// Precision@k for k in {1, 3, 5}, plus the frequent/infrequent split of each.
// freq[k] + infreq[k] reproduces top[k] up to one rounding.
struct EvalResult {
  double top1 = 0.0, top3 = 0.0, top5 = 0.0;
  double freq_top1 = 0.0, freq_top3 = 0.0, freq_top5 = 0.0;
  double infreq_top1 = 0.0, infreq_top3 = 0.0, infreq_top5 = 0.0;
  std::uint64_t n_eval = 0;

  double mean_topk() const { return (top1 + top3 + top5) / 3.0; }
};

// Streaming top-k counter so evaluation never materializes an N x p score
// matrix. Ties in scores go to the lower class index.
class EvalAccumulator {
 public:
  // frequent_set must be sorted ascending; ks fixed to {1,3,5}.
  explicit EvalAccumulator(std::vector<std::uint32_t> frequent_set);

  void add(const Eigen::Ref<const Eigen::RowVectorXd>& scores,
           const std::vector<std::uint32_t>& positives);
  EvalResult result() const;

 private:
  std::vector<std::uint32_t> frequent_;
  std::uint64_t hits_[3] = {0, 0, 0};       // k = 1, 3, 5
  std::uint64_t freq_hits_[3] = {0, 0, 0};
  std::uint64_t n_ = 0;
  std::vector<std::uint32_t> topk_;  // scratch
};

// Top-k precision: sum_i |P_k(x_i) ∩ positives_i| / (N * k). Scores has one
// row per sample; k must not exceed the class count.
double topk_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                     const std::vector<std::vector<std::uint32_t>>& labels,
                     std::uint32_t k);

// Same hits split by membership in frequent_set; parts sum to topk_accuracy.
std::pair<double, double> freq_split_accuracy(
    const Eigen::Ref<const Eigen::MatrixXd>& scores,
    const std::vector<std::vector<std::uint32_t>>& labels, std::uint32_t k,
    const std::vector<std::uint32_t>& frequent_set);

// KL(a || b) with natural log. Both arguments must be strictly positive
// distributions summing to 1 within 1e-12; zeros are a domain error (smooth
// empirical counts first, see smoothed_distribution).
double kl_divergence(const Eigen::Ref<const Eigen::VectorXd>& a,
                     const Eigen::Ref<const Eigen::VectorXd>& b);

// Push class proportions through table j: omega_i = sum over {l : h_j(l)=i}.
Eigen::VectorXd bucket_proportions(const Eigen::Ref<const Eigen::VectorXd>& pi,
                                   const hashing::LabelHashScheme& scheme,
                                   std::uint32_t table_index);

// (count_i + eps) / (total + p*eps); eps defaults to 1/(10*total) when <= 0,
// keeping zero-count classes representable inside KL's positivity domain.
Eigen::VectorXd smoothed_distribution(const std::vector<std::uint64_t>& counts,
                                      double eps = 0.0);

}  // namespace fedsketch::metrics
