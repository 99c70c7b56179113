#include "fedsketch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsketch::metrics {

namespace {

constexpr std::uint32_t kKs[3] = {1, 3, 5};

// Indices of the k best scores, ties to the lower index. k is clamped by the
// caller; result is sorted by rank.
void top_indices(const Eigen::Ref<const Eigen::RowVectorXd>& scores,
                 std::uint32_t k, std::vector<std::uint32_t>& out) {
  const auto p = static_cast<std::uint32_t>(scores.size());
  out.resize(p);
  for (std::uint32_t i = 0; i < p; ++i) out[i] = i;
  std::partial_sort(out.begin(), out.begin() + k, out.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  out.resize(k);
}

}  // namespace

EvalAccumulator::EvalAccumulator(std::vector<std::uint32_t> frequent_set)
    : frequent_(std::move(frequent_set)) {
  if (!std::is_sorted(frequent_.begin(), frequent_.end()))
    throw std::invalid_argument("EvalAccumulator: frequent_set must be sorted");
}

void EvalAccumulator::add(const Eigen::Ref<const Eigen::RowVectorXd>& scores,
                          const std::vector<std::uint32_t>& positives) {
  const auto p = static_cast<std::uint32_t>(scores.size());
  const std::uint32_t kmax = std::min<std::uint32_t>(5, p);
  top_indices(scores, kmax, topk_);
  for (int ki = 0; ki < 3; ++ki) {
    const std::uint32_t k = std::min(kKs[ki], kmax);
    for (std::uint32_t r = 0; r < k; ++r) {
      const std::uint32_t cls = topk_[r];
      if (std::binary_search(positives.begin(), positives.end(), cls)) {
        ++hits_[ki];
        if (std::binary_search(frequent_.begin(), frequent_.end(), cls))
          ++freq_hits_[ki];
      }
    }
  }
  ++n_;
}

EvalResult EvalAccumulator::result() const {
  EvalResult r;
  r.n_eval = n_;
  if (n_ == 0) return r;
  double tot[3], freq[3], infreq[3];
  for (int ki = 0; ki < 3; ++ki) {
    const double denom = static_cast<double>(n_) * kKs[ki];
    tot[ki] = static_cast<double>(hits_[ki]) / denom;
    freq[ki] = static_cast<double>(freq_hits_[ki]) / denom;
    infreq[ki] = static_cast<double>(hits_[ki] - freq_hits_[ki]) / denom;
  }
  r.top1 = tot[0];
  r.top3 = tot[1];
  r.top5 = tot[2];
  r.freq_top1 = freq[0];
  r.freq_top3 = freq[1];
  r.freq_top5 = freq[2];
  r.infreq_top1 = infreq[0];
  r.infreq_top3 = infreq[1];
  r.infreq_top5 = infreq[2];
  return r;
}

namespace {

// Shared scan used by both public precision ops so the tie-break rule cannot
// diverge between them.
void count_hits(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                const std::vector<std::vector<std::uint32_t>>& labels,
                std::uint32_t k, const std::vector<std::uint32_t>& frequent_set,
                std::uint64_t& hits, std::uint64_t& freq_hits) {
  if (k == 0) throw std::invalid_argument("topk_accuracy: k must be positive");
  if (k > static_cast<std::uint32_t>(scores.cols()))
    throw std::invalid_argument("topk_accuracy: k exceeds class count");
  if (labels.size() != static_cast<std::size_t>(scores.rows()))
    throw std::invalid_argument("topk_accuracy: scores/labels row mismatch");
  if (!scores.allFinite())
    throw std::invalid_argument("topk_accuracy: scores must be finite");

  hits = 0;
  freq_hits = 0;
  std::vector<std::uint32_t> topk;
  for (Eigen::Index s = 0; s < scores.rows(); ++s) {
    const auto& pos = labels[s];
    if (!std::is_sorted(pos.begin(), pos.end()))
      throw std::invalid_argument("topk_accuracy: positives must be sorted");
    top_indices(scores.row(s), k, topk);
    for (std::uint32_t cls : topk)
      if (std::binary_search(pos.begin(), pos.end(), cls)) {
        ++hits;
        if (std::binary_search(frequent_set.begin(), frequent_set.end(), cls))
          ++freq_hits;
      }
  }
}

}  // namespace

double topk_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                     const std::vector<std::vector<std::uint32_t>>& labels,
                     std::uint32_t k) {
  std::uint64_t hits = 0, freq_hits = 0;
  count_hits(scores, labels, k, {}, hits, freq_hits);
  if (scores.rows() == 0) return 0.0;
  return static_cast<double>(hits) /
         (static_cast<double>(scores.rows()) * static_cast<double>(k));
}

std::pair<double, double> freq_split_accuracy(
    const Eigen::Ref<const Eigen::MatrixXd>& scores,
    const std::vector<std::vector<std::uint32_t>>& labels, std::uint32_t k,
    const std::vector<std::uint32_t>& frequent_set) {
  if (!std::is_sorted(frequent_set.begin(), frequent_set.end()))
    throw std::invalid_argument("freq_split_accuracy: frequent_set must be sorted");
  std::uint64_t hits = 0, freq_hits = 0;
  count_hits(scores, labels, k, frequent_set, hits, freq_hits);
  if (scores.rows() == 0) return {0.0, 0.0};
  const double denom =
      static_cast<double>(scores.rows()) * static_cast<double>(k);
  return {static_cast<double>(freq_hits) / denom,
          static_cast<double>(hits - freq_hits) / denom};
}

double kl_divergence(const Eigen::Ref<const Eigen::VectorXd>& a,
                     const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  if (a.size() == 0) throw std::invalid_argument("kl_divergence: empty input");
  if (std::abs(a.sum() - 1.0) > 1e-12 || std::abs(b.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("kl_divergence: inputs must sum to 1 (1e-12)");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0) || !(b[i] > 0.0))
      throw std::domain_error(
          "kl_divergence: zero/negative coordinate; smooth empirical counts first");
    kl += a[i] * std::log(a[i] / b[i]);
  }
  return kl;
}

Eigen::VectorXd bucket_proportions(const Eigen::Ref<const Eigen::VectorXd>& pi,
                                   const hashing::LabelHashScheme& scheme,
                                   std::uint32_t table_index) {
  if (table_index >= scheme.R)
    throw std::invalid_argument("bucket_proportions: table index out of range");
  if (pi.size() != static_cast<Eigen::Index>(scheme.p))
    throw std::invalid_argument("bucket_proportions: length != p");
  Eigen::VectorXd omega = Eigen::VectorXd::Zero(scheme.B);
  for (std::uint32_t l = 0; l < scheme.p; ++l)
    omega[static_cast<Eigen::Index>(scheme.bucket(table_index, l))] += pi[l];
  return omega;
}

Eigen::VectorXd smoothed_distribution(const std::vector<std::uint64_t>& counts,
                                      double eps) {
  if (counts.empty())
    throw std::invalid_argument("smoothed_distribution: empty counts");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (eps <= 0.0) eps = total > 0.0 ? 1.0 / (10.0 * total) : 1.0;
  Eigen::VectorXd out(static_cast<Eigen::Index>(counts.size()));
  const double denom = total + eps * static_cast<double>(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = (static_cast<double>(counts[i]) + eps) / denom;
  return out;
}

}  // namespace fedsketch::metrics
