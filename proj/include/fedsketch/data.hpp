#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fedsketch::data {

// Sparse feature vector: strictly increasing indices, no stored zeros.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<float> values;

  std::size_t nnz() const { return indices.size(); }
};

struct Sample {
  SparseVector features;
  std::vector<std::uint32_t> positives;  // sorted unique class indices
};

struct SparseDataset {
  std::uint32_t d = 0;  // feature dimension
  std::uint32_t p = 0;  // class count
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

// Client shards. Samples whose positives include several frequent classes can
// land on several clients, so assignments may overlap; each client list is
// duplicate-free and sorted.
struct PartitionPlan {
  std::uint32_t K = 0;
  std::uint32_t F = 0;     // frequent-class count used to build the plan
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> frequent_set;  // top-F classes; empty on plans
                                            // loaded from disk (file carries
                                            // only the count)
  std::vector<std::vector<std::uint32_t>> assignments;  // per client
};

struct SyntheticSpec {
  std::uint32_t N = 0;
  std::uint32_t d = 0;
  std::uint32_t p = 0;
  double zipf_exponent = 1.0;        // class frequency ~ rank^(-zipf_exponent)
  std::uint32_t features_per_class = 4;
  double noise_rate = 0.0;           // expected noise features per prototype feature
  std::uint32_t labels_per_sample = 1;
  std::uint64_t seed = 1;
};

// Text format: header "N d p", then one line per sample:
//   l1,l2,...<space>f1:v1 f2:v2 ...
// The label field may be empty (line starts with a space).
SparseDataset dataset_from_text(const std::string& text);
std::string dataset_to_text(const SparseDataset& ds);
SparseDataset load_xc_dataset(const std::string& path);
void save_xc_dataset(const SparseDataset& ds, const std::string& path);

// Hashing-trick dimensionality reduction: index i goes to h(i) with sign
// s(i); colliding contributions sum and exact zeros are dropped. Labels are
// untouched.
SparseDataset feature_hash(const SparseDataset& ds, std::uint32_t d_tilde,
                           std::uint64_t seed);

// Per-class positive counts n_j and their sum N_lab.
std::pair<std::vector<std::uint64_t>, std::uint64_t> class_frequencies(
    const SparseDataset& ds);

// Top-F classes by positive count, ties to the lower index. Sorted ascending.
std::vector<std::uint32_t> top_frequent_classes(const SparseDataset& ds,
                                                std::uint32_t F);

// Smallest F such that the top-F classes cover at least 30% of N_lab; the
// default when a config leaves F unset.
std::uint32_t default_frequent_count(const SparseDataset& ds);

// Frequent-class partition: each frequent class is assigned to one uniformly
// chosen client and drags every sample positive in it onto that client;
// samples with no frequent positive go to a uniform client.
PartitionPlan partition_noniid(const SparseDataset& ds, std::uint32_t K,
                               std::uint32_t F, std::uint64_t seed);

// Power-law multi-label generator: class frequencies follow a zipf law over
// class index, each class owns a fixed random prototype feature set, and a
// sample's features are the union of its classes' prototypes plus noise.
SparseDataset generate_synthetic(const SyntheticSpec& spec);

// Deterministic holdout split; fraction of samples moves to the second
// (test) dataset. Order within each part follows the original dataset.
std::pair<SparseDataset, SparseDataset> split_holdout(const SparseDataset& ds,
                                                      double fraction,
                                                      std::uint64_t seed);

// Plan text format: header "K F seed", then one line of space-separated
// sample indices per client (possibly empty).
std::string plan_to_text(const PartitionPlan& plan);
PartitionPlan plan_from_text(const std::string& text);
void save_plan(const PartitionPlan& plan, const std::string& path);
PartitionPlan load_plan(const std::string& path);

// Checks indices < N, per-client duplicates, and full coverage; throws
// data_error on violation. Used when accepting externally supplied plans.
void validate_plan(const PartitionPlan& plan, std::size_t N);

}  // namespace fedsketch::data
