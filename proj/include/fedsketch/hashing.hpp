#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsketch/rng.hpp"

namespace fedsketch::hashing {

// 2^61 - 1, a Mersenne prime comfortably above every domain we hash.
inline constexpr std::uint64_t kHashPrime = 2305843009213693951ULL;

// One function from the multiply-mod-prime family:
//   h(x) = ((a*x + b) mod prime) mod range
// with a in [1, prime-1], b in [0, prime-1]. The product needs 128-bit
// intermediates; range is applied last so bucket indices stay unbiased up to
// the usual floor(prime/range) remainder, negligible at range << prime.
struct HashFunctionSpec {
  std::uint64_t a = 1;
  std::uint64_t b = 0;
  std::uint64_t prime = kHashPrime;
  std::uint64_t range = 1;

  std::uint64_t eval(std::uint64_t x) const {
    const auto wide = static_cast<unsigned __int128>(a) * x + b;
    return static_cast<std::uint64_t>(wide % prime) % range;
  }

  // Range-2 spec used as a sign hash: maps to {-1, +1}.
  int sign(std::uint64_t x) const { return eval(x) == 0 ? -1 : 1; }
};

// Draw R independent functions with the given range, coefficients taken from
// the stream keyed by (seed, scheme_tables, salt...).
std::vector<HashFunctionSpec> draw_tables(std::uint64_t range, std::uint32_t count,
                                          std::uint64_t seed,
                                          std::uint64_t salt = 0);

// R independent hash tables mapping p class labels into B buckets each.
struct LabelHashScheme {
  std::uint32_t p = 0;     // number of classes (hash domain)
  std::uint32_t B = 0;     // buckets per table
  std::uint32_t R = 0;     // number of tables
  std::uint64_t seed = 0;  // seed the tables were drawn from
  std::vector<HashFunctionSpec> tables;  // size R, each with range == B

  std::uint32_t bucket(std::uint32_t table_index, std::uint32_t label) const {
    return static_cast<std::uint32_t>(tables[table_index].eval(label));
  }
};

// Validates 1 <= B <= p, R >= 1, then draws the tables deterministically from
// the seed. Throws std::invalid_argument on bad arguments.
LabelHashScheme make_scheme(std::uint32_t p, std::uint32_t B, std::uint32_t R,
                            std::uint64_t seed);

// Bucket targets for one sample: entry (j, i) is 1 iff some positive class l
// has h_j(l) = i. Colliding positives still produce a single 1 (union, never
// a sum).
Eigen::MatrixXi bucket_labels(const LabelHashScheme& scheme,
                              const std::vector<std::uint32_t>& positives);

enum class MergeMode { mean, median };

// Recover a per-class score vector from R per-bucket score vectors:
//   score(l) = combine_j table_scores[j][h_j(l)]
// where combine is the mean (default) or the median across tables. Each
// table_scores[j] must have length B.
Eigen::VectorXd merge_scores(const LabelHashScheme& scheme,
                             const std::vector<Eigen::VectorXd>& table_scores,
                             MergeMode mode = MergeMode::mean);

// Smallest B such that R tables of that size keep the probability of any of
// the p*(p-1)/2 label pairs colliding in every table below delta:
//   B = ceil((p*(p-1) / (2*delta))^(1/R))
// Computed through pow with an exactness guard so integer roots do not get
// bumped up by floating point error.
std::uint64_t min_table_size(std::uint32_t p, double delta, std::uint32_t R);

// Classic count sketch: K rows of `width` counters, one (index, sign) hash
// pair per row. Point queries return the median of the signed row estimates.
struct CountSketch {
  std::uint32_t width = 0;
  std::uint32_t depth = 0;
  std::uint64_t seed = 0;
  std::vector<HashFunctionSpec> index_hashes;  // size depth, range == width
  std::vector<HashFunctionSpec> sign_hashes;   // size depth, range == 2
  Eigen::MatrixXd table;                       // depth x width
};

CountSketch make_sketch(std::uint32_t width, std::uint32_t depth,
                        std::uint64_t seed);

// Add one signed contribution: table(j, h_j(key)) += value * s_j(key).
void sketch_insert_one(CountSketch& sketch, std::uint64_t key, double value);

// Insert a sparse vector given as parallel (index, value) arrays.
void sketch_insert(CountSketch& sketch, const std::vector<std::uint64_t>& indices,
                   const std::vector<double>& values);

// Median across rows; for even depth, the midpoint of the two middle values.
double sketch_retrieve(const CountSketch& sketch, std::uint64_t key);

// Text form: header "p B R seed", then one "a b prime range" line per table.
std::string scheme_to_text(const LabelHashScheme& scheme);
LabelHashScheme scheme_from_text(const std::string& text);

void save_scheme(const LabelHashScheme& scheme, const std::string& path);
LabelHashScheme load_scheme(const std::string& path);

}  // namespace fedsketch::hashing
