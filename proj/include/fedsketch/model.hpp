#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsketch/data.hpp"

namespace fedsketch::model {

enum class Precision { f32, f64 };

inline std::uint32_t bytes_per_scalar(Precision p) {
  return p == Precision::f32 ? 4 : 8;
}

struct MLPConfig {
  std::uint32_t input_dim = 0;   // d-tilde
  std::uint32_t h1 = 128;
  std::uint32_t h2 = 128;
  std::uint32_t output_dim = 0;  // B for a sub-model, p for a full model
  Precision precision = Precision::f32;
  std::uint64_t seed = 1;
};

// Two-hidden-layer multi-label MLP:
//   logits = W3' relu(W2' relu(W1' x + b1) + b2) + b3
// W1 is row-major so that sparse inputs touch contiguous rows.
template <typename T>
struct MlpParams {
  using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  RowMatrix W1;  // input_dim x h1
  Vector b1;     // h1
  Matrix W2;     // h1 x h2
  Vector b2;     // h2
  Matrix W3;     // h2 x output_dim
  Vector b3;     // output_dim

  std::uint64_t param_count() const {
    return static_cast<std::uint64_t>(W1.size()) + b1.size() + W2.size() +
           b2.size() + W3.size() + b3.size();
  }
};

// Gradients share the parameter layout exactly.
template <typename T>
using Gradients = MlpParams<T>;

using MlpParamsF = MlpParams<float>;
using MlpParamsD = MlpParams<double>;

// Glorot-uniform weights (scale sqrt(6/(fan_in+fan_out))), zero biases.
// Entry draw order is row-major per layer, streams keyed on (seed, layer).
template <typename T>
MlpParams<T> init_mlp(const MLPConfig& config);

// Single-sample logits; only the W1 rows named by x are read.
template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, 1> forward(const MlpParams<T>& params,
                                            const data::SparseVector& x);

// Batched logits, one row per input sample.
template <typename T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> forward_batch(
    const MlpParams<T>& params, const std::vector<const data::SparseVector*>& xs);

// Mean over batch and outputs of binary cross-entropy on sigmoid logits,
// with exact gradients. Targets given as a dense batch x output matrix whose
// entries must be exactly 0 or 1.
template <typename T>
double loss_and_grad(const MlpParams<T>& params,
                     const std::vector<const data::SparseVector*>& xs,
                     const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic,
                                         Eigen::RowMajor>& targets,
                     Gradients<T>& grads);

// Convenience wrapper: targets as per-sample positive output indices.
template <typename T>
double loss_and_grad_sparse(const MlpParams<T>& params,
                            const std::vector<const data::SparseVector*>& xs,
                            const std::vector<const std::vector<std::uint32_t>*>& positives,
                            std::uint32_t output_dim, Gradients<T>& grads);

// In-place params -= lr * grads.
template <typename T>
void sgd_step(MlpParams<T>& params, const Gradients<T>& grads, T lr);

// Elementwise weighted mean; weights are normalized internally and must not
// all be zero. Accumulation in double regardless of T.
template <typename T>
MlpParams<T> average_params(const std::vector<const MlpParams<T>*>& models,
                            const std::vector<double>& weights);

// Parameter payload in bytes: scalar count x scalar width.
std::uint64_t param_count(const MLPConfig& config);
std::uint64_t byte_size(const MLPConfig& config);
template <typename T>
std::uint64_t byte_size(const MlpParams<T>& params);

// Exact float->double widening (identity on double).
MlpParamsD to_double(const MlpParamsF& params);
MlpParamsD to_double(const MlpParamsD& params);

// Binary blob: ASCII shape header line "fsmlp d h1 h2 out bits\n", then the
// little-endian raw scalars in layer order (W1 b1 W2 b2 W3 b3, row-major).
// The payload after the header is exactly byte_size(params) bytes.
template <typename T>
std::string params_to_blob(const MlpParams<T>& params);
template <typename T>
MlpParams<T> params_from_blob(const std::string& blob);

}  // namespace fedsketch::model
