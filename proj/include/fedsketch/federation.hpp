#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedsketch/data.hpp"
#include "fedsketch/hashing.hpp"
#include "fedsketch/metrics.hpp"
#include "fedsketch/model.hpp"
#include "fedsketch/rng.hpp"

namespace fedsketch::fed {

enum class Algorithm { fedavg, fedmlh };
enum class Weighting { uniform, sample_proportional };
enum class DownloadScope { selected, all };

struct FedConfig {
  Algorithm algorithm = Algorithm::fedavg;
  std::uint32_t K = 10;  // clients
  std::uint32_t S = 4;   // clients selected per round
  std::uint32_t T = 70;  // max synchronization rounds
  std::uint32_t E = 5;   // local epochs per round
  double lr = 0.05;
  std::uint32_t batch_size = 64;
  Weighting weighting = Weighting::sample_proportional;  // fedmlh default: uniform
  DownloadScope download_scope = DownloadScope::selected; // fedmlh default: all
  std::uint32_t early_stop_patience = 10;  // evaluated rounds without improvement; 0 disables
  bool eval_each_round = true;
  std::optional<hashing::LabelHashScheme> scheme;  // required for fedmlh
  hashing::MergeMode merge_mode = hashing::MergeMode::mean;
  bool merge_logits = false;  // merge raw logits instead of log-likelihoods
  std::uint32_t h1 = 128, h2 = 128;
  model::Precision precision = model::Precision::f32;
  std::uint32_t threads = 1;
  std::uint64_t seed = 1;
};

// Test split and its frequent classes, for per-round evaluation. The engine
// runs blind (no metrics, best_round = last round) when absent.
struct EvalContext {
  const data::SparseDataset* test = nullptr;
  std::vector<std::uint32_t> frequent_set;  // sorted ascending
};

struct LedgerEntry {
  std::uint32_t round = 0;
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
};

struct CommLedger {
  std::vector<LedgerEntry> entries;
  std::uint64_t total_upload = 0;
  std::uint64_t total_download = 0;
};

struct RoundRecord {
  std::uint32_t round = 0;  // 1-based
  std::vector<std::uint32_t> selected;
  bool evaluated = false;
  metrics::EvalResult eval;
  double seconds = 0.0;
};

struct TrainedGlobal {
  // FedAvg keeps one entry; FedMLH one per hash table. Stored widened to
  // double (exact) so downstream scoring is precision-independent.
  std::vector<model::MlpParamsD> submodels;
  std::uint32_t best_round = 0;  // 0 when nothing was evaluated
  std::vector<RoundRecord> history;
  CommLedger ledger;
  std::uint64_t payload_bytes_per_client = 0;  // per round, all sub-models
  std::uint64_t param_count = 0;               // scalars across sub-models
};

// S distinct ids from [0, K), uniform without replacement, sorted ascending.
std::vector<std::uint32_t> select_clients(std::uint32_t K, std::uint32_t S,
                                          RngStream& rng);

// E epochs of minibatch SGD over the shard. `targets` maps every dataset
// sample index to its positive output indices; the stream carries shuffle
// state across epochs so E=2 equals two chained E=1 calls.
template <typename T>
void local_train(const data::SparseDataset& ds,
                 const std::vector<std::uint32_t>& shard,
                 const std::vector<std::vector<std::uint32_t>>& targets,
                 model::MlpParams<T>& params, std::uint32_t epochs, double lr,
                 std::uint32_t batch_size, RngStream& shuffle_rng);

// One synchronization round: broadcast to the selected clients, E local
// epochs each, upload, aggregate, evaluate, early-stop on patience.
TrainedGlobal run_fedavg(const data::SparseDataset& ds,
                         const data::PartitionPlan& plan, const FedConfig& cfg,
                         const EvalContext* eval = nullptr);

// Same loop with R independent sub-models trained against bucket labels and
// aggregated separately; inference merges per-bucket scores back to classes.
TrainedGlobal run_fedmlh(const data::SparseDataset& ds,
                         const data::PartitionPlan& plan, const FedConfig& cfg,
                         const EvalContext* eval = nullptr);

// Sums ledger entries with round <= upto_round (0 gives zeros). Reported
// communication figures elsewhere use the upload component.
struct LedgerTotals {
  std::uint64_t upload = 0;
  std::uint64_t download = 0;
  std::uint64_t combined = 0;
};
LedgerTotals ledger_totals(const CommLedger& ledger, std::uint32_t upto_round);

// Class scores for every sample: FedAvg returns raw logits; FedMLH merges
// per-bucket log-likelihoods (or raw logits under cfg.merge_logits) across
// tables. Rows follow the dataset order.
Eigen::MatrixXd score_dataset(const TrainedGlobal& trained, const FedConfig& cfg,
                              const data::SparseDataset& ds);

// Round history CSV (fixed column set). `timing` false zeroes the seconds
// column so reruns compare byte-identical.
std::string history_to_csv(const TrainedGlobal& trained, Algorithm algorithm,
                           bool timing);

}  // namespace fedsketch::fed
