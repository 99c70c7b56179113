#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "fedsketch/data.hpp"
#include "fedsketch/federation.hpp"
#include "fedsketch/hashing.hpp"
#include "fedsketch/model.hpp"

namespace fedsketch::config {

// Flat key=value experiment description with section prefixes (fed.K=10).
// '#' starts a comment, blank lines are skipped, keys may appear once.
// Unknown keys are errors so typos never silently fall back to defaults.
//
// Optionals are "not written in the file"; resolve_defaults() fills the ones
// that do not need the dataset (derived seeds, per-algorithm weighting and
// download scope, holdout), while the frequent-class count F stays unset
// until a dataset is available to count labels on.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  std::string out_dir;
  bool out_timing = true;

  // Exactly one data source: a dataset file or a synthetic spec.
  std::string data_path;
  std::string test_path;
  std::optional<double> holdout;  // fraction split off for evaluation
  std::uint32_t feature_hash_dim = 0;  // 0 = no feature hashing
  std::optional<std::uint64_t> feature_hash_seed;

  bool synthetic = false;
  data::SyntheticSpec synth;
  std::optional<std::uint64_t> synth_seed;

  std::string partition_path;  // pre-built plan; otherwise one is built
  std::optional<std::uint32_t> partition_F;
  std::optional<std::uint64_t> partition_seed;

  fed::Algorithm algorithm = fed::Algorithm::fedavg;
  std::uint32_t K = 10;
  std::uint32_t S = 4;
  std::uint32_t T = 70;
  std::uint32_t E = 5;
  double lr = 0.05;
  std::uint32_t batch = 64;
  std::optional<fed::Weighting> weighting;
  std::optional<fed::DownloadScope> download_scope;
  std::uint32_t patience = 10;  // 0 disables early stopping
  bool eval_each_round = true;
  model::Precision precision = model::Precision::f32;
  std::uint32_t threads = 1;
  std::uint32_t h1 = 128;
  std::uint32_t h2 = 128;

  std::string scheme_path;  // pre-built label hash scheme; else B/R/seed
  std::uint32_t scheme_B = 0;
  std::uint32_t scheme_R = 0;
  std::optional<std::uint64_t> scheme_seed;

  hashing::MergeMode merge_mode = hashing::MergeMode::mean;
  bool merge_logits = false;  // merge raw logits instead of log-likelihoods

  std::string metrics_ks = "1,3,5";  // fixed; other values are rejected
};

// Strict parse of the file format above; per-key syntax and range checks.
// Throws config_error naming the offending line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Cross-field consistency for an experiment run: one data source, S <= K,
// scheme present (and only present) under fedmlh, and no positive holdout
// alongside a test file or a loaded partition plan (plan indices refer to
// the unsplit dataset).
void validate_run_config(const ExperimentConfig& cfg);

// Fill defaults that need no dataset: derived seeds from the global seed,
// weighting (fedavg: sample_proportional, fedmlh: uniform), download scope
// (fedavg: selected, fedmlh: all), holdout (0 with a test file or a loaded
// partition plan, 0.2 otherwise).
void resolve_defaults(ExperimentConfig& cfg);

// Canonical serialization of a resolved config; parse_config reads it back.
// Emitted next to run artifacts so a run can be reproduced from its output.
std::string config_to_text(const ExperimentConfig& cfg);

const char* algorithm_name(fed::Algorithm a);
const char* weighting_name(fed::Weighting w);
const char* download_scope_name(fed::DownloadScope d);
const char* precision_name(model::Precision p);
const char* merge_mode_name(hashing::MergeMode m);

}  // namespace fedsketch::config
