#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedsketch/data.hpp"
#include "fedsketch/federation.hpp"
#include "fedsketch/hashing.hpp"
#include "fedsketch/io.hpp"
#include "fedsketch/model.hpp"
#include "fedsketch/rng.hpp"
#include "helpers.hpp"

using namespace fedsketch;

namespace {

struct Scenario {
  data::SparseDataset train;
  data::SparseDataset test;
  data::PartitionPlan plan;
  std::vector<std::uint32_t> frequent;
};

Scenario small_scenario(std::uint32_t N, std::uint32_t d, std::uint32_t p,
                        std::uint32_t K, std::uint64_t seed) {
  Scenario sc;
  data::SyntheticSpec spec;
  spec.N = N;
  spec.d = d;
  spec.p = p;
  spec.features_per_class = 3;
  spec.labels_per_sample = 2;
  spec.noise_rate = 0.1;
  spec.seed = seed;
  auto full = data::generate_synthetic(spec);
  auto [train, test] = data::split_holdout(full, 0.2, seed);
  sc.train = std::move(train);
  sc.test = std::move(test);
  const auto F = data::default_frequent_count(sc.train);
  sc.plan = data::partition_noniid(sc.train, K, F, seed);
  sc.frequent = data::top_frequent_classes(sc.train, F);
  return sc;
}

fed::FedConfig base_config(fed::Algorithm algo) {
  fed::FedConfig cfg;
  cfg.algorithm = algo;
  cfg.K = 4;
  cfg.S = 2;
  cfg.T = 3;
  cfg.E = 2;
  cfg.lr = 0.1;
  cfg.batch_size = 16;
  cfg.h1 = 8;
  cfg.h2 = 8;
  cfg.early_stop_patience = 0;
  cfg.seed = 5;
  if (algo == fed::Algorithm::fedmlh) {
    cfg.weighting = fed::Weighting::uniform;
    cfg.download_scope = fed::DownloadScope::all;
  }
  return cfg;
}

std::string final_params_blob(const fed::TrainedGlobal& t) {
  std::string out;
  for (const auto& m : t.submodels) out += model::params_to_blob(m);
  return out;
}

hashing::LabelHashScheme identity_scheme(std::uint32_t p) {
  hashing::LabelHashScheme s;
  s.p = p;
  s.B = p;
  s.R = 1;
  s.seed = 0;
  s.tables.push_back({1, 0, hashing::kHashPrime, p});
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("federation");

TEST_CASE("select_clients returns sorted distinct ids at the right size") {
  RngStream rng(1, StreamTag::selection, {1});
  for (int round = 0; round < 50; ++round) {
    const auto sel = fed::select_clients(10, 4, rng);
    REQUIRE(sel.size() == 4);
    for (std::size_t i = 1; i < sel.size(); ++i) CHECK(sel[i - 1] < sel[i]);
    for (auto id : sel) CHECK(id < 10);
  }
  RngStream rng2(1, StreamTag::selection, {2});
  const auto all = fed::select_clients(6, 6, rng2);
  CHECK(all == std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5});
  CHECK_THROWS_AS(fed::select_clients(4, 5, rng2), std::invalid_argument);
  CHECK_THROWS_AS(fed::select_clients(4, 0, rng2), std::invalid_argument);
}

TEST_CASE("selection is uniform across clients") {
  std::vector<int> counts(10, 0);
  for (std::uint64_t t = 0; t < 10000; ++t) {
    RngStream rng(3, StreamTag::selection, {t});
    for (auto id : fed::select_clients(10, 1, rng)) ++counts[id];
  }
  // p = 0.1 per round, sd = sqrt(10000 * 0.1 * 0.9) = 30.
  for (int c : counts) {
    CHECK(c > 1000 - 4 * 30);
    CHECK(c < 1000 + 4 * 30);
  }
}

TEST_CASE("two local epochs equal two chained single epochs") {
  const auto sc = small_scenario(60, 20, 8, 1, 3);
  std::vector<std::vector<std::uint32_t>> targets;
  for (const auto& s : sc.train.samples) targets.push_back(s.positives);
  std::vector<std::uint32_t> shard(sc.train.size());
  for (std::uint32_t i = 0; i < shard.size(); ++i) shard[i] = i;

  model::MLPConfig mc;
  mc.input_dim = sc.train.d;
  mc.h1 = 8;
  mc.h2 = 8;
  mc.output_dim = sc.train.p;
  mc.seed = 7;

  auto once = model::init_mlp<float>(mc);
  RngStream rng_once(9, StreamTag::shuffle, {1, 0});
  fed::local_train(sc.train, shard, targets, once, 2, 0.05, 8, rng_once);

  auto twice = model::init_mlp<float>(mc);
  RngStream rng_twice(9, StreamTag::shuffle, {1, 0});
  fed::local_train(sc.train, shard, targets, twice, 1, 0.05, 8, rng_twice);
  fed::local_train(sc.train, shard, targets, twice, 1, 0.05, 8, rng_twice);

  CHECK(model::params_to_blob(once) == model::params_to_blob(twice));
}

TEST_CASE("training on an empty shard changes nothing") {
  const auto sc = small_scenario(20, 10, 5, 1, 4);
  std::vector<std::vector<std::uint32_t>> targets;
  for (const auto& s : sc.train.samples) targets.push_back(s.positives);
  model::MLPConfig mc;
  mc.input_dim = sc.train.d;
  mc.h1 = 4;
  mc.h2 = 4;
  mc.output_dim = sc.train.p;
  auto params = model::init_mlp<float>(mc);
  const auto before = model::params_to_blob(params);
  RngStream rng(1, StreamTag::shuffle, {1, 0});
  fed::local_train(sc.train, {}, targets, params, 3, 0.1, 8, rng);
  CHECK(model::params_to_blob(params) == before);
}

TEST_CASE("one client and one selection reproduce plain minibatch descent") {
  const auto sc = small_scenario(50, 16, 6, 1, 11);
  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 1;
  cfg.S = 1;
  cfg.T = 3;
  cfg.E = 2;
  const auto trained = fed::run_fedavg(sc.train, sc.plan, cfg);

  // Centralized replay: identical init stream, one local_train per round
  // with the engine's per-round shuffle key, aggregation of one model being
  // the identity.
  model::MLPConfig mc;
  mc.input_dim = sc.train.d;
  mc.h1 = cfg.h1;
  mc.h2 = cfg.h2;
  mc.output_dim = sc.train.p;
  mc.seed = RngStream(cfg.seed, StreamTag::model_init, {0}).next_u64();
  auto params = model::init_mlp<float>(mc);

  std::vector<std::vector<std::uint32_t>> targets;
  for (const auto& s : sc.train.samples) targets.push_back(s.positives);
  for (std::uint32_t t = 1; t <= cfg.T; ++t) {
    RngStream rng(cfg.seed, StreamTag::shuffle, {t, 0});
    fed::local_train(sc.train, sc.plan.assignments[0], targets, params, cfg.E,
                     cfg.lr, cfg.batch_size, rng);
  }
  CHECK(final_params_blob(trained) ==
        model::params_to_blob(model::to_double(params)));
}

TEST_CASE("runs are deterministic end to end") {
  const auto sc = small_scenario(80, 24, 10, 4, 13);
  auto cfg = base_config(fed::Algorithm::fedmlh);
  cfg.scheme = hashing::make_scheme(sc.train.p, 5, 3, 21);
  fed::EvalContext ev{&sc.test, sc.frequent};

  const auto a = fed::run_fedmlh(sc.train, sc.plan, cfg, &ev);
  const auto b = fed::run_fedmlh(sc.train, sc.plan, cfg, &ev);
  CHECK(final_params_blob(a) == final_params_blob(b));
  CHECK(fed::history_to_csv(a, cfg.algorithm, false) ==
        fed::history_to_csv(b, cfg.algorithm, false));
  CHECK(a.best_round == b.best_round);

  auto cfg2 = cfg;
  cfg2.seed = 6;
  const auto c = fed::run_fedmlh(sc.train, sc.plan, cfg2, &ev);
  CHECK(final_params_blob(a) != final_params_blob(c));
}

TEST_CASE("thread count never changes the trajectory") {
  const auto sc = small_scenario(90, 24, 10, 6, 17);
  auto cfg = base_config(fed::Algorithm::fedmlh);
  cfg.K = 6;
  cfg.S = 4;
  cfg.scheme = hashing::make_scheme(sc.train.p, 4, 3, 2);
  fed::EvalContext ev{&sc.test, sc.frequent};

  cfg.threads = 1;
  const auto serial = fed::run_fedmlh(sc.train, sc.plan, cfg, &ev);
  cfg.threads = 4;
  const auto parallel = fed::run_fedmlh(sc.train, sc.plan, cfg, &ev);
  CHECK(final_params_blob(serial) == final_params_blob(parallel));
  CHECK(fed::history_to_csv(serial, cfg.algorithm, false) ==
        fed::history_to_csv(parallel, cfg.algorithm, false));

  auto avg_cfg = base_config(fed::Algorithm::fedavg);
  avg_cfg.K = 6;
  avg_cfg.S = 4;
  avg_cfg.threads = 1;
  const auto s1 = fed::run_fedavg(sc.train, sc.plan, avg_cfg, &ev);
  avg_cfg.threads = 3;
  const auto s3 = fed::run_fedavg(sc.train, sc.plan, avg_cfg, &ev);
  CHECK(final_params_blob(s1) == final_params_blob(s3));
}

TEST_CASE("uniform and sample-proportional weights coincide on equal shards") {
  // Hand-built plan with equal shard sizes and S a power of two: n/(S*n) is
  // then exactly representable, so the two weightings agree bitwise.
  const auto ds = testutil::random_dataset(64, 12, 6, 23);
  data::PartitionPlan plan;
  plan.K = 4;
  plan.F = 0;
  plan.seed = 0;
  plan.assignments.resize(4);
  for (std::uint32_t i = 0; i < 64; ++i) plan.assignments[i % 4].push_back(i);
  data::validate_plan(plan, ds.size());

  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 4;
  cfg.S = 4;
  cfg.weighting = fed::Weighting::uniform;
  const auto uni = fed::run_fedavg(ds, plan, cfg);
  cfg.weighting = fed::Weighting::sample_proportional;
  const auto prop = fed::run_fedavg(ds, plan, cfg);
  CHECK(final_params_blob(uni) == final_params_blob(prop));
}

TEST_CASE("weighting mode changes the aggregate on unbalanced shards") {
  const auto ds = testutil::random_dataset(60, 12, 6, 29);
  data::PartitionPlan plan;
  plan.K = 2;
  plan.F = 0;
  plan.seed = 0;
  plan.assignments.resize(2);
  for (std::uint32_t i = 0; i < 50; ++i) plan.assignments[0].push_back(i);
  for (std::uint32_t i = 50; i < 60; ++i) plan.assignments[1].push_back(i);

  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 2;
  cfg.S = 2;
  cfg.T = 1;
  cfg.weighting = fed::Weighting::uniform;
  const auto uni = fed::run_fedavg(ds, plan, cfg);
  cfg.weighting = fed::Weighting::sample_proportional;
  const auto prop = fed::run_fedavg(ds, plan, cfg);
  CHECK(final_params_blob(uni) != final_params_blob(prop));
}

TEST_CASE("ledger counts payload bytes exactly") {
  const auto sc = small_scenario(70, 20, 9, 4, 31);
  auto cfg = base_config(fed::Algorithm::fedmlh);
  cfg.T = 4;
  cfg.scheme = hashing::make_scheme(sc.train.p, 4, 2, 3);
  const auto trained = fed::run_fedmlh(sc.train, sc.plan, cfg);

  model::MLPConfig sub;
  sub.input_dim = sc.train.d;
  sub.h1 = cfg.h1;
  sub.h2 = cfg.h2;
  sub.output_dim = 4;
  sub.precision = cfg.precision;
  CHECK(trained.payload_bytes_per_client == 2 * model::byte_size(sub));
  CHECK(trained.param_count == 2 * model::param_count(sub));

  REQUIRE(trained.ledger.entries.size() == 4);
  std::uint64_t up = 0, down = 0;
  for (const auto& e : trained.ledger.entries) {
    CHECK(e.upload_bytes == cfg.S * trained.payload_bytes_per_client);
    // fedmlh defaults broadcast to every client.
    CHECK(e.download_bytes == cfg.K * trained.payload_bytes_per_client);
    up += e.upload_bytes;
    down += e.download_bytes;
  }
  CHECK(trained.ledger.total_upload == up);
  CHECK(trained.ledger.total_download == down);
  CHECK(trained.ledger.total_upload ==
        static_cast<std::uint64_t>(cfg.T) * cfg.S * trained.payload_bytes_per_client);

  const auto upto2 = fed::ledger_totals(trained.ledger, 2);
  CHECK(upto2.upload == 2ull * cfg.S * trained.payload_bytes_per_client);
  CHECK(upto2.combined == upto2.upload + upto2.download);
  const auto zero = fed::ledger_totals(trained.ledger, 0);
  CHECK(zero.upload == 0);
  CHECK(zero.download == 0);
  CHECK_THROWS_AS(fed::ledger_totals(trained.ledger, 9), std::invalid_argument);
}

TEST_CASE("download scope selected charges S instead of K") {
  const auto sc = small_scenario(50, 16, 8, 5, 37);
  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 5;
  cfg.S = 2;
  cfg.T = 2;
  cfg.download_scope = fed::DownloadScope::selected;
  const auto sel = fed::run_fedavg(sc.train, sc.plan, cfg);
  for (const auto& e : sel.ledger.entries)
    CHECK(e.download_bytes == 2 * sel.payload_bytes_per_client);
  cfg.download_scope = fed::DownloadScope::all;
  const auto all = fed::run_fedavg(sc.train, sc.plan, cfg);
  for (const auto& e : all.ledger.entries)
    CHECK(e.download_bytes == 5 * all.payload_bytes_per_client);
  // Scope is pure accounting; the trained model is unaffected.
  CHECK(final_params_blob(sel) == final_params_blob(all));
}

TEST_CASE("early stopping fires after patience rounds without improvement") {
  const auto sc = small_scenario(60, 16, 8, 3, 41);
  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 3;
  cfg.S = 2;
  cfg.T = 30;
  cfg.lr = 0.0;  // metrics can never improve after the first evaluation
  cfg.early_stop_patience = 2;
  fed::EvalContext ev{&sc.test, sc.frequent};
  const auto trained = fed::run_fedavg(sc.train, sc.plan, cfg, &ev);
  CHECK(trained.best_round == 1);
  CHECK(trained.history.size() == 3);  // round 1 best, rounds 2-3 flat, stop
  CHECK(trained.ledger.entries.size() == trained.history.size());

  // Patience zero disables stopping.
  cfg.early_stop_patience = 0;
  cfg.T = 5;
  const auto full = fed::run_fedavg(sc.train, sc.plan, cfg, &ev);
  CHECK(full.history.size() == 5);
}

TEST_CASE("evaluation cadence controls which rounds carry metrics") {
  const auto sc = small_scenario(60, 16, 8, 3, 43);
  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 3;
  cfg.S = 2;
  cfg.T = 4;
  cfg.eval_each_round = false;
  fed::EvalContext ev{&sc.test, sc.frequent};
  const auto trained = fed::run_fedavg(sc.train, sc.plan, cfg, &ev);
  REQUIRE(trained.history.size() == 4);
  for (std::size_t i = 0; i + 1 < trained.history.size(); ++i)
    CHECK_FALSE(trained.history[i].evaluated);
  CHECK(trained.history.back().evaluated);
  CHECK(trained.best_round == 4);

  // Without any evaluation context, nothing is evaluated at all.
  const auto blind = fed::run_fedavg(sc.train, sc.plan, cfg);
  CHECK(blind.best_round == 0);
  for (const auto& rec : blind.history) CHECK_FALSE(rec.evaluated);
}

TEST_CASE("hash-table training with an identity table reduces to the baseline") {
  const auto sc = small_scenario(80, 20, 12, 4, 47);
  auto avg_cfg = base_config(fed::Algorithm::fedavg);
  avg_cfg.weighting = fed::Weighting::uniform;
  avg_cfg.download_scope = fed::DownloadScope::all;
  fed::EvalContext ev{&sc.test, sc.frequent};
  const auto avg = fed::run_fedavg(sc.train, sc.plan, avg_cfg, &ev);

  auto mlh_cfg = base_config(fed::Algorithm::fedmlh);
  mlh_cfg.scheme = identity_scheme(sc.train.p);
  mlh_cfg.merge_logits = true;
  const auto mlh = fed::run_fedmlh(sc.train, sc.plan, mlh_cfg, &ev);

  CHECK(final_params_blob(avg) == final_params_blob(mlh));
  const auto avg_scores = fed::score_dataset(avg, avg_cfg, sc.test);
  const auto mlh_scores = fed::score_dataset(mlh, mlh_cfg, sc.test);
  CHECK((avg_scores - mlh_scores).cwiseAbs().maxCoeff() == 0.0);

  // Metric trajectories coincide as well: merging through an identity table
  // is a relabeling, and under raw-logit merging even the scores match.
  CHECK(fed::history_to_csv(avg, fed::Algorithm::fedavg, false) ==
        fed::history_to_csv(mlh, fed::Algorithm::fedavg, false));
}

TEST_CASE("score_dataset merges log-likelihoods monotonically for one table") {
  // With R = 1 the merged log-likelihood is a monotone map of the logit, so
  // rankings agree with raw-logit merging.
  const auto sc = small_scenario(40, 16, 6, 2, 53);
  auto cfg = base_config(fed::Algorithm::fedmlh);
  cfg.K = 2;
  cfg.S = 1;
  cfg.T = 2;
  cfg.scheme = hashing::make_scheme(sc.train.p, 3, 1, 7);
  const auto trained = fed::run_fedmlh(sc.train, sc.plan, cfg);

  auto cfg_logits = cfg;
  cfg_logits.merge_logits = true;
  const auto ll = fed::score_dataset(trained, cfg, sc.test);
  const auto lg = fed::score_dataset(trained, cfg_logits, sc.test);
  REQUIRE(ll.rows() == lg.rows());
  for (Eigen::Index i = 0; i < ll.rows(); ++i) {
    for (Eigen::Index a = 0; a < ll.cols(); ++a) {
      CHECK(ll(i, a) < 0.0);  // log of a sigmoid
      for (Eigen::Index b = a + 1; b < ll.cols(); ++b) {
        const auto order_ll = ll(i, a) < ll(i, b);
        const auto order_lg = lg(i, a) < lg(i, b);
        CHECK(order_ll == order_lg);
      }
    }
  }
}

TEST_CASE("median merge across three tables follows the component order") {
  const auto sc = small_scenario(40, 16, 6, 2, 59);
  auto cfg = base_config(fed::Algorithm::fedmlh);
  cfg.K = 2;
  cfg.S = 1;
  cfg.T = 1;
  cfg.scheme = hashing::make_scheme(sc.train.p, 3, 3, 7);
  const auto trained = fed::run_fedmlh(sc.train, sc.plan, cfg);

  cfg.merge_mode = hashing::MergeMode::median;
  const auto med = fed::score_dataset(trained, cfg, sc.test);
  cfg.merge_mode = hashing::MergeMode::mean;
  const auto mean = fed::score_dataset(trained, cfg, sc.test);
  // Median of three values lies between min and mean-compatible bounds; they
  // agree in shape but generally differ in value.
  REQUIRE(med.rows() == mean.rows());
  CHECK((med - mean).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("engine validates its inputs") {
  const auto sc = small_scenario(30, 12, 6, 2, 61);
  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 3;  // plan was built for K = 2
  CHECK_THROWS_AS(fed::run_fedavg(sc.train, sc.plan, cfg), std::invalid_argument);

  auto mlh = base_config(fed::Algorithm::fedmlh);
  mlh.K = 2;
  mlh.S = 1;
  CHECK_THROWS_AS(fed::run_fedmlh(sc.train, sc.plan, mlh), std::invalid_argument);
  mlh.scheme = hashing::make_scheme(sc.train.p + 1, 3, 2, 1);
  CHECK_THROWS_AS(fed::run_fedmlh(sc.train, sc.plan, mlh), std::invalid_argument);

  auto wrong = base_config(fed::Algorithm::fedavg);
  CHECK_THROWS_AS(fed::run_fedmlh(sc.train, sc.plan, wrong), std::invalid_argument);
}

TEST_CASE("history csv has the documented shape") {
  const auto sc = small_scenario(40, 16, 8, 2, 67);
  auto cfg = base_config(fed::Algorithm::fedavg);
  cfg.K = 2;
  cfg.S = 1;
  cfg.T = 2;
  fed::EvalContext ev{&sc.test, sc.frequent};
  const auto trained = fed::run_fedavg(sc.train, sc.plan, cfg, &ev);
  const auto csv = fed::history_to_csv(trained, cfg.algorithm, false);
  io::LineReader reader(csv);
  std::string line;
  REQUIRE(reader.next(line));
  CHECK(line ==
        "round,algorithm,top1,top3,top5,upload_bytes_cum,download_bytes_cum,seconds");
  std::size_t rows = 0;
  while (reader.next(line)) {
    ++rows;
    const auto cells = io::split_char(line, ',');
    REQUIRE(cells.size() == 8);
    CHECK(cells[1] == "fedavg");
    CHECK(cells[7] == "0");  // timing off
  }
  CHECK(rows == 2);
}

TEST_SUITE_END();
