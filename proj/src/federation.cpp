#include "fedsketch/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fedsketch/io.hpp"

namespace fedsketch::fed {

namespace {

const char* algo_name(Algorithm a) {
  return a == Algorithm::fedavg ? "fedavg" : "fedmlh";
}

// Stable log(sigmoid(z)).
double log_sigmoid(double z) {
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

void validate(const data::SparseDataset& ds, const data::PartitionPlan& plan,
              const FedConfig& cfg) {
  if (cfg.S == 0 || cfg.S > cfg.K)
    throw std::invalid_argument("fed: need 1 <= S <= K");
  if (cfg.T == 0 || cfg.E == 0)
    throw std::invalid_argument("fed: T and E must be positive");
  if (cfg.batch_size == 0)
    throw std::invalid_argument("fed: batch size must be positive");
  if (cfg.lr < 0.0) throw std::invalid_argument("fed: negative learning rate");
  if (plan.K != cfg.K || plan.assignments.size() != cfg.K)
    throw std::invalid_argument("fed: partition plan has " +
                                std::to_string(plan.K) + " clients, config has " +
                                std::to_string(cfg.K));
  for (const auto& shard : plan.assignments)
    for (std::uint32_t idx : shard)
      if (idx >= ds.size())
        throw std::invalid_argument("fed: plan references sample " +
                                    std::to_string(idx) + " outside the dataset");
  if (cfg.algorithm == Algorithm::fedmlh) {
    if (!cfg.scheme)
      throw std::invalid_argument("fed: fedmlh requires a label hash scheme");
    if (cfg.scheme->p != ds.p)
      throw std::invalid_argument("fed: scheme p=" + std::to_string(cfg.scheme->p) +
                                  " != dataset p=" + std::to_string(ds.p));
  }
}

// Per sub-model, per sample: positive output indices. FedAvg is the one
// sub-model case whose outputs are the classes themselves.
std::vector<std::vector<std::vector<std::uint32_t>>> build_targets(
    const data::SparseDataset& ds, const FedConfig& cfg, std::uint32_t n_sub) {
  std::vector<std::vector<std::vector<std::uint32_t>>> targets(n_sub);
  for (auto& t : targets) t.resize(ds.size());
  if (cfg.algorithm == Algorithm::fedavg) {
    for (std::size_t i = 0; i < ds.size(); ++i)
      targets[0][i] = ds.samples[i].positives;
    return targets;
  }
  const auto& scheme = *cfg.scheme;
  for (std::uint32_t j = 0; j < n_sub; ++j)
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto& buckets = targets[j][i];
      buckets.reserve(ds.samples[i].positives.size());
      for (std::uint32_t l : ds.samples[i].positives)
        buckets.push_back(scheme.bucket(j, l));
      std::sort(buckets.begin(), buckets.end());
      buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
    }
  return targets;
}

// class -> bucket lookup per table, precomputed once per run.
std::vector<std::vector<std::uint32_t>> bucket_map(
    const hashing::LabelHashScheme& scheme) {
  std::vector<std::vector<std::uint32_t>> map(scheme.R,
                                              std::vector<std::uint32_t>(scheme.p));
  for (std::uint32_t j = 0; j < scheme.R; ++j)
    for (std::uint32_t l = 0; l < scheme.p; ++l)
      map[j][l] = scheme.bucket(j, l);
  return map;
}

// Class scores for a block of samples from double-widened sub-models.
Eigen::MatrixXd score_rows(const std::vector<model::MlpParamsD>& subs,
                           const FedConfig& cfg,
                           const std::vector<std::vector<std::uint32_t>>& map,
                           const std::vector<const data::SparseVector*>& xs) {
  if (cfg.algorithm == Algorithm::fedavg)
    return model::forward_batch(subs[0], xs);

  const auto& scheme = *cfg.scheme;
  const auto n = static_cast<Eigen::Index>(xs.size());
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      per_table(scheme.R);
  for (std::uint32_t j = 0; j < scheme.R; ++j) {
    per_table[j] = model::forward_batch(subs[j], xs);
    if (!cfg.merge_logits)
      per_table[j] = per_table[j].unaryExpr([](double z) { return log_sigmoid(z); });
  }

  Eigen::MatrixXd scores(n, scheme.p);
  if (cfg.merge_mode == hashing::MergeMode::mean) {
    scores.setZero();
    for (std::uint32_t j = 0; j < scheme.R; ++j)
      for (std::uint32_t l = 0; l < scheme.p; ++l)
        scores.col(l) += per_table[j].col(map[j][l]);
    scores /= static_cast<double>(scheme.R);
  } else {
    std::vector<double> vals(scheme.R);
    for (Eigen::Index r = 0; r < n; ++r)
      for (std::uint32_t l = 0; l < scheme.p; ++l) {
        for (std::uint32_t j = 0; j < scheme.R; ++j)
          vals[j] = per_table[j](r, map[j][l]);
        std::sort(vals.begin(), vals.end());
        const std::size_t m = vals.size() / 2;
        scores(r, l) = (vals.size() % 2 == 1) ? vals[m]
                                              : 0.5 * (vals[m - 1] + vals[m]);
      }
  }
  return scores;
}

metrics::EvalResult evaluate(const std::vector<model::MlpParamsD>& subs,
                             const FedConfig& cfg,
                             const std::vector<std::vector<std::uint32_t>>& map,
                             const data::SparseDataset& test,
                             const std::vector<std::uint32_t>& frequent) {
  metrics::EvalAccumulator acc(frequent);
  constexpr std::size_t kBlock = 256;
  std::vector<const data::SparseVector*> xs;
  for (std::size_t start = 0; start < test.size(); start += kBlock) {
    const std::size_t stop = std::min(start + kBlock, test.size());
    xs.clear();
    for (std::size_t i = start; i < stop; ++i)
      xs.push_back(&test.samples[i].features);
    const Eigen::MatrixXd scores = score_rows(subs, cfg, map, xs);
    for (std::size_t i = start; i < stop; ++i)
      acc.add(scores.row(static_cast<Eigen::Index>(i - start)),
              test.samples[i].positives);
  }
  return acc.result();
}

template <typename T>
struct LocalTask {
  std::uint32_t client = 0;  // client id
  std::uint32_t sub = 0;     // sub-model index
  model::MlpParams<T> result;
};

// Runs all (client, sub-model) tasks for one round, possibly on several
// workers. Results land in per-task slots and the aggregation order below is
// fixed, so thread count cannot change any outcome.
template <typename T>
void run_tasks(std::vector<LocalTask<T>>& tasks, std::uint32_t threads,
               const std::function<void(LocalTask<T>&)>& body) {
  if (threads <= 1 || tasks.size() <= 1) {
    for (auto& t : tasks) body(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        body(tasks[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::uint32_t n = std::min<std::uint32_t>(
      threads, static_cast<std::uint32_t>(tasks.size()));
  pool.reserve(n);
  for (std::uint32_t w = 0; w < n; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

template <typename T>
TrainedGlobal run_engine(const data::SparseDataset& ds,
                         const data::PartitionPlan& plan, const FedConfig& cfg,
                         const EvalContext* eval_ctx) {
  validate(ds, plan, cfg);
  const bool is_mlh = cfg.algorithm == Algorithm::fedmlh;
  const std::uint32_t n_sub = is_mlh ? cfg.scheme->R : 1;
  const std::uint32_t out_dim = is_mlh ? cfg.scheme->B : ds.p;

  model::MLPConfig sub_cfg;
  sub_cfg.input_dim = ds.d;
  sub_cfg.h1 = cfg.h1;
  sub_cfg.h2 = cfg.h2;
  sub_cfg.output_dim = out_dim;
  sub_cfg.precision = cfg.precision;

  const auto targets = build_targets(ds, cfg, n_sub);
  const auto map = is_mlh ? bucket_map(*cfg.scheme)
                          : std::vector<std::vector<std::uint32_t>>{};

  // Sub-model j's init seed is derived so that FedAvg and FedMLH share the
  // j = 0 stream; the identity-scheme reduction property depends on it.
  std::vector<model::MlpParams<T>> global(n_sub);
  for (std::uint32_t j = 0; j < n_sub; ++j) {
    sub_cfg.seed = RngStream(cfg.seed, StreamTag::model_init, {j}).next_u64();
    global[j] = model::init_mlp<T>(sub_cfg);
  }

  TrainedGlobal trained;
  trained.payload_bytes_per_client =
      static_cast<std::uint64_t>(n_sub) * model::byte_size(sub_cfg);
  trained.param_count = static_cast<std::uint64_t>(n_sub) * model::param_count(sub_cfg);

  double best_mean = -1.0;
  const std::uint32_t threads = std::max<std::uint32_t>(1, cfg.threads);

  for (std::uint32_t t = 1; t <= cfg.T; ++t) {
    const auto t_start = std::chrono::steady_clock::now();

    RngStream sel_rng(cfg.seed, StreamTag::selection, {t});
    const auto selected = select_clients(cfg.K, cfg.S, sel_rng);

    std::vector<LocalTask<T>> tasks;
    tasks.reserve(static_cast<std::size_t>(selected.size()) * n_sub);
    for (std::uint32_t k : selected)
      for (std::uint32_t j = 0; j < n_sub; ++j) tasks.push_back({k, j, {}});

    run_tasks<T>(tasks, threads, [&](LocalTask<T>& task) {
      task.result = global[task.sub];
      // All sub-models of one client share the shuffle stream key, so the
      // epoch ordering matches the single-model run exactly.
      RngStream shuffle_rng(cfg.seed, StreamTag::shuffle, {t, task.client});
      local_train(ds, plan.assignments[task.client], targets[task.sub],
                  task.result, cfg.E, cfg.lr, cfg.batch_size, shuffle_rng);
    });

    // Aggregate in (client id, sub-model) order; `selected` is sorted.
    for (std::uint32_t j = 0; j < n_sub; ++j) {
      std::vector<const model::MlpParams<T>*> locals;
      std::vector<double> weights;
      for (std::size_t s = 0; s < selected.size(); ++s) {
        locals.push_back(&tasks[s * n_sub + j].result);
        weights.push_back(cfg.weighting == Weighting::uniform
                              ? 1.0
                              : static_cast<double>(
                                    plan.assignments[selected[s]].size()));
      }
      double wsum = 0.0;
      for (double w : weights) wsum += w;
      if (wsum <= 0.0) weights.assign(weights.size(), 1.0);  // all shards empty
      global[j] = model::average_params<T>(locals, weights);
    }

    RoundRecord rec;
    rec.round = t;
    rec.selected = selected;

    const std::uint64_t upload =
        static_cast<std::uint64_t>(cfg.S) * trained.payload_bytes_per_client;
    const std::uint64_t download =
        static_cast<std::uint64_t>(cfg.download_scope == DownloadScope::all
                                       ? cfg.K
                                       : cfg.S) *
        trained.payload_bytes_per_client;
    trained.ledger.entries.push_back({t, upload, download});
    trained.ledger.total_upload += upload;
    trained.ledger.total_download += download;

    const bool do_eval =
        eval_ctx && eval_ctx->test && (cfg.eval_each_round || t == cfg.T);
    if (do_eval) {
      std::vector<model::MlpParamsD> widened;
      widened.reserve(n_sub);
      for (const auto& g : global) widened.push_back(model::to_double(g));
      rec.eval = evaluate(widened, cfg, map, *eval_ctx->test, eval_ctx->frequent_set);
      rec.evaluated = true;
      if (rec.eval.mean_topk() > best_mean) {
        best_mean = rec.eval.mean_topk();
        trained.best_round = t;
      }
    }

    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    trained.history.push_back(std::move(rec));

    if (do_eval && cfg.early_stop_patience > 0 && trained.best_round > 0 &&
        t - trained.best_round >= cfg.early_stop_patience)
      break;
  }

  trained.submodels.reserve(n_sub);
  for (const auto& g : global) trained.submodels.push_back(model::to_double(g));
  return trained;
}

}  // namespace

std::vector<std::uint32_t> select_clients(std::uint32_t K, std::uint32_t S,
                                          RngStream& rng) {
  if (S == 0 || S > K) throw std::invalid_argument("select_clients: need 1 <= S <= K");
  std::vector<std::uint32_t> ids(K);
  for (std::uint32_t i = 0; i < K; ++i) ids[i] = i;
  for (std::uint32_t i = 0; i < S; ++i) {
    const auto j = i + rng.next_below(K - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(S);
  std::sort(ids.begin(), ids.end());
  return ids;
}

template <typename T>
void local_train(const data::SparseDataset& ds,
                 const std::vector<std::uint32_t>& shard,
                 const std::vector<std::vector<std::uint32_t>>& targets,
                 model::MlpParams<T>& params, std::uint32_t epochs, double lr,
                 std::uint32_t batch_size, RngStream& shuffle_rng) {
  if (batch_size == 0)
    throw std::invalid_argument("local_train: batch size must be positive");
  if (targets.size() != ds.size())
    throw std::invalid_argument("local_train: targets must cover the dataset");
  if (shard.empty()) return;

  const auto out_dim = static_cast<std::uint32_t>(params.b3.size());
  std::vector<std::uint32_t> order;
  std::vector<const data::SparseVector*> xs;
  std::vector<const std::vector<std::uint32_t>*> pos;
  model::Gradients<T> grads;

  for (std::uint32_t e = 0; e < epochs; ++e) {
    // Start each epoch from the shard order so only the stream state carries
    // over; E epochs then equal E chained single-epoch calls exactly.
    order.assign(shard.begin(), shard.end());
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const auto j = i + shuffle_rng.next_below(order.size() - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      xs.clear();
      pos.clear();
      for (std::size_t i = start; i < stop; ++i) {
        xs.push_back(&ds.samples[order[i]].features);
        pos.push_back(&targets[order[i]]);
      }
      model::loss_and_grad_sparse(params, xs, pos, out_dim, grads);
      model::sgd_step(params, grads, static_cast<T>(lr));
    }
  }
}

TrainedGlobal run_fedavg(const data::SparseDataset& ds,
                         const data::PartitionPlan& plan, const FedConfig& cfg,
                         const EvalContext* eval) {
  if (cfg.algorithm != Algorithm::fedavg)
    throw std::invalid_argument("run_fedavg: config algorithm is not fedavg");
  return cfg.precision == model::Precision::f32
             ? run_engine<float>(ds, plan, cfg, eval)
             : run_engine<double>(ds, plan, cfg, eval);
}

TrainedGlobal run_fedmlh(const data::SparseDataset& ds,
                         const data::PartitionPlan& plan, const FedConfig& cfg,
                         const EvalContext* eval) {
  if (cfg.algorithm != Algorithm::fedmlh)
    throw std::invalid_argument("run_fedmlh: config algorithm is not fedmlh");
  return cfg.precision == model::Precision::f32
             ? run_engine<float>(ds, plan, cfg, eval)
             : run_engine<double>(ds, plan, cfg, eval);
}

LedgerTotals ledger_totals(const CommLedger& ledger, std::uint32_t upto_round) {
  if (upto_round > ledger.entries.size())
    throw std::invalid_argument("ledger_totals: round " + std::to_string(upto_round) +
                                " beyond recorded history");
  LedgerTotals t;
  for (const auto& e : ledger.entries) {
    if (e.round > upto_round) continue;
    t.upload += e.upload_bytes;
    t.download += e.download_bytes;
  }
  t.combined = t.upload + t.download;
  return t;
}

Eigen::MatrixXd score_dataset(const TrainedGlobal& trained, const FedConfig& cfg,
                              const data::SparseDataset& ds) {
  const auto map = cfg.algorithm == Algorithm::fedmlh
                       ? bucket_map(*cfg.scheme)
                       : std::vector<std::vector<std::uint32_t>>{};
  std::vector<const data::SparseVector*> xs;
  xs.reserve(ds.size());
  for (const auto& s : ds.samples) xs.push_back(&s.features);
  return score_rows(trained.submodels, cfg, map, xs);
}

std::string history_to_csv(const TrainedGlobal& trained, Algorithm algorithm,
                           bool timing) {
  std::ostringstream out;
  out << "round,algorithm,top1,top3,top5,upload_bytes_cum,download_bytes_cum,seconds\n";
  std::uint64_t up = 0, down = 0;
  for (std::size_t i = 0; i < trained.history.size(); ++i) {
    const auto& rec = trained.history[i];
    up += trained.ledger.entries[i].upload_bytes;
    down += trained.ledger.entries[i].download_bytes;
    out << rec.round << ',' << algo_name(algorithm) << ',';
    if (rec.evaluated)
      out << io::format_double(rec.eval.top1) << ','
          << io::format_double(rec.eval.top3) << ','
          << io::format_double(rec.eval.top5) << ',';
    else
      out << ",,,";
    out << up << ',' << down << ','
        << (timing ? io::format_double(rec.seconds) : "0") << '\n';
  }
  return out.str();
}

template void local_train<float>(const data::SparseDataset&,
                                 const std::vector<std::uint32_t>&,
                                 const std::vector<std::vector<std::uint32_t>>&,
                                 model::MlpParams<float>&, std::uint32_t, double,
                                 std::uint32_t, RngStream&);
template void local_train<double>(const data::SparseDataset&,
                                  const std::vector<std::uint32_t>&,
                                  const std::vector<std::vector<std::uint32_t>>&,
                                  model::MlpParams<double>&, std::uint32_t, double,
                                  std::uint32_t, RngStream&);

}  // namespace fedsketch::fed
