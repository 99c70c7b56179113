#include "fedsketch/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <CLI11.hpp>

#include "fedsketch/errors.hpp"
#include "fedsketch/io.hpp"
#include "fedsketch/metrics.hpp"
#include "fedsketch/model.hpp"
#include "fedsketch/rng.hpp"

namespace fedsketch::cli {
namespace {

std::string read_referenced_file(const std::string& path, const char* what) {
  try {
    return io::read_file(path);
  } catch (const data_error& e) {
    throw config_error(std::string(what) + ": " + e.what());
  }
}

std::string human_bytes(std::uint64_t bytes) {
  char buf[64];
  const double b = static_cast<double>(bytes);
  if (bytes >= 1000000000ULL) {
    std::snprintf(buf, sizeof buf, "%.2f GB", b / 1e9);
  } else if (bytes >= 1000000ULL) {
    std::snprintf(buf, sizeof buf, "%.2f MB", b / 1e6);
  } else if (bytes >= 1000ULL) {
    std::snprintf(buf, sizeof buf, "%.2f kB", b / 1e3);
  } else {
    std::snprintf(buf, sizeof buf, "%llu B",
                  static_cast<unsigned long long>(bytes));
  }
  return buf;
}

double mc_stderr(double sum, double sum_sq, std::uint64_t n) {
  if (n < 2) return 0.0;
  const double mean = sum / static_cast<double>(n);
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
  return std::sqrt(var / static_cast<double>(n));
}

// Uniform Dirichlet draw via normalized exponentials; strictly positive.
Eigen::VectorXd dirichlet_uniform(std::uint32_t p, RngStream rng) {
  Eigen::VectorXd v(p);
  double total = 0.0;
  for (std::uint32_t i = 0; i < p; ++i) {
    double u = rng.next_double();
    while (u == 0.0) u = rng.next_double();
    const double e = -std::log(1.0 - u);
    v[i] = e;
    total += e;
  }
  v /= total;
  return v;
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  if (dir.back() == '/') return dir + name;
  return dir + "/" + name;
}

std::map<std::string, std::string> parse_kv(const std::string& text,
                                            const std::string& origin) {
  std::map<std::string, std::string> kv;
  io::LineReader reader(text);
  std::string line;
  while (reader.next(line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw data_error(origin + ": line " + std::to_string(reader.line_number()) +
                       " is not key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& kv_get(const std::map<std::string, std::string>& kv,
                          const std::string& key, const std::string& origin) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw data_error(origin + ": missing key '" + key + "'");
  return it->second;
}

}  // namespace

PreparedRun prepare_run(config::ExperimentConfig& cfg) {
  config::validate_run_config(cfg);
  config::resolve_defaults(cfg);

  PreparedRun run;
  if (cfg.synthetic) {
    run.train = data::generate_synthetic(cfg.synth);
  } else {
    run.train =
        data::dataset_from_text(read_referenced_file(cfg.data_path, "data.path"));
  }
  if (!cfg.test_path.empty()) {
    run.test = data::dataset_from_text(
        read_referenced_file(cfg.test_path, "data.test_path"));
    if (run.test.d != run.train.d || run.test.p != run.train.p) {
      throw config_error("data.test_path dimensions (d=" +
                         std::to_string(run.test.d) + ", p=" +
                         std::to_string(run.test.p) + ") do not match data.path");
    }
  }

  if (cfg.feature_hash_dim != 0) {
    run.train =
        data::feature_hash(run.train, cfg.feature_hash_dim, *cfg.feature_hash_seed);
    if (!run.test.samples.empty()) {
      run.test =
          data::feature_hash(run.test, cfg.feature_hash_dim, *cfg.feature_hash_seed);
    }
  }

  if (*cfg.holdout > 0.0) {
    auto split = data::split_holdout(run.train, *cfg.holdout, cfg.seed);
    run.train = std::move(split.first);
    run.test = std::move(split.second);
  }
  if (run.train.samples.empty()) {
    throw config_error("no training samples left after split");
  }

  if (!cfg.partition_path.empty()) {
    run.plan = data::plan_from_text(
        read_referenced_file(cfg.partition_path, "partition.path"));
    data::validate_plan(run.plan, run.train.size());
    if (run.plan.K != cfg.K) {
      throw config_error("partition.path has K=" + std::to_string(run.plan.K) +
                         " clients, fed.K=" + std::to_string(cfg.K));
    }
    if (!cfg.partition_F.has_value()) cfg.partition_F = run.plan.F;
  } else {
    if (!cfg.partition_F.has_value() || *cfg.partition_F == 0) {
      cfg.partition_F = data::default_frequent_count(run.train);
    }
    run.plan =
        data::partition_noniid(run.train, cfg.K, *cfg.partition_F, *cfg.partition_seed);
  }
  run.frequent_set = data::top_frequent_classes(run.train, *cfg.partition_F);

  if (cfg.algorithm == fed::Algorithm::fedmlh) {
    try {
      if (!cfg.scheme_path.empty()) {
        run.scheme = hashing::scheme_from_text(
            read_referenced_file(cfg.scheme_path, "scheme.path"));
        if (run.scheme->p != run.train.p) {
          throw config_error("scheme.path hashes p=" + std::to_string(run.scheme->p) +
                             " classes, dataset has p=" + std::to_string(run.train.p));
        }
      } else {
        run.scheme =
            hashing::make_scheme(run.train.p, cfg.scheme_B, cfg.scheme_R, *cfg.scheme_seed);
      }
    } catch (const std::invalid_argument& e) {
      throw config_error(std::string("scheme: ") + e.what());
    }
  }

  run.fed.algorithm = cfg.algorithm;
  run.fed.K = cfg.K;
  run.fed.S = cfg.S;
  run.fed.T = cfg.T;
  run.fed.E = cfg.E;
  run.fed.lr = cfg.lr;
  run.fed.batch_size = cfg.batch;
  run.fed.weighting = *cfg.weighting;
  run.fed.download_scope = *cfg.download_scope;
  run.fed.early_stop_patience = cfg.patience;
  run.fed.eval_each_round = cfg.eval_each_round;
  run.fed.scheme = run.scheme;
  run.fed.merge_mode = cfg.merge_mode;
  run.fed.merge_logits = cfg.merge_logits;
  run.fed.h1 = cfg.h1;
  run.fed.h2 = cfg.h2;
  run.fed.precision = cfg.precision;
  run.fed.threads = cfg.threads;
  run.fed.seed = cfg.seed;
  return run;
}

fed::TrainedGlobal execute_run(const PreparedRun& run) {
  fed::EvalContext eval;
  const fed::EvalContext* eval_ptr = nullptr;
  if (!run.test.samples.empty()) {
    eval.test = &run.test;
    eval.frequent_set = run.frequent_set;
    eval_ptr = &eval;
  }
  if (run.fed.algorithm == fed::Algorithm::fedavg) {
    return fed::run_fedavg(run.train, run.plan, run.fed, eval_ptr);
  }
  return fed::run_fedmlh(run.train, run.plan, run.fed, eval_ptr);
}

std::string summary_text(const config::ExperimentConfig& cfg,
                         const PreparedRun& run,
                         const fed::TrainedGlobal& result) {
  const auto best = result.best_round;
  metrics::EvalResult at_best;
  if (best > 0 && best <= result.history.size()) {
    at_best = result.history[best - 1].eval;
  }
  const auto to_best = fed::ledger_totals(result.ledger, best);
  const std::uint64_t upload_per_round =
      static_cast<std::uint64_t>(cfg.S) * result.payload_bytes_per_client;

  std::ostringstream out;
  out << "algorithm=" << config::algorithm_name(cfg.algorithm) << "\n";
  out << "precision=" << config::precision_name(cfg.precision) << "\n";
  out << "train_samples=" << run.train.size() << "\n";
  out << "test_samples=" << run.test.size() << "\n";
  out << "features=" << run.train.d << "\n";
  out << "classes=" << run.train.p << "\n";
  out << "frequent_classes=" << run.frequent_set.size() << "\n";
  out << "param_count=" << result.param_count << "\n";
  out << "payload_bytes_per_client_round=" << result.payload_bytes_per_client
      << "\n";
  out << "payload_human=" << human_bytes(result.payload_bytes_per_client) << "\n";
  out << "upload_bytes_per_round=" << upload_per_round << "\n";
  out << "rounds_run=" << result.history.size() << "\n";
  out << "best_round=" << best << "\n";
  out << "best_top1=" << io::format_double(at_best.top1) << "\n";
  out << "best_top3=" << io::format_double(at_best.top3) << "\n";
  out << "best_top5=" << io::format_double(at_best.top5) << "\n";
  out << "best_mean_topk=" << io::format_double(at_best.mean_topk()) << "\n";
  out << "upload_bytes_to_best=" << to_best.upload << "\n";
  out << "download_bytes_to_best=" << to_best.download << "\n";
  out << "upload_to_best_human=" << human_bytes(to_best.upload) << "\n";
  out << "upload_bytes_total=" << result.ledger.total_upload << "\n";
  out << "download_bytes_total=" << result.ledger.total_download << "\n";
  return out.str();
}

void write_run_artifacts(const config::ExperimentConfig& cfg,
                         const PreparedRun& run,
                         const fed::TrainedGlobal& result) {
  if (cfg.out_dir.empty()) {
    throw config_error("run needs an output directory: set out.dir or pass --out");
  }
  io::atomic_write_file(join_path(cfg.out_dir, "config_resolved.cfg"),
                        config::config_to_text(cfg));
  io::atomic_write_file(join_path(cfg.out_dir, "history.csv"),
                        fed::history_to_csv(result, cfg.algorithm, cfg.out_timing));
  io::atomic_write_file(join_path(cfg.out_dir, "summary.txt"),
                        summary_text(cfg, run, result));
  io::atomic_write_file(join_path(cfg.out_dir, "plan.txt"),
                        data::plan_to_text(run.plan));
  if (run.scheme) {
    io::atomic_write_file(join_path(cfg.out_dir, "scheme.txt"),
                          hashing::scheme_to_text(*run.scheme));
  }
}

std::vector<analysis::VerificationReport> suite_bucket_gain(std::uint64_t trials,
                                                       std::uint64_t seed) {
  if (trials == 0) trials = 10000;
  std::vector<analysis::VerificationReport> out;
  {
    const std::uint32_t p = 100, B = 10;
    const std::uint64_t N = 2000;
    const std::vector<std::uint64_t> counts(p, 20);
    for (std::uint32_t j = 0; j < p; ++j) {
      const auto class_seed =
          RngStream(seed, StreamTag::analysis, {10, j}).next_u64();
      out.push_back(analysis::verify_bucket_gain(N, counts, B, j, trials, class_seed));
    }
  }
  {
    // Bucket amplification: with p/B = 32 and every class at the average
    // count, the expected positive count of a bucket is close to 32x the
    // single-class count (exact value 1 + (p-1)/B - p/B^2 = 31.97).
    const std::uint32_t p = 1024, B = 32;
    const std::uint64_t N = 51200;
    const std::vector<std::uint64_t> counts(p, 50);
    const auto amp_seed =
        RngStream(seed, StreamTag::analysis, {10, 100000}).next_u64();
    const auto amp = analysis::verify_bucket_gain(N, counts, B, 0, trials, amp_seed);
    out.push_back(amp);

    analysis::VerificationReport ratio;
    ratio.statement = "bucket_gain_amplification_x32";
    ratio.trials = amp.trials;
    ratio.statistic = amp.statistic / 50.0;
    ratio.bound = static_cast<double>(p) / B;
    ratio.margin = ratio.statistic - ratio.bound;
    ratio.stderr_val = amp.stderr_val / 50.0;
    ratio.pass = std::abs(ratio.margin) <= 0.1 * ratio.bound;
    out.push_back(ratio);
  }
  return out;
}

std::vector<analysis::VerificationReport> suite_collision(std::uint64_t trials,
                                                       std::uint64_t seed) {
  if (trials == 0) trials = 2000;
  const std::uint32_t p = 200;
  const double delta = 0.05;
  std::vector<analysis::VerificationReport> out;
  for (const std::uint32_t R : {1u, 2u, 4u}) {
    const auto B = hashing::min_table_size(p, delta, R);
    const auto r_seed = RngStream(seed, StreamTag::analysis, {11, R}).next_u64();
    out.push_back(analysis::verify_collision_rate(p, B, R, delta, trials, r_seed));
  }
  return out;
}

std::vector<analysis::VerificationReport> suite_contraction(std::uint64_t pairs,
                                                         std::uint64_t schemes,
                                                         std::uint64_t seed) {
  if (pairs == 0 || schemes == 0) {
    throw config_error("contraction needs positive --pairs and --schemes");
  }
  const std::uint32_t p = 500;
  const std::uint32_t Bs[] = {10, 50, 250};
  std::vector<analysis::VerificationReport> out;
  double red_mean[3] = {0, 0, 0};
  double red_se[3] = {0, 0, 0};

  for (int bi = 0; bi < 3; ++bi) {
    const std::uint32_t B = Bs[bi];
    bool all_pass = true;
    double red_sum = 0.0, red_sq = 0.0, stat_sum = 0.0;
    for (std::uint64_t q = 0; q < pairs; ++q) {
      // The class-distribution pairs are shared across B values so the
      // reduction comparison between table sizes is paired.
      const auto pi_a =
          dirichlet_uniform(p, RngStream(seed, StreamTag::analysis, {5, q, 0}));
      const auto pi_b =
          dirichlet_uniform(p, RngStream(seed, StreamTag::analysis, {5, q, 1}));
      const auto pair_seed =
          RngStream(seed, StreamTag::analysis, {6, B, q}).next_u64();
      const auto r = analysis::verify_kl_contraction(pi_a, pi_b, B, schemes, pair_seed);
      all_pass = all_pass && r.pass;
      const double reduction = r.bound - r.statistic;
      red_sum += reduction;
      red_sq += reduction * reduction;
      stat_sum += r.statistic;
    }
    red_mean[bi] = red_sum / static_cast<double>(pairs);
    red_se[bi] = mc_stderr(red_sum, red_sq, pairs);

    analysis::VerificationReport r;
    r.statement = "kl_contraction_p" + std::to_string(p) + "_B" + std::to_string(B);
    r.trials = pairs * schemes;
    r.statistic = red_mean[bi];  // mean KL reduction, class minus bucket
    r.bound = 0.0;
    r.margin = r.statistic;
    r.stderr_val = red_se[bi];
    r.pass = all_pass;
    out.push_back(r);
  }

  // Smaller tables merge more classes, so the reduction must not shrink as
  // B drops (within Monte-Carlo error).
  for (int bi = 0; bi < 2; ++bi) {
    analysis::VerificationReport r;
    r.statement = "kl_contraction_monotone_B" + std::to_string(Bs[bi]) + "_vs_B" +
                  std::to_string(Bs[bi + 1]);
    r.trials = pairs * schemes;
    r.statistic = red_mean[bi] - red_mean[bi + 1];
    r.bound = 0.0;
    r.margin = r.statistic;
    r.stderr_val =
        std::sqrt(red_se[bi] * red_se[bi] + red_se[bi + 1] * red_se[bi + 1]);
    r.pass = r.statistic >= -3.0 * r.stderr_val;
    out.push_back(r);
  }
  return out;
}

std::vector<analysis::VerificationReport> suite_mse(std::uint64_t trials,
                                                    std::uint64_t seed,
                                                    std::vector<double>* mse_out) {
  if (trials == 0) trials = 2000;
  std::vector<std::uint64_t> sizes;
  for (std::uint64_t n = 10; n <= 10240; n *= 2) sizes.push_back(n);
  return {analysis::mse_scaling_demo(sizes, {1.0}, trials, seed, mse_out)};
}

std::string report_csv(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw config_error("report needs at least one run directory");

  struct Row {
    std::string dir, algorithm, top1, top3, top5;
    std::uint64_t best_round = 0;
    std::uint64_t upload_to_best = 0;
    std::uint64_t payload = 0;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    const std::string path = join_path(dir, "summary.txt");
    const auto kv = parse_kv(io::read_file(path), path);
    Row row;
    row.dir = dir;
    row.algorithm = kv_get(kv, "algorithm", path);
    row.best_round = io::parse_uint(kv_get(kv, "best_round", path), "best_round");
    row.top1 = kv_get(kv, "best_top1", path);
    row.top3 = kv_get(kv, "best_top3", path);
    row.top5 = kv_get(kv, "best_top5", path);
    row.upload_to_best =
        io::parse_uint(kv_get(kv, "upload_bytes_to_best", path), "upload bytes");
    row.payload = io::parse_uint(
        kv_get(kv, "payload_bytes_per_client_round", path), "payload bytes");
    rows.push_back(std::move(row));
  }

  std::ostringstream out;
  out << "run,algorithm,best_round,top1,top3,top5,upload_bytes_to_best,"
         "model_payload_bytes,cc_ratio,rounds_ratio\n";
  const Row& base = rows.front();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    out << r.dir << ',' << r.algorithm << ',' << r.best_round << ',' << r.top1
        << ',' << r.top3 << ',' << r.top5 << ',' << r.upload_to_best << ','
        << r.payload << ',';
    if (i > 0 && base.upload_to_best > 0 && r.upload_to_best > 0) {
      out << io::format_double(static_cast<double>(base.upload_to_best) /
                               static_cast<double>(r.upload_to_best));
    }
    out << ',';
    if (i > 0 && base.best_round > 0 && r.best_round > 0) {
      out << io::format_double(static_cast<double>(base.best_round) /
                               static_cast<double>(r.best_round));
    }
    out << '\n';
  }
  return out.str();
}

namespace {

struct RunOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::uint32_t threads = 0;
};

int do_run(const RunOpts& o) {
  auto cfg = config::load_config(o.config_path);
  if (o.seed.has_value()) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.threads > 0) {
    cfg.threads = o.threads;
  } else if (const char* env = std::getenv("FEDSKETCH_THREADS");
             env != nullptr && *env != '\0') {
    std::uint64_t v = 0;
    try {
      v = io::parse_uint(env, "FEDSKETCH_THREADS");
    } catch (const data_error& e) {
      throw config_error(e.what());
    }
    if (v == 0 || v > 0xffffffffULL) {
      throw config_error("FEDSKETCH_THREADS must be a positive thread count");
    }
    cfg.threads = static_cast<std::uint32_t>(v);
  }
  if (cfg.out_dir.empty()) {
    throw config_error("run needs an output directory: set out.dir or pass --out");
  }

  auto run = prepare_run(cfg);
  const auto result = execute_run(run);
  write_run_artifacts(cfg, run, result);
  std::cout << summary_text(cfg, run, result);
  std::cout << "artifacts=" << cfg.out_dir << "\n";
  return kExitOk;
}

struct VerifyOpts {
  std::string suite;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::uint64_t trials = 0;
  std::uint32_t p = 0;
  double delta = 0.0;
  std::uint32_t R = 0;
  std::uint64_t B = 0;
  std::uint64_t pairs = 500;
  std::uint64_t schemes = 500;
};

int do_verify(const VerifyOpts& o) {
  struct SuiteOut {
    std::string name;
    std::vector<analysis::VerificationReport> reports;
    std::vector<double> mse;
  };
  const bool custom2 =
      o.p != 0 || o.delta != 0.0 || o.R != 0 || o.B != 0;
  if (custom2 && o.suite != "collision") {
    throw config_error("--p/--delta/--R/--B apply to the collision suite only");
  }

  std::vector<SuiteOut> suites;
  const auto want = [&](const char* name) {
    return o.suite == name || o.suite == "all";
  };
  if (want("bucket-gain")) suites.push_back({"bucket-gain", suite_bucket_gain(o.trials, o.seed), {}});
  if (want("collision")) {
    if (custom2) {
      if (o.p == 0 || o.delta == 0.0 || o.R == 0) {
        throw config_error("custom collision needs --p, --delta and --R together");
      }
      const std::uint64_t B = o.B != 0 ? o.B : hashing::min_table_size(o.p, o.delta, o.R);
      const std::uint64_t trials = o.trials != 0 ? o.trials : 2000;
      suites.push_back(
          {"collision", {analysis::verify_collision_rate(o.p, B, o.R, o.delta, trials, o.seed)}, {}});
    } else {
      suites.push_back({"collision", suite_collision(o.trials, o.seed), {}});
    }
  }
  if (want("contraction")) {
    suites.push_back({"contraction", suite_contraction(o.pairs, o.schemes, o.seed), {}});
  }
  if (want("mse")) {
    std::vector<double> mse;
    auto reports = suite_mse(o.trials, o.seed, &mse);
    suites.push_back({"mse", std::move(reports), std::move(mse)});
  }

  bool all_pass = true;
  std::vector<std::string> failing;
  for (const auto& s : suites) {
    io::atomic_write_file(join_path(o.out, "verify_" + s.name + ".csv"),
                          analysis::reports_to_csv(s.reports));
    std::string txt = analysis::reports_to_kv(s.reports);
    if (!s.mse.empty()) {
      txt += "\n";
      std::uint64_t n = 10;
      for (const double m : s.mse) {
        txt += "mse_n" + std::to_string(n) + "=" + io::format_double(m) + "\n";
        n *= 2;
      }
    }
    io::atomic_write_file(join_path(o.out, "verify_" + s.name + ".txt"), txt);

    std::size_t passed = 0;
    for (const auto& r : s.reports) {
      if (r.pass) {
        ++passed;
      } else {
        all_pass = false;
        failing.push_back(r.statement);
      }
      if (s.reports.size() <= 12 || !r.pass) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.statement
                  << " statistic=" << io::format_double(r.statistic)
                  << " bound=" << io::format_double(r.bound)
                  << " stderr=" << io::format_double(r.stderr_val) << "\n";
      }
    }
    std::cout << "suite " << s.name << ": " << passed << "/" << s.reports.size()
              << " checks passed, reports in "
              << join_path(o.out, "verify_" + s.name + ".csv") << "\n";
  }
  if (!all_pass) {
    std::cerr << "verification failed:";
    for (const auto& name : failing) std::cerr << ' ' << name;
    std::cerr << "\n";
    return kExitAssert;
  }
  return kExitOk;
}

struct SynthOpts {
  std::string out;
  data::SyntheticSpec spec;
};

int do_synth(const SynthOpts& o) {
  data::SparseDataset ds;
  try {
    ds = data::generate_synthetic(o.spec);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("synth: ") + e.what());
  }
  data::save_xc_dataset(ds, o.out);
  std::cout << "wrote " << ds.size() << " samples (d=" << ds.d << ", p=" << ds.p
            << ") to " << o.out << "\n";
  return kExitOk;
}

struct PartitionOpts {
  std::string data_path;
  std::uint32_t K = 0;
  std::uint32_t F = 0;
  std::uint64_t seed = 1;
  std::string out;
};

int do_partition(const PartitionOpts& o) {
  const auto ds =
      data::dataset_from_text(read_referenced_file(o.data_path, "--data"));
  const std::uint32_t F = o.F != 0 ? o.F : data::default_frequent_count(ds);
  data::PartitionPlan plan;
  try {
    plan = data::partition_noniid(ds, o.K, F, o.seed);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("partition: ") + e.what());
  }
  data::save_plan(plan, o.out);
  std::cout << "partitioned " << ds.size() << " samples across " << o.K
            << " clients (F=" << F << ") to " << o.out << "\n";
  return kExitOk;
}

struct ReportOpts {
  std::vector<std::string> dirs;
  std::string out;
};

int do_report(const ReportOpts& o) {
  const std::string csv = report_csv(o.dirs);
  if (!o.out.empty()) io::atomic_write_file(o.out, csv);
  std::cout << csv;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"fedsketch: federated extreme multi-label learning simulator"};
  app.require_subcommand(1);

  RunOpts run_opts;
  auto* run_cmd = app.add_subcommand(
      "run", "Execute a federated experiment described by a config file");
  run_cmd->add_option("--config", run_opts.config_path, "experiment config file")
      ->required();
  run_cmd->add_option("--seed", run_opts.seed, "override the config's global seed");
  run_cmd->add_option("--out", run_opts.out, "override the output directory");
  run_cmd->add_option("--threads", run_opts.threads,
                      "worker threads (FEDSKETCH_THREADS is the fallback)");

  VerifyOpts verify_opts;
  auto* verify_cmd =
      app.add_subcommand("verify", "Run statistical verification suites");
  verify_cmd
      ->add_option("suite", verify_opts.suite,
                   "one of bucket-gain, collision, contraction, mse, all")
      ->required()
      ->check(CLI::IsMember({"bucket-gain", "collision", "contraction", "mse", "all"}));
  verify_cmd->add_option("--out", verify_opts.out, "directory for report files");
  verify_cmd->add_option("--seed", verify_opts.seed, "Monte Carlo seed");
  verify_cmd->add_option("--trials", verify_opts.trials,
                         "trial count (0 keeps the suite default)");
  verify_cmd->add_option("--p", verify_opts.p, "collision: class count");
  verify_cmd->add_option("--delta", verify_opts.delta,
                         "collision: target failure probability");
  verify_cmd->add_option("--R", verify_opts.R, "collision: number of tables");
  verify_cmd->add_option("--B", verify_opts.B,
                         "collision: table size (default: the computed bound)");
  verify_cmd->add_option("--pairs", verify_opts.pairs,
                         "contraction: distribution pairs");
  verify_cmd->add_option("--schemes", verify_opts.schemes,
                         "contraction: schemes per pair");

  SynthOpts synth_opts;
  auto* synth_cmd =
      app.add_subcommand("synth", "Generate a power-law synthetic dataset");
  synth_cmd->add_option("--out", synth_opts.out, "output dataset path")->required();
  synth_cmd->add_option("--N", synth_opts.spec.N, "sample count")->required();
  synth_cmd->add_option("--d", synth_opts.spec.d, "feature dimension")->required();
  synth_cmd->add_option("--p", synth_opts.spec.p, "class count")->required();
  synth_cmd->add_option("--zipf", synth_opts.spec.zipf_exponent,
                        "power-law exponent of class frequencies");
  synth_cmd->add_option("--features-per-class", synth_opts.spec.features_per_class,
                        "prototype features per class");
  synth_cmd->add_option("--noise-rate", synth_opts.spec.noise_rate,
                        "expected noise features per prototype feature");
  synth_cmd->add_option("--labels-per-sample", synth_opts.spec.labels_per_sample,
                        "positive classes per sample");
  synth_cmd->add_option("--seed", synth_opts.spec.seed, "generator seed");

  PartitionOpts part_opts;
  auto* part_cmd = app.add_subcommand(
      "partition", "Build a frequent-class non-iid client partition");
  part_cmd->add_option("--data", part_opts.data_path, "dataset path")->required();
  part_cmd->add_option("--K", part_opts.K, "client count")
      ->required()
      ->check(CLI::PositiveNumber);
  part_cmd->add_option("--F", part_opts.F,
                       "frequent-class count (0 picks the 30%-coverage default)");
  part_cmd->add_option("--seed", part_opts.seed, "assignment seed");
  part_cmd->add_option("--out", part_opts.out, "output plan path")->required();

  ReportOpts report_opts;
  auto* report_cmd = app.add_subcommand(
      "report", "Compare completed runs; the first directory is the baseline");
  report_cmd->add_option("dirs", report_opts.dirs, "run output directories")
      ->required()
      ->expected(-1);
  report_cmd->add_option("--out", report_opts.out, "also write the CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and friends
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run_cmd->parsed()) return do_run(run_opts);
    if (verify_cmd->parsed()) return do_verify(verify_opts);
    if (synth_cmd->parsed()) return do_synth(synth_opts);
    if (part_cmd->parsed()) return do_partition(part_opts);
    if (report_cmd->parsed()) return do_report(report_opts);
    std::cerr << "no subcommand\n";
    return kExitConfig;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}

}  // namespace fedsketch::cli
