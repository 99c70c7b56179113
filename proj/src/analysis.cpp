#include "fedsketch/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fedsketch/errors.hpp"
#include "fedsketch/hashing.hpp"
#include "fedsketch/io.hpp"
#include "fedsketch/metrics.hpp"
#include "fedsketch/rng.hpp"

namespace fedsketch::analysis {

namespace {

double mc_stderr(double sum, double sum_sq, std::uint64_t n) {
  if (n < 2) return 0.0;
  const double mean = sum / static_cast<double>(n);
  const double var =
      std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
  return std::sqrt(var / static_cast<double>(n));
}

// One multiply-mod-prime function with range B, rejected until h(j) = 0.
hashing::HashFunctionSpec draw_conditioned(std::uint32_t B, std::uint32_t j,
                                           RngStream& rng) {
  hashing::HashFunctionSpec h;
  h.prime = hashing::kHashPrime;
  h.range = B;
  do {
    h.a = 1 + rng.next_below(hashing::kHashPrime - 1);
    h.b = rng.next_below(hashing::kHashPrime);
  } while (h.eval(j) != 0);
  return h;
}

// Marks positives of a Bernoulli(q) label column via geometric skips;
// returns how many previously unmarked samples were hit.
std::uint64_t mark_bernoulli(double q, std::uint64_t N, RngStream& rng,
                             std::vector<std::uint32_t>& stamp,
                             std::uint32_t gen) {
  if (q <= 0.0) return 0;
  std::uint64_t newly = 0;
  if (q >= 1.0) {
    for (std::uint64_t s = 0; s < N; ++s)
      if (stamp[s] != gen) {
        stamp[s] = gen;
        ++newly;
      }
    return newly;
  }
  const double log1mq = std::log1p(-q);
  double pos = -1.0;
  for (;;) {
    const double u = 1.0 - rng.next_double();  // (0, 1]
    pos += 1.0 + std::floor(std::log(u) / log1mq);
    if (pos >= static_cast<double>(N)) return newly;
    const auto s = static_cast<std::uint64_t>(pos);
    if (stamp[s] != gen) {
      stamp[s] = gen;
      ++newly;
    }
  }
}

double bucket_gain_bound(double n_j, double n_lab, double B) {
  return n_j + (n_lab - n_j) / B - n_lab / (B * B);
}

}  // namespace

std::string reports_to_csv(const std::vector<VerificationReport>& reports) {
  std::ostringstream out;
  out << "statement,trials,statistic,bound,margin,stderr,pass\n";
  for (const auto& r : reports)
    out << r.statement << ',' << r.trials << ',' << io::format_double(r.statistic)
        << ',' << io::format_double(r.bound) << ',' << io::format_double(r.margin)
        << ',' << io::format_double(r.stderr_val) << ','
        << (r.pass ? "true" : "false") << '\n';
  return out.str();
}

std::vector<VerificationReport> reports_from_csv(const std::string& text) {
  io::LineReader reader(text);
  std::string line;
  if (!reader.next(line) ||
      line != "statement,trials,statistic,bound,margin,stderr,pass")
    throw data_error("report csv: bad header");
  std::vector<VerificationReport> reports;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto tok = io::split_char(line, ',');
    if (tok.size() != 7)
      throw data_error("report csv: line " + std::to_string(reader.line_number()) +
                       " has " + std::to_string(tok.size()) + " fields");
    VerificationReport r;
    r.statement = tok[0];
    r.trials = io::parse_uint(tok[1], "report trials");
    r.statistic = io::parse_double(tok[2], "report statistic");
    r.bound = io::parse_double(tok[3], "report bound");
    r.margin = io::parse_double(tok[4], "report margin");
    r.stderr_val = io::parse_double(tok[5], "report stderr");
    if (tok[6] == "true")
      r.pass = true;
    else if (tok[6] == "false")
      r.pass = false;
    else
      throw data_error("report csv: bad pass flag '" + tok[6] + "'");
    reports.push_back(std::move(r));
  }
  return reports;
}

std::string reports_to_kv(const std::vector<VerificationReport>& reports) {
  std::ostringstream out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (i) out << '\n';
    out << "statement=" << r.statement << '\n'
        << "trials=" << r.trials << '\n'
        << "statistic=" << io::format_double(r.statistic) << '\n'
        << "bound=" << io::format_double(r.bound) << '\n'
        << "margin=" << io::format_double(r.margin) << '\n'
        << "stderr=" << io::format_double(r.stderr_val) << '\n'
        << "pass=" << (r.pass ? "true" : "false") << '\n';
  }
  return out.str();
}

VerificationReport verify_bucket_gain(std::uint64_t N,
                                 const std::vector<std::uint64_t>& counts,
                                 std::uint32_t B, std::uint32_t class_j,
                                 std::uint64_t trials, std::uint64_t seed) {
  if (N == 0 || counts.empty())
    throw std::invalid_argument("verify_bucket_gain: empty problem");
  if (B < 2) throw std::invalid_argument("verify_bucket_gain: B must be >= 2");
  if (class_j >= counts.size())
    throw std::invalid_argument("verify_bucket_gain: class index out of range");
  if (trials == 0) throw std::invalid_argument("verify_bucket_gain: trials must be >= 1");
  std::uint64_t n_lab = 0;
  for (auto c : counts) {
    if (c > N)
      throw std::invalid_argument("verify_bucket_gain: class count exceeds N");
    n_lab += c;
  }

  const auto p = static_cast<std::uint32_t>(counts.size());
  std::vector<std::uint32_t> stamp(N, 0);
  double sum = 0.0, sum_sq = 0.0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    RngStream rng(seed, StreamTag::analysis, {1, t});
    const auto h = draw_conditioned(B, class_j, rng);
    const auto gen = static_cast<std::uint32_t>(t + 1);
    std::uint64_t count = 0;
    for (std::uint32_t l = 0; l < p; ++l) {
      if (h.eval(l) != 0) continue;
      count += mark_bernoulli(static_cast<double>(counts[l]) / static_cast<double>(N),
                              N, rng, stamp, gen);
    }
    sum += static_cast<double>(count);
    sum_sq += static_cast<double>(count) * static_cast<double>(count);
  }

  VerificationReport r;
  r.statement = "bucket_gain_p" + std::to_string(p) + "_B" + std::to_string(B) + "_j" +
                std::to_string(class_j);
  r.trials = trials;
  r.statistic = sum / static_cast<double>(trials);
  r.bound = bucket_gain_bound(static_cast<double>(counts[class_j]),
                         static_cast<double>(n_lab), static_cast<double>(B));
  r.margin = r.statistic - r.bound;
  r.stderr_val = mc_stderr(sum, sum_sq, trials);
  r.pass = r.margin >= -3.0 * r.stderr_val;
  return r;
}

VerificationReport verify_bucket_gain_dataset(const data::SparseDataset& ds,
                                         std::uint32_t B, std::uint32_t class_j,
                                         std::uint64_t trials, std::uint64_t seed) {
  if (B < 2) throw std::invalid_argument("verify_bucket_gain_dataset: B must be >= 2");
  if (class_j >= ds.p)
    throw std::invalid_argument("verify_bucket_gain_dataset: class index out of range");
  if (trials == 0)
    throw std::invalid_argument("verify_bucket_gain_dataset: trials must be >= 1");

  // Posting lists: samples positive in each class.
  std::vector<std::vector<std::uint32_t>> posting(ds.p);
  for (std::size_t s = 0; s < ds.size(); ++s)
    for (std::uint32_t l : ds.samples[s].positives)
      posting[l].push_back(static_cast<std::uint32_t>(s));
  auto [counts, n_lab] = data::class_frequencies(ds);

  std::vector<std::uint32_t> stamp(ds.size(), 0);
  double sum = 0.0, sum_sq = 0.0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    RngStream rng(seed, StreamTag::analysis, {1, t});
    const auto h = draw_conditioned(B, class_j, rng);
    const auto gen = static_cast<std::uint32_t>(t + 1);
    std::uint64_t count = 0;
    for (std::uint32_t l = 0; l < ds.p; ++l) {
      if (h.eval(l) != 0) continue;
      for (std::uint32_t s : posting[l])
        if (stamp[s] != gen) {
          stamp[s] = gen;
          ++count;
        }
    }
    sum += static_cast<double>(count);
    sum_sq += static_cast<double>(count) * static_cast<double>(count);
  }

  VerificationReport r;
  r.statement = "bucket_gain_data_p" + std::to_string(ds.p) + "_B" + std::to_string(B) +
                "_j" + std::to_string(class_j);
  r.trials = trials;
  r.statistic = sum / static_cast<double>(trials);
  r.bound = bucket_gain_bound(static_cast<double>(counts[class_j]),
                         static_cast<double>(n_lab), static_cast<double>(B));
  r.margin = r.statistic - r.bound;
  r.stderr_val = mc_stderr(sum, sum_sq, trials);
  r.pass = r.margin >= -3.0 * r.stderr_val;
  return r;
}

VerificationReport verify_collision_rate(std::uint32_t p, std::uint64_t B,
                                 std::uint32_t R, double delta,
                                 std::uint64_t trials, std::uint64_t seed) {
  if (p < 2) throw std::invalid_argument("verify_collision_rate: need p >= 2");
  if (B == 0) throw std::invalid_argument("verify_collision_rate: B must be positive");
  if (R == 0 || R > 8)
    throw std::invalid_argument("verify_collision_rate: need 1 <= R <= 8");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("verify_collision_rate: delta must be in (0, 1)");
  if (trials == 0) throw std::invalid_argument("verify_collision_rate: trials must be >= 1");

  std::vector<std::array<std::uint64_t, 8>> keys(p);
  std::uint64_t failures = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto trial_seed = RngStream(seed, StreamTag::analysis, {2, t}).next_u64();
    const auto tables = hashing::draw_tables(B, R, trial_seed);
    for (std::uint32_t l = 0; l < p; ++l) {
      keys[l].fill(0);
      for (std::uint32_t j = 0; j < R; ++j) keys[l][j] = tables[j].eval(l);
    }
    std::sort(keys.begin(), keys.end());
    for (std::uint32_t l = 1; l < p; ++l)
      if (keys[l] == keys[l - 1]) {
        ++failures;
        break;
      }
  }

  VerificationReport r;
  r.statement = "collision_p" + std::to_string(p) + "_R" + std::to_string(R) + "_B" +
                std::to_string(B);
  r.trials = trials;
  r.statistic = static_cast<double>(failures) / static_cast<double>(trials);
  r.bound = delta;
  r.margin = r.statistic - r.bound;
  r.stderr_val =
      std::sqrt(std::max(0.0, r.statistic * (1.0 - r.statistic)) /
                static_cast<double>(trials));
  r.pass = r.statistic <= delta + 3.0 * r.stderr_val;
  return r;
}

VerificationReport verify_kl_contraction(const Eigen::Ref<const Eigen::VectorXd>& pi_a,
                                   const Eigen::Ref<const Eigen::VectorXd>& pi_b,
                                   std::uint32_t B, std::uint64_t schemes,
                                   std::uint64_t seed) {
  if (schemes == 0)
    throw std::invalid_argument("verify_kl_contraction: schemes must be >= 1");
  const auto p = static_cast<std::uint32_t>(pi_a.size());
  const double kl_class = metrics::kl_divergence(pi_a, pi_b);

  std::uint64_t violations = 0;
  double sum = 0.0, sum_sq = 0.0;
  Eigen::VectorXd kept_a(B), kept_b(B);
  for (std::uint64_t t = 0; t < schemes; ++t) {
    const auto scheme_seed = RngStream(seed, StreamTag::analysis, {3, t}).next_u64();
    const auto scheme = hashing::make_scheme(p, B, 1, scheme_seed);
    const auto omega_a = metrics::bucket_proportions(pi_a, scheme, 0);
    const auto omega_b = metrics::bucket_proportions(pi_b, scheme, 0);
    // A bucket is empty for a iff it is empty for b (no class maps to it);
    // such buckets carry no mass and are excluded from the divergence.
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < omega_a.size(); ++i)
      if (omega_a[i] > 0.0 || omega_b[i] > 0.0) {
        kept_a[kept] = omega_a[i];
        kept_b[kept] = omega_b[i];
        ++kept;
      }
    const double kl_bucket =
        metrics::kl_divergence(kept_a.head(kept), kept_b.head(kept));
    if (kl_bucket > kl_class + 1e-12) ++violations;
    sum += kl_bucket;
    sum_sq += kl_bucket * kl_bucket;
  }

  VerificationReport r;
  r.statement = "kl_contraction_p" + std::to_string(p) + "_B" + std::to_string(B);
  r.trials = schemes;
  r.statistic = sum / static_cast<double>(schemes);
  r.bound = kl_class;
  r.margin = r.statistic - r.bound;
  r.stderr_val = mc_stderr(sum, sum_sq, schemes);
  r.pass = violations == 0;
  return r;
}

VerificationReport mse_scaling_demo(const std::vector<std::uint64_t>& sizes,
                                    const std::vector<double>& sigmas,
                                    std::uint64_t trials, std::uint64_t seed,
                                    std::vector<double>* mse_out) {
  if (sizes.size() < 2)
    throw std::invalid_argument("mse_scaling_demo: need at least 2 sizes");
  for (auto n : sizes)
    if (n < 2) throw std::invalid_argument("mse_scaling_demo: sizes must be >= 2");
  if (sigmas.empty())
    throw std::invalid_argument("mse_scaling_demo: need at least 1 coordinate");
  if (trials == 0)
    throw std::invalid_argument("mse_scaling_demo: trials must be >= 1");

  const auto dim = sigmas.size();
  std::vector<double> mse(sizes.size(), 0.0);
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const auto n = sizes[si];
    double acc = 0.0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      RngStream rng(seed, StreamTag::analysis, {4, si, t});
      double err_sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        double mean = 0.0;
        for (std::uint64_t i = 0; i < n; ++i)
          mean += sigmas[d] * rng.next_gaussian();
        mean /= static_cast<double>(n);
        err_sq += mean * mean;  // true mean is zero
      }
      acc += err_sq;
    }
    mse[si] = acc / static_cast<double>(trials);
  }
  if (mse_out) *mse_out = mse;

  VerificationReport r;
  r.statement = "mse_scaling_n" + std::to_string(sizes.front()) + "_to_" +
                std::to_string(sizes.back());
  r.trials = trials * sizes.size();
  r.bound = -1.0;

  bool all_zero = true;
  for (double m : mse) all_zero &= (m == 0.0);
  if (all_zero) {
    r.statistic = 0.0;
    r.margin = 1.0;
    r.pass = false;
    return r;
  }

  // Least-squares slope of log MSE against log n.
  const auto m = static_cast<double>(sizes.size());
  double sx = 0.0, sy = 0.0;
  std::vector<double> xs(sizes.size()), ys(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    xs[i] = std::log(static_cast<double>(sizes[i]));
    ys[i] = std::log(mse[i]);
    sx += xs[i];
    sy += ys[i];
  }
  const double xbar = sx / m, ybar = sy / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
  }
  const double slope = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double fit = ybar + slope * (xs[i] - xbar);
    ss_res += (ys[i] - fit) * (ys[i] - fit);
  }
  r.statistic = slope;
  r.margin = slope - r.bound;
  r.stderr_val =
      sizes.size() > 2 ? std::sqrt(ss_res / (m - 2.0) / sxx) : 0.0;
  r.pass = std::abs(slope + 1.0) <= 0.1;
  return r;
}

}  // namespace fedsketch::analysis
