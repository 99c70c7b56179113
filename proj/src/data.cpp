#include "fedsketch/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fedsketch/errors.hpp"
#include "fedsketch/hashing.hpp"
#include "fedsketch/io.hpp"
#include "fedsketch/rng.hpp"

namespace fedsketch::data {

namespace {

// Sort by index, sum duplicate indices, drop zeros.
void normalize_features(std::vector<std::pair<std::uint32_t, double>>& feats,
                        SparseVector& out) {
  std::sort(feats.begin(), feats.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  out.indices.clear();
  out.values.clear();
  std::size_t i = 0;
  while (i < feats.size()) {
    const std::uint32_t idx = feats[i].first;
    double sum = 0.0;
    while (i < feats.size() && feats[i].first == idx) sum += feats[i++].second;
    const auto v = static_cast<float>(sum);
    if (v != 0.0f) {
      out.indices.push_back(idx);
      out.values.push_back(v);
    }
  }
}

void parse_sample_line(const std::string& line, std::size_t line_no,
                       std::uint32_t d, std::uint32_t p, Sample& sample) {
  const std::string where = "line " + std::to_string(line_no);
  // An empty label field is signalled by a leading separator (or an entirely
  // empty line for a sample with no labels and no features).
  const bool no_labels =
      line.empty() || line.front() == ' ' || line.front() == '\t';
  auto tokens = io::split_ws(line);

  sample.positives.clear();
  std::size_t first_feature = 0;
  if (!no_labels) {
    if (tokens.empty()) throw data_error(where + ": empty record");
    for (const auto& ls : io::split_char(tokens[0], ',')) {
      if (ls.empty()) throw data_error(where + ": empty label entry");
      const auto label = io::parse_uint(ls, where + " label");
      if (label >= p)
        throw data_error(where + ": label " + ls + " >= p=" + std::to_string(p));
      sample.positives.push_back(static_cast<std::uint32_t>(label));
    }
    first_feature = 1;
  }
  std::sort(sample.positives.begin(), sample.positives.end());
  sample.positives.erase(
      std::unique(sample.positives.begin(), sample.positives.end()),
      sample.positives.end());

  std::vector<std::pair<std::uint32_t, double>> feats;
  feats.reserve(tokens.size() - first_feature);
  for (std::size_t t = first_feature; t < tokens.size(); ++t) {
    const auto colon = tokens[t].find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == tokens[t].size())
      throw data_error(where + ": feature token '" + tokens[t] +
                       "' is not index:value");
    const auto idx = io::parse_uint(tokens[t].substr(0, colon), where + " feature index");
    if (idx >= d)
      throw data_error(where + ": feature index " + std::to_string(idx) +
                       " >= d=" + std::to_string(d));
    const double val =
        io::parse_double(tokens[t].substr(colon + 1), where + " feature value");
    feats.emplace_back(static_cast<std::uint32_t>(idx), val);
  }
  normalize_features(feats, sample.features);
}

}  // namespace

SparseDataset dataset_from_text(const std::string& text) {
  io::LineReader reader(text);
  std::string line;
  if (!reader.next(line)) throw data_error("dataset: empty input");
  auto head = io::split_ws(line);
  if (head.size() != 3) throw data_error("dataset: header must be 'N d p'");
  const auto n = io::parse_uint(head[0], "dataset N");
  const auto d = io::parse_uint(head[1], "dataset d");
  const auto p = io::parse_uint(head[2], "dataset p");
  if (n == 0 || d == 0 || p == 0)
    throw data_error("dataset: header sizes must be positive");

  SparseDataset ds;
  ds.d = static_cast<std::uint32_t>(d);
  ds.p = static_cast<std::uint32_t>(p);
  ds.samples.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    if (!reader.next(line))
      throw data_error("dataset: expected " + std::to_string(n) +
                       " records, file ends after " + std::to_string(i));
    parse_sample_line(line, reader.line_number(), ds.d, ds.p, ds.samples[i]);
  }
  while (reader.next(line))
    if (!line.empty())
      throw data_error("dataset: trailing content at line " +
                       std::to_string(reader.line_number()));
  return ds;
}

std::string dataset_to_text(const SparseDataset& ds) {
  std::ostringstream out;
  out << ds.samples.size() << ' ' << ds.d << ' ' << ds.p << '\n';
  for (const auto& s : ds.samples) {
    for (std::size_t i = 0; i < s.positives.size(); ++i) {
      if (i) out << ',';
      out << s.positives[i];
    }
    for (std::size_t i = 0; i < s.features.nnz(); ++i)
      out << ' ' << s.features.indices[i] << ':'
          << io::format_float(s.features.values[i]);
    out << '\n';
  }
  return out.str();
}

SparseDataset load_xc_dataset(const std::string& path) {
  try {
    return dataset_from_text(io::read_file(path));
  } catch (const data_error& e) {
    throw data_error(path + ": " + e.what());
  }
}

void save_xc_dataset(const SparseDataset& ds, const std::string& path) {
  io::atomic_write_file(path, dataset_to_text(ds));
}

SparseDataset feature_hash(const SparseDataset& ds, std::uint32_t d_tilde,
                           std::uint64_t seed) {
  if (d_tilde == 0)
    throw std::invalid_argument("feature_hash: d_tilde must be positive");
  const auto index_hash = hashing::draw_tables(d_tilde, 1, seed, /*salt=*/3)[0];
  const auto sign_hash = hashing::draw_tables(2, 1, seed, /*salt=*/4)[0];

  SparseDataset out;
  out.d = d_tilde;
  out.p = ds.p;
  out.samples.resize(ds.size());
  std::vector<std::pair<std::uint32_t, double>> feats;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const auto& src = ds.samples[s].features;
    feats.clear();
    for (std::size_t i = 0; i < src.nnz(); ++i) {
      const auto idx = static_cast<std::uint32_t>(index_hash.eval(src.indices[i]));
      feats.emplace_back(idx, sign_hash.sign(src.indices[i]) *
                                  static_cast<double>(src.values[i]));
    }
    out.samples[s].positives = ds.samples[s].positives;
    normalize_features(feats, out.samples[s].features);
  }
  return out;
}

std::pair<std::vector<std::uint64_t>, std::uint64_t> class_frequencies(
    const SparseDataset& ds) {
  std::vector<std::uint64_t> counts(ds.p, 0);
  std::uint64_t total = 0;
  for (const auto& s : ds.samples)
    for (std::uint32_t l : s.positives) {
      ++counts[l];
      ++total;
    }
  return {std::move(counts), total};
}

std::vector<std::uint32_t> top_frequent_classes(const SparseDataset& ds,
                                                std::uint32_t F) {
  if (F == 0 || F > ds.p)
    throw std::invalid_argument("top_frequent_classes: need 1 <= F <= p");
  auto [counts, total] = class_frequencies(ds);
  (void)total;
  std::vector<std::uint32_t> order(ds.p);
  for (std::uint32_t i = 0; i < ds.p; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (counts[a] != counts[b]) return counts[a] > counts[b];
                     return a < b;  // ties to the lower index
                   });
  std::vector<std::uint32_t> frequent(order.begin(), order.begin() + F);
  std::sort(frequent.begin(), frequent.end());
  return frequent;
}

std::uint32_t default_frequent_count(const SparseDataset& ds) {
  auto [counts, total] = class_frequencies(ds);
  if (total == 0) return 1;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  const auto threshold =
      static_cast<std::uint64_t>(std::ceil(0.3 * static_cast<double>(total)));
  std::uint64_t covered = 0;
  for (std::uint32_t f = 0; f < counts.size(); ++f) {
    covered += counts[f];
    if (covered >= threshold) return f + 1;
  }
  return ds.p;
}

PartitionPlan partition_noniid(const SparseDataset& ds, std::uint32_t K,
                               std::uint32_t F, std::uint64_t seed) {
  if (K == 0) throw std::invalid_argument("partition_noniid: K must be positive");
  PartitionPlan plan;
  plan.K = K;
  plan.F = F;
  plan.seed = seed;
  plan.frequent_set = top_frequent_classes(ds, F);
  plan.assignments.assign(K, {});

  // Each frequent class gets one home client; drawn in ascending class order.
  std::vector<std::uint32_t> home(ds.p, K);  // K = not frequent
  RngStream class_rng(seed, StreamTag::partition, {1});
  for (std::uint32_t c : plan.frequent_set)
    home[c] = static_cast<std::uint32_t>(class_rng.next_below(K));

  RngStream orphan_rng(seed, StreamTag::partition, {2});
  std::vector<std::uint32_t> owners;
  for (std::size_t s = 0; s < ds.size(); ++s) {
    owners.clear();
    for (std::uint32_t l : ds.samples[s].positives)
      if (home[l] < K) owners.push_back(home[l]);
    if (owners.empty())
      owners.push_back(static_cast<std::uint32_t>(orphan_rng.next_below(K)));
    std::sort(owners.begin(), owners.end());
    owners.erase(std::unique(owners.begin(), owners.end()), owners.end());
    for (std::uint32_t k : owners)
      plan.assignments[k].push_back(static_cast<std::uint32_t>(s));
  }
  return plan;
}

SparseDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.N == 0 || spec.d == 0 || spec.p == 0)
    throw std::invalid_argument("generate_synthetic: sizes must be positive");
  if (spec.zipf_exponent <= 0.0)
    throw std::invalid_argument("generate_synthetic: zipf_exponent must be > 0");
  if (spec.features_per_class == 0 || spec.features_per_class > spec.d)
    throw std::invalid_argument("generate_synthetic: need 1 <= features_per_class <= d");
  if (spec.labels_per_sample == 0 || spec.labels_per_sample > spec.p)
    throw std::invalid_argument("generate_synthetic: need 1 <= labels_per_sample <= p");
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate < 1.0))
    throw std::invalid_argument("generate_synthetic: noise_rate must be in [0, 1)");

  // Per-class prototype feature sets.
  std::vector<std::vector<std::uint32_t>> proto(spec.p);
  for (std::uint32_t c = 0; c < spec.p; ++c) {
    RngStream rng(spec.seed, StreamTag::synthetic, {1, c});
    std::set<std::uint32_t> feats;
    while (feats.size() < spec.features_per_class)
      feats.insert(static_cast<std::uint32_t>(rng.next_below(spec.d)));
    proto[c].assign(feats.begin(), feats.end());
  }

  // Zipf law over class index: class c drawn with weight (c+1)^(-exponent).
  std::vector<double> cum(spec.p);
  double total = 0.0;
  for (std::uint32_t c = 0; c < spec.p; ++c) {
    total += std::pow(static_cast<double>(c) + 1.0, -spec.zipf_exponent);
    cum[c] = total;
  }

  SparseDataset ds;
  ds.d = spec.d;
  ds.p = spec.p;
  ds.samples.resize(spec.N);
  for (std::uint32_t i = 0; i < spec.N; ++i) {
    RngStream rng(spec.seed, StreamTag::synthetic, {2, i});
    auto& sample = ds.samples[i];

    std::set<std::uint32_t> classes;
    while (classes.size() < spec.labels_per_sample) {
      const double u = rng.next_double() * total;
      const auto it = std::upper_bound(cum.begin(), cum.end(), u);
      const auto c = static_cast<std::uint32_t>(
          std::min<std::ptrdiff_t>(it - cum.begin(), spec.p - 1));
      classes.insert(c);
    }
    sample.positives.assign(classes.begin(), classes.end());

    std::set<std::uint32_t> feats;
    for (std::uint32_t c : sample.positives)
      feats.insert(proto[c].begin(), proto[c].end());
    // One noise coin per prototype feature, so noise scales with signal size.
    const std::size_t base = feats.size();
    for (std::size_t flip = 0; flip < base; ++flip)
      if (rng.next_double() < spec.noise_rate)
        feats.insert(static_cast<std::uint32_t>(rng.next_below(spec.d)));
    sample.features.indices.assign(feats.begin(), feats.end());
    sample.features.values.assign(feats.size(), 1.0f);
  }
  return ds;
}

std::pair<SparseDataset, SparseDataset> split_holdout(const SparseDataset& ds,
                                                      double fraction,
                                                      std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_holdout: fraction must be in [0, 1)");
  const std::size_t n = ds.size();
  const auto n_test = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));

  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  RngStream rng(seed, StreamTag::split);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto j = i + rng.next_below(n - i);
    std::swap(order[i], order[j]);
  }
  std::vector<bool> is_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  SparseDataset train, test;
  train.d = test.d = ds.d;
  train.p = test.p = ds.p;
  for (std::size_t i = 0; i < n; ++i)
    (is_test[i] ? test : train).samples.push_back(ds.samples[i]);
  return {std::move(train), std::move(test)};
}

std::string plan_to_text(const PartitionPlan& plan) {
  std::ostringstream out;
  out << plan.K << ' ' << plan.F << ' ' << plan.seed << '\n';
  for (const auto& client : plan.assignments) {
    for (std::size_t i = 0; i < client.size(); ++i) {
      if (i) out << ' ';
      out << client[i];
    }
    out << '\n';
  }
  return out.str();
}

PartitionPlan plan_from_text(const std::string& text) {
  io::LineReader reader(text);
  std::string line;
  if (!reader.next(line)) throw data_error("plan: empty input");
  auto head = io::split_ws(line);
  if (head.size() != 3) throw data_error("plan: header must be 'K F seed'");

  PartitionPlan plan;
  plan.K = static_cast<std::uint32_t>(io::parse_uint(head[0], "plan K"));
  plan.F = static_cast<std::uint32_t>(io::parse_uint(head[1], "plan F"));
  plan.seed = io::parse_uint(head[2], "plan seed");
  if (plan.K == 0) throw data_error("plan: K must be positive");

  plan.assignments.resize(plan.K);
  for (std::uint32_t k = 0; k < plan.K; ++k) {
    if (!reader.next(line))
      throw data_error("plan: expected " + std::to_string(plan.K) +
                       " client lines, got " + std::to_string(k));
    for (const auto& tok : io::split_ws(line))
      plan.assignments[k].push_back(static_cast<std::uint32_t>(
          io::parse_uint(tok, "plan sample index (line " +
                                  std::to_string(reader.line_number()) + ")")));
  }
  while (reader.next(line))
    if (!io::split_ws(line).empty())
      throw data_error("plan: trailing content at line " +
                       std::to_string(reader.line_number()));
  return plan;
}

void save_plan(const PartitionPlan& plan, const std::string& path) {
  io::atomic_write_file(path, plan_to_text(plan));
}

PartitionPlan load_plan(const std::string& path) {
  try {
    return plan_from_text(io::read_file(path));
  } catch (const data_error& e) {
    throw data_error(path + ": " + e.what());
  }
}

void validate_plan(const PartitionPlan& plan, std::size_t N) {
  if (plan.K == 0 || plan.assignments.size() != plan.K)
    throw data_error("plan: client count mismatch");
  std::vector<bool> covered(N, false);
  for (std::uint32_t k = 0; k < plan.K; ++k) {
    auto sorted = plan.assignments[k];
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted[i] >= N)
        throw data_error("plan: client " + std::to_string(k) + " references sample " +
                         std::to_string(sorted[i]) + " >= N=" + std::to_string(N));
      if (i > 0 && sorted[i] == sorted[i - 1])
        throw data_error("plan: client " + std::to_string(k) +
                         " lists sample " + std::to_string(sorted[i]) + " twice");
      covered[sorted[i]] = true;
    }
  }
  for (std::size_t i = 0; i < N; ++i)
    if (!covered[i])
      throw data_error("plan: sample " + std::to_string(i) +
                       " is not assigned to any client");
}

}  // namespace fedsketch::data
