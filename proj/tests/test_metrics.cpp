#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"
#include "fedsketch/hashing.hpp"
#include "fedsketch/metrics.hpp"
#include "fedsketch/rng.hpp"
#include "helpers.hpp"

using namespace fedsketch;

namespace {

// Independent top-k oracle: sort (score, index) with the same tie rule and
// count label intersections by scanning.
double brute_topk(const Eigen::MatrixXd& scores,
                  const std::vector<std::vector<std::uint32_t>>& labels,
                  std::uint32_t k) {
  std::uint64_t hits = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    std::vector<std::pair<double, std::uint32_t>> row;
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      row.emplace_back(scores(i, c), static_cast<std::uint32_t>(c));
    std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::uint32_t r = 0; r < k; ++r)
      for (auto l : labels[i])
        if (l == row[r].second) ++hits;
  }
  return static_cast<double>(hits) /
         (static_cast<double>(scores.rows()) * k);
}

struct RandomEval {
  Eigen::MatrixXd scores;
  std::vector<std::vector<std::uint32_t>> labels;
};

RandomEval random_eval(std::uint32_t n, std::uint32_t p, std::uint64_t seed,
                       bool with_ties) {
  RandomEval out;
  out.scores.resize(n, p);
  RngStream rng(seed, StreamTag::analysis, {90});
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t c = 0; c < p; ++c) {
      double v = rng.next_gaussian();
      // Quantize some rows so exact ties actually occur.
      if (with_ties && rng.next_below(3) == 0) v = std::round(v * 2) / 2.0;
      out.scores(i, c) = v;
    }
    std::set<std::uint32_t> pos;
    const auto npos = 1 + rng.next_below(std::min<std::uint64_t>(p, 4));
    while (pos.size() < npos) pos.insert(static_cast<std::uint32_t>(rng.next_below(p)));
    out.labels.emplace_back(pos.begin(), pos.end());
  }
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("top-k precision on a hand-checked example") {
  Eigen::MatrixXd scores(2, 6);
  scores << 0.9, 0.1, 0.8, 0.7, 0.0, 0.2,  // top3 = {0, 2, 3}
      0.0, 0.0, 0.0, 0.0, 0.0, 1.0;        // top3 = {5, 0, 1} (ties to low index)
  std::vector<std::vector<std::uint32_t>> labels = {{0, 3}, {1, 5}};
  // top1 picks class 0 and class 5, both positive: 2 hits over 2 slots.
  CHECK(metrics::topk_accuracy(scores, labels, 1) == doctest::Approx(1.0));
  // Sample 0 hits {0,3}; sample 1 hits {5,1}: 4 hits over 2*3 slots.
  CHECK(metrics::topk_accuracy(scores, labels, 3) == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("tied scores resolve toward the lower class index") {
  Eigen::MatrixXd scores(1, 5);
  scores << 1.0, 1.0, 1.0, 1.0, 1.0;
  std::vector<std::vector<std::uint32_t>> labels = {{2}};
  // top3 of all-equal scores = {0, 1, 2}.
  CHECK(metrics::topk_accuracy(scores, labels, 3) == doctest::Approx(1.0 / 3.0));
  CHECK(metrics::topk_accuracy(scores, labels, 1) == 0.0);
}

TEST_CASE("top-k precision matches a brute-force oracle") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto ev = random_eval(25, 5 + seed % 20, seed, seed % 2 == 1);
    for (std::uint32_t k : {1u, 3u, 5u}) {
      const double got = metrics::topk_accuracy(ev.scores, ev.labels, k);
      CHECK(got == doctest::Approx(brute_topk(ev.scores, ev.labels, k))
                       .epsilon(1e-12));
    }
  }
}

TEST_CASE("top-k input validation") {
  Eigen::MatrixXd scores(1, 3);
  scores << 1.0, 2.0, 3.0;
  std::vector<std::vector<std::uint32_t>> labels = {{0}};
  CHECK_THROWS_AS(metrics::topk_accuracy(scores, labels, 0), std::invalid_argument);
  CHECK_THROWS_AS(metrics::topk_accuracy(scores, labels, 4), std::invalid_argument);
  std::vector<std::vector<std::uint32_t>> wrong = {{0}, {1}};
  CHECK_THROWS_AS(metrics::topk_accuracy(scores, wrong, 1), std::invalid_argument);
  Eigen::MatrixXd bad(1, 3);
  bad << 1.0, std::nan(""), 0.0;
  CHECK_THROWS_AS(metrics::topk_accuracy(bad, labels, 1), std::invalid_argument);
}

TEST_CASE("frequent and infrequent parts sum to the total") {
  const auto ev = random_eval(60, 23, 5, true);
  const std::vector<std::uint32_t> frequent = {1, 4, 7, 8, 15, 22};
  for (std::uint32_t k : {1u, 3u, 5u}) {
    const auto [freq, infreq] =
        metrics::freq_split_accuracy(ev.scores, ev.labels, k, frequent);
    const double total = metrics::topk_accuracy(ev.scores, ev.labels, k);
    CHECK(std::abs(freq + infreq - total) < 1e-12);
    CHECK(freq >= 0.0);
    CHECK(infreq >= 0.0);
  }

  // With every class frequent, the infrequent part vanishes.
  std::vector<std::uint32_t> all(23);
  for (std::uint32_t c = 0; c < 23; ++c) all[c] = c;
  const auto [freq_all, infreq_all] =
      metrics::freq_split_accuracy(ev.scores, ev.labels, 3, all);
  CHECK(infreq_all == 0.0);
  CHECK(freq_all == doctest::Approx(metrics::topk_accuracy(ev.scores, ev.labels, 3)));
}

TEST_CASE("streaming accumulator reproduces batch metrics") {
  const auto ev = random_eval(80, 17, 9, true);
  const std::vector<std::uint32_t> frequent = {0, 3, 9, 16};
  metrics::EvalAccumulator acc(frequent);
  for (Eigen::Index i = 0; i < ev.scores.rows(); ++i)
    acc.add(ev.scores.row(i), ev.labels[i]);
  const auto r = acc.result();
  CHECK(r.n_eval == 80);
  CHECK(r.top1 == doctest::Approx(metrics::topk_accuracy(ev.scores, ev.labels, 1)).epsilon(1e-12));
  CHECK(r.top3 == doctest::Approx(metrics::topk_accuracy(ev.scores, ev.labels, 3)).epsilon(1e-12));
  CHECK(r.top5 == doctest::Approx(metrics::topk_accuracy(ev.scores, ev.labels, 5)).epsilon(1e-12));
  const auto [f1, i1] = metrics::freq_split_accuracy(ev.scores, ev.labels, 1, frequent);
  CHECK(r.freq_top1 == doctest::Approx(f1).epsilon(1e-12));
  CHECK(r.infreq_top1 == doctest::Approx(i1).epsilon(1e-12));
  CHECK(r.mean_topk() == doctest::Approx((r.top1 + r.top3 + r.top5) / 3));
}

TEST_CASE("empty accumulator reports zeros") {
  metrics::EvalAccumulator acc({});
  const auto r = acc.result();
  CHECK(r.n_eval == 0);
  CHECK(r.top1 == 0.0);
  CHECK(r.top5 == 0.0);
}

TEST_CASE("accumulator requires a sorted frequent set") {
  CHECK_THROWS_AS(metrics::EvalAccumulator({3, 1}), std::invalid_argument);
}

TEST_CASE("kl divergence basics") {
  Eigen::VectorXd a(3), b(3);
  a << 0.6, 0.3, 0.1;
  b << 0.2, 0.5, 0.3;
  CHECK(metrics::kl_divergence(a, a) == doctest::Approx(0.0).epsilon(1e-15));
  const double ab = metrics::kl_divergence(a, b);
  const double ba = metrics::kl_divergence(b, a);
  CHECK(ab > 0.0);
  // Hand value: 0.6 ln 3 + 0.3 ln 0.6 + 0.1 ln(1/3)
  CHECK(ab == doctest::Approx(0.6 * std::log(3.0) + 0.3 * std::log(0.6) +
                              0.1 * std::log(1.0 / 3.0))
                  .epsilon(1e-12));
  CHECK(ab != doctest::Approx(ba).epsilon(1e-6));
}

TEST_CASE("kl divergence is invariant under a shared permutation") {
  Eigen::VectorXd a(4), b(4);
  a << 0.1, 0.2, 0.3, 0.4;
  b << 0.25, 0.25, 0.25, 0.25;
  Eigen::VectorXd ap(4), bp(4);
  const int perm[4] = {2, 0, 3, 1};
  for (int i = 0; i < 4; ++i) {
    ap[i] = a[perm[i]];
    bp[i] = b[perm[i]];
  }
  CHECK(metrics::kl_divergence(ap, bp) ==
        doctest::Approx(metrics::kl_divergence(a, b)).epsilon(1e-14));
}

TEST_CASE("kl divergence rejects invalid distributions") {
  Eigen::VectorXd a(2), zero(2), nosum(2);
  a << 0.5, 0.5;
  zero << 1.0, 0.0;
  nosum << 0.5, 0.6;
  CHECK_THROWS(metrics::kl_divergence(a, zero));
  CHECK_THROWS(metrics::kl_divergence(zero, a));
  CHECK_THROWS(metrics::kl_divergence(a, nosum));
  Eigen::VectorXd other(3);
  other << 0.3, 0.3, 0.4;
  CHECK_THROWS(metrics::kl_divergence(a, other));
}

TEST_CASE("bucket_proportions pushes mass through a table") {
  hashing::LabelHashScheme s;
  s.p = 4;
  s.B = 2;
  s.R = 1;
  s.seed = 0;
  s.tables.push_back({1, 0, hashing::kHashPrime, 2});  // h(l) = l mod 2
  Eigen::VectorXd pi(4);
  pi << 0.1, 0.2, 0.3, 0.4;
  const auto omega = metrics::bucket_proportions(pi, s, 0);
  REQUIRE(omega.size() == 2);
  CHECK(omega[0] == doctest::Approx(0.4));  // classes 0, 2
  CHECK(omega[1] == doctest::Approx(0.6));  // classes 1, 3
  CHECK(omega.sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bucket_proportions preserves total mass on random schemes") {
  const auto s = hashing::make_scheme(40, 7, 3, 21);
  RngStream rng(4, StreamTag::analysis, {17});
  Eigen::VectorXd pi(40);
  double total = 0.0;
  for (int i = 0; i < 40; ++i) {
    pi[i] = -std::log(1.0 - rng.next_double());
    total += pi[i];
  }
  pi /= total;
  for (std::uint32_t j = 0; j < 3; ++j) {
    const auto omega = metrics::bucket_proportions(pi, s, j);
    CHECK(omega.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(omega.minCoeff() >= 0.0);
  }
  CHECK_THROWS_AS(metrics::bucket_proportions(pi, s, 3), std::invalid_argument);
}

TEST_CASE("smoothed_distribution is strictly positive and normalized") {
  const std::vector<std::uint64_t> counts = {0, 5, 0, 15};
  const auto d = metrics::smoothed_distribution(counts);
  REQUIRE(d.size() == 4);
  CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.minCoeff() > 0.0);
  CHECK(d[3] > d[1]);
  CHECK(d[1] > d[0]);

  // Explicit epsilon: (c_i + e) / (total + p e).
  const auto e = metrics::smoothed_distribution(counts, 2.0);
  CHECK(e[0] == doctest::Approx(2.0 / 28.0));
  CHECK(e[3] == doctest::Approx(17.0 / 28.0));
}

TEST_SUITE_END();
