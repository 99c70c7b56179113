#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedsketch/errors.hpp"
#include "fedsketch/hashing.hpp"
#include "fedsketch/rng.hpp"
#include "helpers.hpp"

using namespace fedsketch;
using hashing::HashFunctionSpec;
using hashing::LabelHashScheme;

TEST_SUITE_BEGIN("hashing");

TEST_CASE("hash eval matches hand-computed values") {
  HashFunctionSpec h{3, 5, hashing::kHashPrime, 10};
  CHECK(h.eval(7) == 6);  // (3*7+5) mod P = 26, 26 mod 10 = 6
  // x = P+1 wraps: 3*(P+1)+5 = 3P+8, mod P = 8, mod 10 = 8.
  CHECK(h.eval(2305843009213693952ULL) == 8);

  HashFunctionSpec g{hashing::kHashPrime - 1, hashing::kHashPrime - 1,
                     hashing::kHashPrime, 7};
  // (P-1)*(P-1) + (P-1) = (P-1)*P, divisible by P.
  CHECK(g.eval(hashing::kHashPrime - 1) == 0);
}

TEST_CASE("sign hash maps range-2 output to plus or minus one") {
  const auto tables = hashing::draw_tables(2, 1, 99, 4);
  const auto& h = tables[0];
  int minus = 0, plus = 0;
  for (std::uint64_t x = 0; x < 2000; ++x) {
    const int s = h.sign(x);
    REQUIRE((s == -1 || s == 1));
    (s == -1 ? minus : plus)++;
  }
  // Roughly balanced for a pairwise-independent family.
  CHECK(minus > 800);
  CHECK(plus > 800);
}

TEST_CASE("draw_tables is deterministic in seed and salt") {
  const auto a = hashing::draw_tables(50, 3, 7, 1);
  const auto b = hashing::draw_tables(50, 3, 7, 1);
  const auto c = hashing::draw_tables(50, 3, 8, 1);
  REQUIRE(a.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(a[i].a == b[i].a);
    CHECK(a[i].b == b[i].b);
    CHECK(a[i].range == 50);
    CHECK(a[i].a >= 1);
    CHECK(a[i].a < hashing::kHashPrime);
    CHECK(a[i].b < hashing::kHashPrime);
  }
  CHECK((a[0].a != c[0].a || a[0].b != c[0].b));
}

TEST_CASE("pairwise collision rate approaches one over table size") {
  // Fixed unequal keys; over random functions the collision probability of
  // the multiply-mod-prime family is ~1/B.
  const std::uint64_t B = 16;
  const int n = 20000;
  int collisions = 0;
  for (int i = 0; i < n; ++i) {
    const auto t = hashing::draw_tables(B, 1, 1234, static_cast<std::uint64_t>(i));
    if (t[0].eval(17) == t[0].eval(90041)) ++collisions;
  }
  const double rate = static_cast<double>(collisions) / n;
  const double se = std::sqrt((1.0 / B) * (1.0 - 1.0 / B) / n);
  CHECK(std::abs(rate - 1.0 / B) < 4 * se);
}

TEST_CASE("make_scheme validates arguments") {
  CHECK_THROWS_AS(hashing::make_scheme(10, 0, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(hashing::make_scheme(10, 11, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(hashing::make_scheme(10, 5, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(hashing::make_scheme(0, 1, 1, 1), std::invalid_argument);
  const auto s = hashing::make_scheme(10, 10, 2, 1);  // B == p is allowed
  CHECK(s.tables.size() == 2);
}

TEST_CASE("make_scheme is deterministic and seed-sensitive") {
  const auto a = hashing::make_scheme(100, 20, 4, 5);
  const auto b = hashing::make_scheme(100, 20, 4, 5);
  const auto c = hashing::make_scheme(100, 20, 4, 6);
  for (std::uint32_t j = 0; j < 4; ++j) {
    CHECK(a.tables[j].a == b.tables[j].a);
    CHECK(a.tables[j].b == b.tables[j].b);
  }
  bool differs = false;
  for (std::uint32_t j = 0; j < 4; ++j)
    differs = differs || a.tables[j].a != c.tables[j].a ||
              a.tables[j].b != c.tables[j].b;
  CHECK(differs);
  // Tables within one scheme differ from each other.
  CHECK((a.tables[0].a != a.tables[1].a || a.tables[0].b != a.tables[1].b));
}

TEST_CASE("bucket_labels is a union, not a sum") {
  // Identity table: bucket(l) = l. A second constant-ish table forces the
  // collision case.
  LabelHashScheme s;
  s.p = 6;
  s.B = 6;
  s.R = 2;
  s.seed = 0;
  s.tables.push_back({1, 0, hashing::kHashPrime, 6});  // identity on [0,6)
  s.tables.push_back({hashing::kHashPrime, 3, hashing::kHashPrime, 6});  // constant 3

  const auto y = hashing::bucket_labels(s, {1, 4});
  REQUIRE(y.rows() == 2);
  REQUIRE(y.cols() == 6);
  // Table 0: exactly buckets 1 and 4.
  for (int i = 0; i < 6; ++i)
    CHECK(y(0, i) == ((i == 1 || i == 4) ? 1 : 0));
  // Table 1: both positives collide in bucket 3; still a single 1.
  for (int i = 0; i < 6; ++i) CHECK(y(1, i) == (i == 3 ? 1 : 0));
}

TEST_CASE("bucket_labels rejects out-of-range labels") {
  const auto s = hashing::make_scheme(10, 4, 2, 1);
  CHECK_THROWS_AS(hashing::bucket_labels(s, {10}), std::invalid_argument);
}

TEST_CASE("bucket_labels row sums count distinct buckets") {
  const auto s = hashing::make_scheme(50, 7, 3, 11);
  const std::vector<std::uint32_t> pos = {0, 13, 26, 49};
  const auto y = hashing::bucket_labels(s, pos);
  for (std::uint32_t j = 0; j < 3; ++j) {
    std::set<std::uint32_t> buckets;
    for (auto l : pos) buckets.insert(s.bucket(j, l));
    int sum = 0;
    for (int i = 0; i < y.cols(); ++i) sum += y(j, i);
    CHECK(sum == static_cast<int>(buckets.size()));
  }
}

TEST_CASE("merge_scores gathers per-class scores through each table") {
  LabelHashScheme s;
  s.p = 4;
  s.B = 4;
  s.R = 2;
  s.seed = 0;
  s.tables.push_back({1, 0, hashing::kHashPrime, 4});  // identity
  s.tables.push_back({1, 1, hashing::kHashPrime, 4});  // shift by one

  std::vector<Eigen::VectorXd> table_scores(2);
  table_scores[0] = Eigen::Vector4d(10, 20, 30, 40);
  table_scores[1] = Eigen::Vector4d(1, 2, 3, 4);

  const auto mean = hashing::merge_scores(s, table_scores, hashing::MergeMode::mean);
  REQUIRE(mean.size() == 4);
  // class l: table0 reads slot l, table1 reads slot (l+1) mod 4.
  CHECK(mean[0] == doctest::Approx((10 + 2) / 2.0));
  CHECK(mean[1] == doctest::Approx((20 + 3) / 2.0));
  CHECK(mean[2] == doctest::Approx((30 + 4) / 2.0));
  CHECK(mean[3] == doctest::Approx((40 + 1) / 2.0));

  // Median with even R is the midpoint, which equals the mean for R=2.
  const auto med = hashing::merge_scores(s, table_scores, hashing::MergeMode::median);
  for (int l = 0; l < 4; ++l) CHECK(med[l] == doctest::Approx(mean[l]));
}

TEST_CASE("merge_scores median differs from mean for skewed triples") {
  LabelHashScheme s;
  s.p = 1;
  s.B = 1;
  s.R = 3;
  s.seed = 0;
  for (int j = 0; j < 3; ++j)
    s.tables.push_back({1, 0, hashing::kHashPrime, 1});
  std::vector<Eigen::VectorXd> scores(3);
  scores[0] = Eigen::VectorXd::Constant(1, 0.0);
  scores[1] = Eigen::VectorXd::Constant(1, 1.0);
  scores[2] = Eigen::VectorXd::Constant(1, 100.0);
  CHECK(hashing::merge_scores(s, scores, hashing::MergeMode::median)[0] == 1.0);
  CHECK(hashing::merge_scores(s, scores, hashing::MergeMode::mean)[0] ==
        doctest::Approx(101.0 / 3.0));
}

TEST_CASE("merge_scores validates shapes") {
  const auto s = hashing::make_scheme(10, 4, 2, 1);
  std::vector<Eigen::VectorXd> wrong_count(1, Eigen::VectorXd::Zero(4));
  CHECK_THROWS_AS(hashing::merge_scores(s, wrong_count), std::invalid_argument);
  std::vector<Eigen::VectorXd> wrong_len(2, Eigen::VectorXd::Zero(5));
  CHECK_THROWS_AS(hashing::merge_scores(s, wrong_len), std::invalid_argument);
}

TEST_CASE("min_table_size reference values") {
  CHECK(hashing::min_table_size(3993, 0.05, 4) == 113);
  CHECK(hashing::min_table_size(50, 0.1, 2) == 111);
  CHECK(hashing::min_table_size(2, 0.5, 1) == 2);
  // R = 1 closed form: ceil(p(p-1)/(2 delta)).
  CHECK(hashing::min_table_size(200, 0.05, 1) == 398000);
  // Exact integer root: 3*2/(2*0.1875) = 16, sqrt = 4. The exactness guard
  // must not round this up to 5.
  CHECK(hashing::min_table_size(3, 0.1875, 2) == 4);
}

TEST_CASE("min_table_size grows with p and shrinks with R and delta") {
  CHECK(hashing::min_table_size(400, 0.05, 2) >
        hashing::min_table_size(200, 0.05, 2));
  CHECK(hashing::min_table_size(200, 0.05, 4) <
        hashing::min_table_size(200, 0.05, 2));
  CHECK(hashing::min_table_size(200, 0.01, 2) >
        hashing::min_table_size(200, 0.05, 2));
}

TEST_CASE("min_table_size rejects bad arguments") {
  // With fewer than two labels there are no pairs; one bucket suffices.
  CHECK(hashing::min_table_size(1, 0.05, 2) == 1);
  CHECK_THROWS_AS(hashing::min_table_size(10, 0.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(hashing::min_table_size(10, 1.5, 2), std::invalid_argument);
  CHECK_THROWS_AS(hashing::min_table_size(10, 0.05, 0), std::invalid_argument);
}

TEST_CASE("count sketch recovers a sparse vector with ample width") {
  auto sk = hashing::make_sketch(4096, 5, 77);
  const std::vector<std::uint64_t> keys = {3, 999, 123456789, 42, 7};
  const std::vector<double> vals = {1.5, -2.25, 0.75, 10.0, -0.5};
  hashing::sketch_insert(sk, keys, vals);
  for (std::size_t i = 0; i < keys.size(); ++i)
    CHECK(hashing::sketch_retrieve(sk, keys[i]) == doctest::Approx(vals[i]).epsilon(1e-12));
  // An untouched key reads as zero at this load factor.
  CHECK(hashing::sketch_retrieve(sk, 31337) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("count sketch is linear in insertions") {
  auto a = hashing::make_sketch(64, 3, 5);
  auto b = hashing::make_sketch(64, 3, 5);
  hashing::sketch_insert_one(a, 10, 2.0);
  hashing::sketch_insert_one(a, 10, 3.5);
  hashing::sketch_insert_one(b, 10, 5.5);
  CHECK((a.table - b.table).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("count sketch estimates are nearly unbiased under load") {
  // 200 keys into width 256: collisions happen, the median estimate still
  // lands near the truth for most keys.
  auto sk = hashing::make_sketch(256, 5, 9);
  std::vector<std::uint64_t> keys;
  std::vector<double> vals;
  RngStream rng(9, StreamTag::analysis, {50});
  for (int i = 0; i < 200; ++i) {
    keys.push_back(1000 + i);
    vals.push_back(rng.next_gaussian());
  }
  hashing::sketch_insert(sk, keys, vals);
  double total_err = 0.0;
  for (std::size_t i = 0; i < keys.size(); ++i)
    total_err += std::abs(hashing::sketch_retrieve(sk, keys[i]) - vals[i]);
  CHECK(total_err / keys.size() < 0.5);
}

TEST_CASE("scheme text round-trips exactly") {
  const auto s = hashing::make_scheme(312330, 5000, 8, 123456);
  const auto text = hashing::scheme_to_text(s);
  const auto back = hashing::scheme_from_text(text);
  CHECK(back.p == s.p);
  CHECK(back.B == s.B);
  CHECK(back.R == s.R);
  CHECK(back.seed == s.seed);
  REQUIRE(back.tables.size() == s.tables.size());
  for (std::size_t j = 0; j < s.tables.size(); ++j) {
    CHECK(back.tables[j].a == s.tables[j].a);
    CHECK(back.tables[j].b == s.tables[j].b);
    CHECK(back.tables[j].prime == s.tables[j].prime);
    CHECK(back.tables[j].range == s.tables[j].range);
  }
  CHECK(hashing::scheme_to_text(back) == text);
}

TEST_CASE("scheme save and load through a file") {
  testutil::TempDir tmp("scheme");
  const auto s = hashing::make_scheme(100, 25, 4, 9);
  hashing::save_scheme(s, tmp.file("s.txt"));
  const auto back = hashing::load_scheme(tmp.file("s.txt"));
  CHECK(hashing::scheme_to_text(back) == hashing::scheme_to_text(s));
}

TEST_CASE("malformed scheme text is rejected") {
  const auto s = hashing::make_scheme(10, 4, 2, 1);
  auto text = hashing::scheme_to_text(s);
  CHECK_THROWS_AS(hashing::scheme_from_text("garbage"), data_error);
  CHECK_THROWS_AS(hashing::scheme_from_text(""), data_error);
  // Truncate: drop the last table line.
  const auto cut = text.rfind('\n', text.size() - 2);
  CHECK_THROWS_AS(hashing::scheme_from_text(text.substr(0, cut + 1)), data_error);
}

TEST_SUITE_END();
