#include "fedsketch/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fedsketch/errors.hpp"
#include "fedsketch/io.hpp"

namespace fedsketch::hashing {

std::vector<HashFunctionSpec> draw_tables(std::uint64_t range, std::uint32_t count,
                                          std::uint64_t seed, std::uint64_t salt) {
  if (range == 0) throw std::invalid_argument("draw_tables: range must be positive");
  RngStream rng(seed, StreamTag::scheme_tables, {salt});
  std::vector<HashFunctionSpec> tables(count);
  for (auto& t : tables) {
    t.a = 1 + rng.next_below(kHashPrime - 1);  // a != 0 keeps the map non-constant
    t.b = rng.next_below(kHashPrime);
    t.prime = kHashPrime;
    t.range = range;
  }
  return tables;
}

LabelHashScheme make_scheme(std::uint32_t p, std::uint32_t B, std::uint32_t R,
                            std::uint64_t seed) {
  if (p == 0) throw std::invalid_argument("make_scheme: p must be positive");
  if (B == 0 || B > p)
    throw std::invalid_argument("make_scheme: need 1 <= B <= p, got B=" +
                                std::to_string(B) + " p=" + std::to_string(p));
  if (R == 0) throw std::invalid_argument("make_scheme: R must be positive");
  LabelHashScheme s;
  s.p = p;
  s.B = B;
  s.R = R;
  s.seed = seed;
  s.tables = draw_tables(B, R, seed);
  return s;
}

Eigen::MatrixXi bucket_labels(const LabelHashScheme& scheme,
                              const std::vector<std::uint32_t>& positives) {
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(scheme.R, scheme.B);
  for (std::uint32_t l : positives) {
    if (l >= scheme.p)
      throw std::invalid_argument("bucket_labels: label " + std::to_string(l) +
                                  " outside [0, " + std::to_string(scheme.p) + ")");
    for (std::uint32_t j = 0; j < scheme.R; ++j)
      out(j, static_cast<Eigen::Index>(scheme.bucket(j, l))) = 1;
  }
  return out;
}

Eigen::VectorXd merge_scores(const LabelHashScheme& scheme,
                             const std::vector<Eigen::VectorXd>& table_scores,
                             MergeMode mode) {
  if (table_scores.size() != scheme.R)
    throw std::invalid_argument("merge_scores: expected one score vector per table");
  for (const auto& v : table_scores)
    if (v.size() != static_cast<Eigen::Index>(scheme.B))
      throw std::invalid_argument("merge_scores: score vector length != B");

  Eigen::VectorXd out(scheme.p);
  std::vector<double> vals(scheme.R);
  for (std::uint32_t l = 0; l < scheme.p; ++l) {
    for (std::uint32_t j = 0; j < scheme.R; ++j)
      vals[j] = table_scores[j][scheme.bucket(j, l)];
    if (mode == MergeMode::mean) {
      double sum = 0.0;
      for (double v : vals) sum += v;
      out[l] = sum / scheme.R;
    } else {
      std::sort(vals.begin(), vals.end());
      const std::size_t m = vals.size() / 2;
      out[l] = (vals.size() % 2 == 1) ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
    }
  }
  return out;
}

std::uint64_t min_table_size(std::uint32_t p, double delta, std::uint32_t R) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("min_table_size: delta must be in (0, 1)");
  if (R == 0) throw std::invalid_argument("min_table_size: R must be positive");
  if (p < 2) return 1;  // no label pairs, one bucket already collision-free

  const long double target =
      static_cast<long double>(p) * (p - 1) / (2.0L * static_cast<long double>(delta));
  // base^R >= target, evaluated in long double (ample for 32-bit p, small R)
  const auto reaches = [&](std::uint64_t base) {
    long double acc = 1.0L;
    for (std::uint32_t i = 0; i < R; ++i) {
      acc *= static_cast<long double>(base);
      if (acc >= target) return true;
    }
    return acc >= target;
  };

  auto c = static_cast<std::uint64_t>(
      std::ceil(std::pow(target, 1.0L / static_cast<long double>(R))));
  if (c < 1) c = 1;
  // pow() can land one off either way near exact integer roots; walk to the
  // true minimum.
  while (c > 1 && reaches(c - 1)) --c;
  while (!reaches(c)) ++c;
  return c;
}

CountSketch make_sketch(std::uint32_t width, std::uint32_t depth, std::uint64_t seed) {
  if (width == 0) throw std::invalid_argument("make_sketch: width must be positive");
  if (depth == 0) throw std::invalid_argument("make_sketch: depth must be positive");
  CountSketch s;
  s.width = width;
  s.depth = depth;
  s.seed = seed;
  s.index_hashes = draw_tables(width, depth, seed, /*salt=*/1);
  s.sign_hashes = draw_tables(2, depth, seed, /*salt=*/2);
  s.table = Eigen::MatrixXd::Zero(depth, width);
  return s;
}

void sketch_insert_one(CountSketch& sketch, std::uint64_t key, double value) {
  for (std::uint32_t j = 0; j < sketch.depth; ++j) {
    const auto col = static_cast<Eigen::Index>(sketch.index_hashes[j].eval(key));
    sketch.table(j, col) += value * sketch.sign_hashes[j].sign(key);
  }
}

void sketch_insert(CountSketch& sketch, const std::vector<std::uint64_t>& indices,
                   const std::vector<double>& values) {
  if (indices.size() != values.size())
    throw std::invalid_argument("sketch_insert: indices/values length mismatch");
  for (std::size_t i = 0; i < indices.size(); ++i)
    sketch_insert_one(sketch, indices[i], values[i]);
}

double sketch_retrieve(const CountSketch& sketch, std::uint64_t key) {
  std::vector<double> vals(sketch.depth);
  for (std::uint32_t j = 0; j < sketch.depth; ++j) {
    const auto col = static_cast<Eigen::Index>(sketch.index_hashes[j].eval(key));
    vals[j] = sketch.table(j, col) * sketch.sign_hashes[j].sign(key);
  }
  std::sort(vals.begin(), vals.end());
  const std::size_t m = vals.size() / 2;
  return (vals.size() % 2 == 1) ? vals[m] : 0.5 * (vals[m - 1] + vals[m]);
}

std::string scheme_to_text(const LabelHashScheme& scheme) {
  std::ostringstream out;
  out << scheme.p << ' ' << scheme.B << ' ' << scheme.R << ' ' << scheme.seed << '\n';
  for (const auto& t : scheme.tables)
    out << t.a << ' ' << t.b << ' ' << t.prime << ' ' << t.range << '\n';
  return out.str();
}

LabelHashScheme scheme_from_text(const std::string& text) {
  io::LineReader reader(text);
  std::string line;
  if (!reader.next(line)) throw data_error("scheme: empty input");
  auto head = io::split_ws(line);
  if (head.size() != 4) throw data_error("scheme: header must be 'p B R seed'");

  LabelHashScheme s;
  s.p = static_cast<std::uint32_t>(io::parse_uint(head[0], "scheme p"));
  s.B = static_cast<std::uint32_t>(io::parse_uint(head[1], "scheme B"));
  s.R = static_cast<std::uint32_t>(io::parse_uint(head[2], "scheme R"));
  s.seed = io::parse_uint(head[3], "scheme seed");
  if (s.p == 0 || s.B == 0 || s.B > s.p || s.R == 0)
    throw data_error("scheme: header violates 1 <= B <= p, R >= 1");

  s.tables.reserve(s.R);
  for (std::uint32_t j = 0; j < s.R; ++j) {
    if (!reader.next(line))
      throw data_error("scheme: expected " + std::to_string(s.R) + " table lines, got " +
                       std::to_string(j));
    auto tok = io::split_ws(line);
    if (tok.size() != 4)
      throw data_error("scheme line " + std::to_string(reader.line_number()) +
                       ": expected 'a b prime range'");
    HashFunctionSpec t;
    t.a = io::parse_uint(tok[0], "scheme a");
    t.b = io::parse_uint(tok[1], "scheme b");
    t.prime = io::parse_uint(tok[2], "scheme prime");
    t.range = io::parse_uint(tok[3], "scheme range");
    if (t.prime == 0 || t.a == 0 || t.a >= t.prime || t.b >= t.prime)
      throw data_error("scheme line " + std::to_string(reader.line_number()) +
                       ": need 1 <= a < prime and 0 <= b < prime");
    if (t.range != s.B)
      throw data_error("scheme line " + std::to_string(reader.line_number()) +
                       ": table range != B");
    s.tables.push_back(t);
  }
  while (reader.next(line))
    if (!io::split_ws(line).empty())
      throw data_error("scheme: trailing content at line " +
                       std::to_string(reader.line_number()));
  return s;
}

void save_scheme(const LabelHashScheme& scheme, const std::string& path) {
  io::atomic_write_file(path, scheme_to_text(scheme));
}

LabelHashScheme load_scheme(const std::string& path) {
  try {
    return scheme_from_text(io::read_file(path));
  } catch (const data_error& e) {
    throw data_error(path + ": " + e.what());
  }
}

}  // namespace fedsketch::hashing
