#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include "fedsketch/data.hpp"
#include "fedsketch/rng.hpp"

namespace testutil {

// Scratch directory removed on destruction. Each instance gets a unique path
// so tests can run in parallel.
class TempDir {
 public:
  explicit TempDir(const std::string& stem) {
    static std::uint64_t counter = 0;
    auto base = std::filesystem::temp_directory_path();
    path_ = base / ("fedsketch_" + stem + "_" + std::to_string(::getpid()) +
                    "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

struct RowSpec {
  std::vector<std::uint32_t> labels;
  std::vector<std::pair<std::uint32_t, float>> features;
};

inline fedsketch::data::SparseDataset make_dataset(
    std::uint32_t d, std::uint32_t p, const std::vector<RowSpec>& rows) {
  fedsketch::data::SparseDataset ds;
  ds.d = d;
  ds.p = p;
  for (const auto& row : rows) {
    fedsketch::data::Sample s;
    s.positives = row.labels;
    for (const auto& [idx, val] : row.features) {
      s.features.indices.push_back(idx);
      s.features.values.push_back(val);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// Dense random multi-label dataset for engine tests: every class has at
// least some mass and every sample at least one positive.
inline fedsketch::data::SparseDataset random_dataset(std::uint32_t N,
                                                     std::uint32_t d,
                                                     std::uint32_t p,
                                                     std::uint64_t seed) {
  fedsketch::data::SparseDataset ds;
  ds.d = d;
  ds.p = p;
  fedsketch::RngStream rng{seed, 0xda7aULL};
  for (std::uint32_t i = 0; i < N; ++i) {
    fedsketch::data::Sample s;
    const auto nnz = 1 + rng.next_below(std::min<std::uint64_t>(d, 6));
    std::vector<std::pair<std::uint32_t, float>> feats;
    std::vector<bool> used(d, false);
    for (std::uint64_t f = 0; f < nnz; ++f) {
      auto idx = static_cast<std::uint32_t>(rng.next_below(d));
      const auto val = static_cast<float>(rng.next_double() * 2.0 - 1.0);
      if (used[idx]) continue;
      used[idx] = true;
      feats.emplace_back(idx, val);
    }
    std::sort(feats.begin(), feats.end());
    for (const auto& [idx, val] : feats) {
      s.features.indices.push_back(idx);
      s.features.values.push_back(val);
    }
    const auto npos = 1 + rng.next_below(std::min<std::uint64_t>(p, 3));
    std::vector<bool> lab(p, false);
    for (std::uint64_t l = 0; l < npos; ++l)
      lab[rng.next_below(p)] = true;
    for (std::uint32_t c = 0; c < p; ++c)
      if (lab[c]) s.positives.push_back(c);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace testutil
