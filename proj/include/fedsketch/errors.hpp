#pragma once

#include <stdexcept>
#include <string>

namespace fedsketch {

// Bad experiment configuration: unknown key, malformed value, missing file
// that the config points at, inconsistent dimensions between config entries.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed dataset / partition / scheme file contents.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedsketch
