#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fedsketch::io {

// Shortest decimal string that round-trips the value exactly (std::to_chars).
// Used everywhere a float lands in a text file so reruns are byte-identical.
std::string format_double(double v);
std::string format_float(float v);

// Read a whole file; throws data_error if it cannot be opened.
std::string read_file(const std::string& path);

// Write via a temporary in the same directory, then rename over the target,
// so a crash mid-write never leaves a truncated file behind.
void atomic_write_file(const std::string& path, const std::string& content);

// Strict integer / float parsing for file formats: the whole token must be
// consumed. Throws data_error with `what` naming the offending token.
std::int64_t parse_int(const std::string& tok, const std::string& what);
std::uint64_t parse_uint(const std::string& tok, const std::string& what);
double parse_double(const std::string& tok, const std::string& what);

// Split on any run of spaces/tabs; never returns empty tokens.
std::vector<std::string> split_ws(const std::string& line);
// Split on a single-character delimiter, keeping empty fields.
std::vector<std::string> split_char(const std::string& line, char delim);

// Line iteration that tolerates trailing CR (CRLF input) and a missing final
// newline. Returns (line, had_line); meant for simple sequential readers.
class LineReader {
 public:
  explicit LineReader(std::string text) : text_(std::move(text)) {}
  bool next(std::string& line);
  std::size_t line_number() const { return line_no_; }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;  // 1-based number of the line last returned
};

}  // namespace fedsketch::io
