#pragma once

#include "rcs/linear_operator.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rcs {

class ConfigError : public Error {
 public:
  using Error::Error;
};

using KeyValues = std::map<std::string, std::string>;

/// Parses flat `key = value` text. `#` starts a comment; blank lines are
/// skipped; a repeated key keeps the last value.
KeyValues parse_kv(std::istream& in);
KeyValues parse_kv_file(const std::string& path);
void write_kv(std::ostream& out, const KeyValues& kv);

double parse_double(const std::string& text, const std::string& key);
Index parse_index(const std::string& text, const std::string& key);
std::uint64_t parse_u64(const std::string& text, const std::string& key);
std::vector<double> parse_double_list(const std::string& text, const std::string& key);
std::vector<Index> parse_index_list(const std::string& text, const std::string& key);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace rcs
