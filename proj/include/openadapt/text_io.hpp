#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace openadapt {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::string& path);
// Writes atomically enough for our purposes: truncate + write + check.
void write_file(const std::string& path, std::string_view contents);

}  // namespace openadapt
