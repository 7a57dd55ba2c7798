#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shapecomp/grid.hpp"

namespace shapecomp {

/// Raised for unreadable, unwritable or malformed files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

/// `.sg3`: text header `SG3 nx ny nz ox oy oz spacing channels\n`, then
/// little-endian float32 values, x fastest, channels interleaved.
void write_sg3(const ScalarGrid3& grid, const std::filesystem::path& path);
ScalarGrid3 read_sg3(const std::filesystem::path& path);
void write_region(const Region3& region, const std::filesystem::path& path);
Region3 read_region(const std::filesystem::path& path);

/// Flat `key = value` (or `key=value`) text; `#` starts a comment.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const KeyValues& kv, const std::filesystem::path& path);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace shapecomp
