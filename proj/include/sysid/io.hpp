#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sysid/function.hpp"

namespace sysid {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
/// Throws IoError when `text` is not a complete number.
double parse_double(std::string_view text, std::size_t line = 0);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

} // namespace sysid
