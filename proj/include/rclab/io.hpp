#pragma once

#include <string>
#include <string_view>

namespace rclab {

// Writes to a temporary sibling file and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

// Shortest round-trip form is not wanted in CSV; these use 17 significant digits.
std::string format_double(double v);

}  // namespace rclab
