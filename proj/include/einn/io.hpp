#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace einn {

/// Writes `content` to a sibling temporary file, then renames it over `path`,
/// so readers never observe a truncated file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

}  // namespace einn
