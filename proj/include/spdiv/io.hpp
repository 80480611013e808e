#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace spdiv {

std::string read_file(const std::filesystem::path& path);

/// Writes `bytes` to `path.tmp` then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Appends `bytes` to `path`, creating it if needed.
void append_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace spdiv
