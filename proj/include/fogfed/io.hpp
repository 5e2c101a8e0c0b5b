#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace fogfed::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a partially written file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace fogfed::io
