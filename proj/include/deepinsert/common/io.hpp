#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace deepinsert::common {

// Writes to a sibling temp file and renames it over path, so readers never
// observe a partially written file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Shortest decimal that round-trips the value.
std::string format_number(double value);

// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace deepinsert::common
