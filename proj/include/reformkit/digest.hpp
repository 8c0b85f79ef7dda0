#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace reformkit {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's contents. Throws IoError if unreadable.
std::string file_sha256_hex(const std::filesystem::path& path);

}  // namespace reformkit
