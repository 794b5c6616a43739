#pragma once

#include <filesystem>
#include <string>

namespace disa::cli {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace disa::cli
