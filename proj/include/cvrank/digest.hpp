#pragma once

#include <string>
#include <string_view>

namespace cvrank {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string file_sha256(const std::string& path);
// Digest over every regular file in `dir`, visited in sorted name order; names are hashed too.
std::string directory_digest(const std::string& dir);

}  // namespace cvrank
