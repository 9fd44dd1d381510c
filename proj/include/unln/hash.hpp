#pragma once

#include <string>

namespace unln {

// Hex SHA-1 of a byte buffer.
std::string sha1_hex(const void* data, std::size_t len);

// Git blob hash: sha1("blob <len>\0" + content).
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::string& path);

}  // namespace unln
