#include "unln/hash.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "unln/error.hpp"

namespace unln {

std::string sha1_hex(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  if (EVP_Digest(data, len, digest, &digest_len, EVP_sha1(), nullptr) != 1)
    throw NumericalError("sha1: digest computation failed");
  std::string hex(digest_len * 2, '0');
  static const char* k = "0123456789abcdef";
  for (unsigned int i = 0; i < digest_len; ++i) {
    hex[2 * i] = k[digest[i] >> 4];
    hex[2 * i + 1] = k[digest[i] & 0xf];
  }
  return hex;
}

std::string git_blob_sha1(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  return sha1_hex(blob.data(), blob.size());
}

std::string git_blob_sha1_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open for hashing: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return git_blob_sha1(ss.str());
}

}  // namespace unln
