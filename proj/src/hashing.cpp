#include "textmill/hashing.hpp"

#include <memory>

#include <openssl/evp.h>

#include "textmill/error.hpp"

namespace textmill {

Md5Digest md5(std::string_view bytes) {
  Md5Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_md5(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("md5 digest failed");
  }
  return out;
}

std::string to_hex(const Md5Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(32);
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xF]);
  }
  return s;
}

std::string to_hex(std::uint64_t value) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = kHex[value & 0xF];
    value >>= 4;
  }
  return s;
}

}  // namespace textmill
