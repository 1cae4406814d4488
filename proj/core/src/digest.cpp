#include "spft/digest.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstring>

#include "spft/optim.hpp"

namespace spft {

std::string sha256_hex(const void* data, size_t len) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(md_len * 2);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

namespace {

void append_entry(std::vector<unsigned char>& buf, const std::string& name,
                  const std::vector<double>& data) {
  buf.insert(buf.end(), name.begin(), name.end());
  buf.push_back(0);
  for (double v : data) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xff));
  }
}

}  // namespace

std::string store_digest(const ParameterStore& store, const std::string& prefix) {
  std::vector<unsigned char> buf;
  for (const auto& [name, tensor] : store.entries()) {
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    append_entry(buf, name, tensor.data());
  }
  return sha256_hex(buf.data(), buf.size());
}

std::string store_digest_frozen(const ParameterStore& store) {
  std::vector<unsigned char> buf;
  for (const auto& [name, tensor] : store.entries()) {
    if (!store.is_frozen(name)) continue;
    append_entry(buf, name, tensor.data());
  }
  return sha256_hex(buf.data(), buf.size());
}

uint32_t crc32_bytes(const void* data, size_t len) {
  return static_cast<uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

}  // namespace spft
