#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spft {

class ParameterStore;

// SHA-256 hex digest of raw bytes.
std::string sha256_hex(const void* data, size_t len);

// Digest of parameter bytes (names + little-endian f64 data, in name order).
// The prefix form hashes only parameters whose name starts with prefix.
std::string store_digest(const ParameterStore& store, const std::string& prefix = "");

// Digest restricted to the store's frozen entries.
std::string store_digest_frozen(const ParameterStore& store);

// CRC32 (IEEE) of a byte buffer, for the checkpoint trailer.
uint32_t crc32_bytes(const void* data, size_t len);

}  // namespace spft
