#pragma once

#include <map>
#include <string>

#include "spft/model.hpp"

namespace spft {

// SPFT checkpoint container:
//   "SPFT" magic, u32 format version, u32 tensor count, then per tensor
//   u16 name length + UTF-8 name, u8 rank, u32 dims, raw little-endian f64
//   data; trailing CRC32 of everything before it. All integers little-endian.
// load(save(x)) is bit-identical; a bad magic or CRC refuses to load.

constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

std::string checkpoint_bytes(const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> parse_checkpoint(const std::string& bytes, const std::string& origin);

// Model-level wrappers.
void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

void save_softprompt(const std::string& path, const SoftPrompt& prompt);
SoftPrompt load_softprompt(const std::string& path);

void save_external_lm(const std::string& path, const ExternalLM& lm);
ExternalLM load_external_lm(const std::string& path);

}  // namespace spft
