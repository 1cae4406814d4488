#include "spft/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "spft/digest.hpp"
#include "spft/io.hpp"

namespace spft {

namespace {

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_f64(std::string& out, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  void need(size_t n) {
    if (pos_ + n > bytes_.size()) throw_data(origin_ + ": truncated checkpoint");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(static_cast<unsigned char>(bytes_[pos_]) |
                                       (static_cast<unsigned char>(bytes_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<size_t>(b)]);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<size_t>(b)]);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const std::map<std::string, Tensor>& tensors) {
  std::string out;
  out += "SPFT";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    if (name.size() > 0xffff) throw_contract("checkpoint: tensor name too long: " + name);
    put_u16(out, static_cast<uint16_t>(name.size()));
    out += name;
    const Shape& shape = tensor.shape();
    if (shape.size() > 0xff) throw_contract("checkpoint: rank too large for " + name);
    out.push_back(static_cast<char>(shape.size()));
    for (int64_t d : shape) put_u32(out, static_cast<uint32_t>(d));
    for (double v : tensor.data()) put_f64(out, v);
  }
  put_u32(out, crc32_bytes(out.data(), out.size()));
  return out;
}

std::map<std::string, Tensor> parse_checkpoint(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 16) throw_data(origin + ": file too short for an SPFT checkpoint");
  if (bytes.compare(0, 4, "SPFT") != 0) throw_data(origin + ": bad magic, not an SPFT checkpoint");
  uint32_t stored_crc = 0;
  for (int b = 3; b >= 0; --b) {
    stored_crc = (stored_crc << 8) |
                 static_cast<unsigned char>(bytes[bytes.size() - 4 + static_cast<size_t>(b)]);
  }
  uint32_t actual = crc32_bytes(bytes.data(), bytes.size() - 4);
  if (stored_crc != actual) throw_data(origin + ": CRC mismatch, checkpoint corrupted");

  Reader r(bytes, origin);
  r.str(4);  // magic
  uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw_data(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  uint32_t count = r.u32();
  std::map<std::string, Tensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = r.u16();
    std::string name = r.str(name_len);
    r.need(1);
    uint8_t rank = static_cast<uint8_t>(r.str(1)[0]);
    Shape shape;
    int64_t numel = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      uint32_t dim = r.u32();
      shape.push_back(static_cast<int64_t>(dim));
      numel *= static_cast<int64_t>(dim);
    }
    std::vector<double> data(static_cast<size_t>(numel));
    for (int64_t j = 0; j < numel; ++j) data[static_cast<size_t>(j)] = r.f64();
    if (out.count(name)) throw_data(origin + ": duplicate tensor name " + name);
    out.emplace(name, Tensor::from_data(std::move(shape), std::move(data)));
  }
  if (r.pos() != bytes.size() - 4) throw_data(origin + ": trailing bytes after tensor table");
  return out;
}

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors) {
  atomic_write_file(path, checkpoint_bytes(tensors));
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path), path);
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, tensor] : bundle.params().entries()) tensors.emplace(name, tensor);
  save_checkpoint(path, tensors);
}

ModelBundle load_bundle(const std::string& path) {
  auto tensors = load_checkpoint(path);
  auto arch_it = tensors.find("meta.arch");
  if (arch_it == tensors.end() || arch_it->second.numel() != 9) {
    throw_data(path + ": checkpoint lacks a valid meta.arch entry");
  }
  const auto& a = arch_it->second.data();
  ModelBundle bundle;
  bundle.config_.vocab = static_cast<int64_t>(a[0]);
  bundle.config_.embed_dim = static_cast<int64_t>(a[1]);
  bundle.config_.dec_layers = static_cast<int64_t>(a[2]);
  bundle.config_.dec_heads = static_cast<int64_t>(a[3]);
  bundle.config_.ff_mult = static_cast<int64_t>(a[4]);
  bundle.config_.enc_layers = static_cast<int64_t>(a[5]);
  bundle.config_.enc_heads = static_cast<int64_t>(a[6]);
  bundle.config_.frame_dim = static_cast<int64_t>(a[7]);
  bundle.config_.stack = static_cast<int64_t>(a[8]);
  if (bundle.config_.vocab != bundle.tokenizer_.vocab_size()) {
    throw_data(path + ": checkpoint vocabulary does not match the tokenizer");
  }
  for (const char* required : {"embedding.table", "decoder.output.w", "encoder.input_proj.w"}) {
    if (!tensors.count(required)) throw_data(path + ": checkpoint missing tensor " + std::string(required));
  }
  for (auto& [name, tensor] : tensors) {
    tensor.set_requires_grad(true);
    bundle.params_.entries().emplace(name, std::move(tensor));
  }
  bundle.params_.freeze_prefix("meta.");
  return bundle;
}

void save_softprompt(const std::string& path, const SoftPrompt& prompt) {
  if (prompt.length() == 0) throw_contract("save_softprompt: empty prompt");
  std::map<std::string, Tensor> tensors;
  tensors.emplace(prompt.name(), prompt.values());
  save_checkpoint(path, tensors);
}

SoftPrompt load_softprompt(const std::string& path) {
  auto tensors = load_checkpoint(path);
  for (auto& [name, tensor] : tensors) {
    if (name.rfind("softprompt.", 0) != 0) continue;
    // "softprompt.<domain>.d<len>"
    size_t dot = name.rfind(".d");
    if (dot == std::string::npos || dot <= 11) throw_data(path + ": malformed soft prompt name " + name);
    std::string domain = name.substr(11, dot - 11);
    tensor.set_requires_grad(false);
    return SoftPrompt(domain, tensor);
  }
  throw_data(path + ": checkpoint holds no softprompt tensor");
}

void save_external_lm(const std::string& path, const ExternalLM& lm) {
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, tensor] : lm.params().entries()) tensors.emplace(name, tensor);
  tensors.emplace("meta.extlm_arch",
                  Tensor::from_data({4}, {static_cast<double>(lm.vocab()),
                                          static_cast<double>(lm.width()),
                                          static_cast<double>(lm.n_layers()),
                                          static_cast<double>(lm.n_heads())}));
  save_checkpoint(path, tensors);
}

ExternalLM load_external_lm(const std::string& path) {
  auto tensors = load_checkpoint(path);
  auto arch_it = tensors.find("meta.extlm_arch");
  if (arch_it == tensors.end() || arch_it->second.numel() != 4) {
    throw_data(path + ": checkpoint lacks a valid meta.extlm_arch entry");
  }
  const auto& a = arch_it->second.data();
  ExternalLM lm;
  lm.vocab_ = static_cast<int64_t>(a[0]);
  lm.width_ = static_cast<int64_t>(a[1]);
  lm.n_layers_ = static_cast<int>(a[2]);
  lm.n_heads_ = static_cast<int>(a[3]);
  tensors.erase(arch_it);
  for (auto& [name, tensor] : tensors) {
    tensor.set_requires_grad(true);
    lm.params_.entries().emplace(name, std::move(tensor));
  }
  return lm;
}

}  // namespace spft
