#include "spft/tokenizer.hpp"

#include "spft/error.hpp"

namespace spft {

Tokenizer::Tokenizer() : alphabet_("abcdefghijklmnopqrstuvwxyz0123456789 '") {
  for (int i = 0; i < 256; ++i) char_to_id_[i] = -1;
  for (size_t i = 0; i < alphabet_.size(); ++i) {
    char_to_id_[static_cast<unsigned char>(alphabet_[i])] = kFirstChar + static_cast<int>(i);
  }
  vocab_size_ = kFirstChar + static_cast<int>(alphabet_.size());
}

bool Tokenizer::in_alphabet(char c) const { return char_to_id_[static_cast<unsigned char>(c)] >= 0; }

int Tokenizer::char_id(char c) const {
  int id = char_to_id_[static_cast<unsigned char>(c)];
  if (id < 0) throw_data(std::string("tokenizer: character '") + c + "' outside the alphabet");
  return id;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(char_id(c));
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab_size_) throw_bounds("tokenizer: id " + std::to_string(id) + " out of range");
    if (id >= kFirstChar) out.push_back(alphabet_[static_cast<size_t>(id - kFirstChar)]);
  }
  return out;
}

std::vector<int> Tokenizer::emittable_ids() const {
  std::vector<int> out;
  out.push_back(kEos);
  for (int id = kFirstChar; id < vocab_size_; ++id) out.push_back(id);
  return out;
}

}  // namespace spft
