#pragma once

#include <string>
#include <vector>

namespace spft {

// Character-level tokenizer over a closed alphabet (lowercase letters,
// digits, space, apostrophe) plus six special tokens. The id layout is fixed
// so checkpoints stay interchangeable.
class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kInstOpen = 3;   // [INST]
  static constexpr int kInstClose = 4;  // [/INST]
  static constexpr int kMask = 5;
  static constexpr int kFirstChar = 6;

  Tokenizer();

  int vocab_size() const { return vocab_size_; }
  const std::string& alphabet() const { return alphabet_; }
  bool in_alphabet(char c) const;

  // Throws an input error for characters outside the alphabet.
  std::vector<int> encode(const std::string& text) const;
  // Inverse of encode for character ids; special tokens render as nothing.
  std::string decode(const std::vector<int>& ids) const;

  int char_id(char c) const;
  bool is_char_id(int id) const { return id >= kFirstChar && id < vocab_size_; }

  // Token ids a transcript may contain: character ids plus EOS.
  std::vector<int> emittable_ids() const;

 private:
  std::string alphabet_;
  int vocab_size_;
  int char_to_id_[256];
};

}  // namespace spft
