#pragma once

#include <stdexcept>
#include <string>

namespace spft {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// Config/Usage -> exit 1, everything else -> exit 2.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    Config,     // bad configuration or usage
    Contract,   // API precondition violated
    Dimension,  // tensor shape mismatch
    Bounds,     // index out of range
    Data,       // malformed or inconsistent data/files
    Io,         // filesystem failure
  };

  Error(Kind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(Error::Kind::Config, msg);
}
[[noreturn]] inline void throw_contract(const std::string& msg) {
  throw Error(Error::Kind::Contract, msg);
}
[[noreturn]] inline void throw_dimension(const std::string& msg) {
  throw Error(Error::Kind::Dimension, msg);
}
[[noreturn]] inline void throw_bounds(const std::string& msg) {
  throw Error(Error::Kind::Bounds, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(Error::Kind::Data, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(Error::Kind::Io, msg);
}

}  // namespace spft
