#pragma once

#include <stdexcept>
#include <string>

namespace gmpslab {

enum class ErrorKind {
  kShapeMismatch,
  kArityMismatch,
  kNotScalar,
  kInvalidArgument,
  kMissingData,
  kNonFinite,
  kParse,
  kSchema,
  kIo,
  kConfig,
};

/// Every failure raised by the library carries a kind so callers (and the CLI)
/// can react without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gmpslab
