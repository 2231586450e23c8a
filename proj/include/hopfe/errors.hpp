#pragma once

#include <stdexcept>
#include <string>

namespace hopfe {

// Base class for every error raised by the library. Subclasses carry no extra
// state; the type is the error kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HOPFE_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

HOPFE_DEFINE_ERROR(ZeroQuaternion)
HOPFE_DEFINE_ERROR(NotOnSphere)
HOPFE_DEFINE_ERROR(NumericalOverflow)
HOPFE_DEFINE_ERROR(InvalidConfig)
HOPFE_DEFINE_ERROR(ShapeMismatch)
HOPFE_DEFINE_ERROR(NonFiniteGradient)
HOPFE_DEFINE_ERROR(EmptySplit)
HOPFE_DEFINE_ERROR(WidthMismatch)
HOPFE_DEFINE_ERROR(UnknownEntity)
HOPFE_DEFINE_ERROR(UnknownRelation)
HOPFE_DEFINE_ERROR(IoError)

#undef HOPFE_DEFINE_ERROR

// Malformed input file. `line` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hopfe
