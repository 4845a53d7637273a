#pragma once

#include <stdexcept>
#include <string>

namespace lcot {

/// Base of every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define LCOT_DEFINE_ERROR(Name, tag)                              \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(tag, what) {}  \
  };

LCOT_DEFINE_ERROR(DomainError, "domain")
LCOT_DEFINE_ERROR(CapabilityError, "capability")
LCOT_DEFINE_ERROR(ShapeError, "shape")
LCOT_DEFINE_ERROR(IntegrationError, "integration-accuracy")
LCOT_DEFINE_ERROR(NumericalError, "numerical")
LCOT_DEFINE_ERROR(ConfigError, "configuration")
LCOT_DEFINE_ERROR(NotControllableError, "not-controllable")
LCOT_DEFINE_ERROR(SolverError, "solver")
LCOT_DEFINE_ERROR(PreconditionError, "precondition")
LCOT_DEFINE_ERROR(InputError, "input")
LCOT_DEFINE_ERROR(ParseError, "parse")
LCOT_DEFINE_ERROR(ValidationError, "validation")
LCOT_DEFINE_ERROR(UsageError, "usage")

#undef LCOT_DEFINE_ERROR

}  // namespace lcot
