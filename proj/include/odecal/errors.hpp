#pragma once

#include <stdexcept>
#include <string>

namespace odecal {

// User errors map to exit code 1, internal errors to exit code 2.
enum class ErrorKind
{
  user,
  internal
};

class Error : public std::runtime_error
{
public:
  Error(const std::string& name, const std::string& message, ErrorKind kind)
    : std::runtime_error(name + ": " + message)
    , name_(name)
    , kind_(kind)
  {}

  const std::string& name() const noexcept { return name_; }
  ErrorKind kind() const noexcept { return kind_; }

private:
  std::string name_;
  ErrorKind kind_;
};

#define ODECAL_DEFINE_ERROR(Type, Kind)                                        \
  class Type : public Error                                                    \
  {                                                                            \
  public:                                                                      \
    explicit Type(const std::string& message)                                  \
      : Error(#Type, message, ErrorKind::Kind)                                 \
    {}                                                                         \
  };

ODECAL_DEFINE_ERROR(InvalidOrder, user)
ODECAL_DEFINE_ERROR(SingularMomentSystem, internal)
ODECAL_DEFINE_ERROR(BandwidthTooLarge, user)
ODECAL_DEFINE_ERROR(EmptyCandidateSet, user)
ODECAL_DEFINE_ERROR(InvalidPanel, user)
ODECAL_DEFINE_ERROR(NonFiniteState, internal)
ODECAL_DEFINE_ERROR(InvalidDim, user)
ODECAL_DEFINE_ERROR(ShapeMismatch, user)
ODECAL_DEFINE_ERROR(Diverged, internal)
ODECAL_DEFINE_ERROR(GridMismatch, user)
ODECAL_DEFINE_ERROR(MalformedRow, user)
ODECAL_DEFINE_ERROR(MissingState, user)
ODECAL_DEFINE_ERROR(ConfigError, user)
ODECAL_DEFINE_ERROR(ConstraintViolation, internal)

#undef ODECAL_DEFINE_ERROR

} // namespace odecal
