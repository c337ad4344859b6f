#pragma once

#include <stdexcept>
#include <string>

namespace shrubmap {

/// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind {
  Usage,    // bad parameters or configuration
  Data,     // malformed, missing, or inconsistent inputs
  Numeric,  // divergence or other numerical failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SHRUBMAP_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

SHRUBMAP_DEFINE_ERROR(ParameterError, Usage)
SHRUBMAP_DEFINE_ERROR(ConfigError, Usage)
SHRUBMAP_DEFINE_ERROR(IoError, Data)
SHRUBMAP_DEFINE_ERROR(FormatError, Data)
SHRUBMAP_DEFINE_ERROR(TruncationError, Data)
SHRUBMAP_DEFINE_ERROR(AlignmentError, Data)
SHRUBMAP_DEFINE_ERROR(DimensionError, Data)
SHRUBMAP_DEFINE_ERROR(ManifestError, Data)
SHRUBMAP_DEFINE_ERROR(SamplingError, Data)
SHRUBMAP_DEFINE_ERROR(DivergenceError, Numeric)

#undef SHRUBMAP_DEFINE_ERROR

}  // namespace shrubmap
