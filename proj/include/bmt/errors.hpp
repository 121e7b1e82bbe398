#pragma once

#include <stdexcept>
#include <string>

namespace bmt {

// Base class for all domain errors. `code()` is a stable machine-readable
// identifier used by the CLI error channel.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string &what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string &code() const { return code_; }

 private:
  std::string code_;
};

#define BMT_DEFINE_ERROR(Name)                           \
  class Name : public Error {                            \
   public:                                               \
    explicit Name(const std::string &what)               \
        : Error(#Name, what) {}                          \
  }

BMT_DEFINE_ERROR(DegreeViolation);
BMT_DEFINE_ERROR(CycleDetected);
BMT_DEFINE_ERROR(Disconnected);
BMT_DEFINE_ERROR(UnknownNode);
BMT_DEFINE_ERROR(UnknownLeaf);
BMT_DEFINE_ERROR(InvalidSparsity);
BMT_DEFINE_ERROR(NotFullyObserved);
BMT_DEFINE_ERROR(TooLarge);
BMT_DEFINE_ERROR(TooSmall);
BMT_DEFINE_ERROR(DuplicateValue);
BMT_DEFINE_ERROR(ZeroValue);
BMT_DEFINE_ERROR(NotPositiveDefinite);
BMT_DEFINE_ERROR(NotDdm);
BMT_DEFINE_ERROR(NotLaplacian);
BMT_DEFINE_ERROR(ZeroTotal);
BMT_DEFINE_ERROR(SpectrumViolation);
BMT_DEFINE_ERROR(DisconnectedSupport);
BMT_DEFINE_ERROR(NonConvergence);
BMT_DEFINE_ERROR(DegenerateContrast);
BMT_DEFINE_ERROR(NoDuplicate);
BMT_DEFINE_ERROR(ZeroCovariance);
BMT_DEFINE_ERROR(SingularCovariance);
BMT_DEFINE_ERROR(InvalidTree);

#undef BMT_DEFINE_ERROR

// Malformed input text; carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string &what)
      : Error("ParseError", what + " (byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace bmt
