#ifndef PPSEG_ERROR_HPP
#define PPSEG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ppseg {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kUsage,               ///< bad arguments or config
  kData,                ///< malformed / missing input data
  kNumeric,             ///< numerical failure (degenerate statistics, no support)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// No seed points were supplied where at least one is required.
struct EmptySeeds : Error {
  explicit EmptySeeds(const std::string& where)
      : Error(ErrorKind::kData, where + ": no seed points") {}
};

/// Every pixel of a loss was ignored.
struct EmptySupport : Error {
  explicit EmptySupport(const std::string& where)
      : Error(ErrorKind::kNumeric, where + ": no non-ignored pixels") {}
};

struct DegenerateImage : Error {
  explicit DegenerateImage(const std::string& where)
      : Error(ErrorKind::kNumeric, where + ": zero standard deviation in a color channel") {}
};

struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& where) : Error(ErrorKind::kNumeric, where) {}
};

struct AmbiguousAssignment : Error {
  explicit AmbiguousAssignment(const std::string& where) : Error(ErrorKind::kNumeric, where) {}
};

struct EmptyGroundTruth : Error {
  explicit EmptyGroundTruth(const std::string& where)
      : Error(ErrorKind::kData, where + ": ground truth has no objects") {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& where)
      : Error(ErrorKind::kData, where + ": shape mismatch") {}
};

struct PackingFailure : Error {
  explicit PackingFailure(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

}  // namespace ppseg

#endif  // PPSEG_ERROR_HPP
