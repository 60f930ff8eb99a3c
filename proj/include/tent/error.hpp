#pragma once

#include <stdexcept>
#include <string>

namespace tent {

// Error taxonomy. Every failure surfaced by the library derives from Error so
// the CLI can map it to a machine-readable line and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Malformed input file (bad magic, unparsable record, ...).
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

// Structurally inconsistent data (dangling node id, empty graph, ...).
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& what) : Error("integrity", what) {}
};

// Index outside its valid range.
struct BoundsError : Error {
  explicit BoundsError(const std::string& what) : Error("bounds", what) {}
};

// Invalid argument combination.
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& what) : Error("argument", what) {}
};

// Parameter vector does not match its declared layout.
struct SchemaError : Error {
  explicit SchemaError(const std::string& what) : Error("schema", what) {}
};

// Non-finite value or an operation that is numerically undefined.
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

// No feasible episode could be sampled from the available classes.
struct InfeasibleEpisodeError : Error {
  explicit InfeasibleEpisodeError(const std::string& what)
      : Error("episode_infeasibility", what) {}
};

// Dimension mismatch in a tensor operation.
struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

}  // namespace tent
