#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvpose {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A projected point lies on or behind the camera plane.
class NonPositiveDepth : public Error {
 public:
  explicit NonPositiveDepth(std::ptrdiff_t joint, const std::string& where = {})
      : Error("non-positive depth at joint " + std::to_string(joint) +
              (where.empty() ? "" : " (" + where + ")")),
        joint_(joint) {}
  std::ptrdiff_t joint() const { return joint_; }

 private:
  std::ptrdiff_t joint_;
};

/// Two-view geometry that cannot resolve depth.
class DegenerateGeometry : public Error {
 public:
  explicit DegenerateGeometry(const std::string& what, std::ptrdiff_t joint = -1)
      : Error(joint < 0 ? what : what + " at joint " + std::to_string(joint)),
        joint_(joint) {}
  std::ptrdiff_t joint() const { return joint_; }

 private:
  std::ptrdiff_t joint_;
};

class NoConvergence : public Error {
 public:
  using Error::Error;
};

class DegenerateCloud : public Error {
 public:
  using Error::Error;
};

class UnsupportedViewCount : public Error {
 public:
  explicit UnsupportedViewCount(int views)
      : Error("unsupported view count " + std::to_string(views) + " (only 2 supported)") {}
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NotScalar : public Error {
 public:
  using Error::Error;
};

class FrameMismatch : public Error {
 public:
  using Error::Error;
};

class PoseOutOfView : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number when known.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit SchemaError(const std::string& what) : Error(what), line_(0) {}
  std::size_t line() const { return line_; }

  /// Same error, message prefixed with the file it came from.
  static SchemaError in_file(const std::string& path, const SchemaError& e) {
    SchemaError out(path + ": " + e.what());
    out.line_ = e.line_;
    return out;
  }

 private:
  std::size_t line_;
};

class MissingField : public Error {
 public:
  MissingField(const std::string& field, std::size_t line)
      : Error("line " + std::to_string(line) + ": missing field '" + field + "'"), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Invalid configuration value or invariant violation in user-supplied data.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvpose
