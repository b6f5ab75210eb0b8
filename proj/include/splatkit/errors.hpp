#pragma once

#include <stdexcept>
#include <string>

namespace splat {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidRotationError : Error {
  using Error::Error;
};

struct DegenerateCovarianceError : Error {
  using Error::Error;
};

struct SizeMismatchError : Error {
  using Error::Error;
};

struct NotFoundError : Error {
  using Error::Error;
};

struct UnsupportedCameraModelError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& file, long line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), file(file), line(line) {}
  std::string file;
  long line;
};

struct FormatError : Error {
  using Error::Error;
};

struct SchemaError : Error {
  SchemaError(const std::string& property, const std::string& what)
      : Error("missing property '" + property + "': " + what), property(property) {}
  std::string property;
};

struct InvalidDepthError : Error {
  using Error::Error;
};

struct TrainingDivergedError : Error {
  TrainingDivergedError(long iteration, const std::string& what)
      : Error("iteration " + std::to_string(iteration) + ": " + what), iteration(iteration) {}
  long iteration;
};

}  // namespace splat
