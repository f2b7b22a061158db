#pragma once

#include <stdexcept>
#include <string>

namespace pmfield {

// Base class for all toolkit errors. Every failure mode documented in the
// module contracts maps to one of the derived types below so callers (and
// the CLI) can produce stable, machine-parsable messages.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyAfterFilter : Error {
  EmptyAfterFilter() : Error("EmptyAfterFilter: no observations survive filtering") {}
};

struct DuplicateKey : Error {
  explicit DuplicateKey(const std::string& what) : Error("DuplicateKey: " + what) {}
};

struct UnknownStation : Error {
  explicit UnknownStation(const std::string& id) : Error("UnknownStation: " + id) {}
};

struct DegenerateGeometry : Error {
  explicit DegenerateGeometry(const std::string& what) : Error("DegenerateGeometry: " + what) {}
};

struct PointOutsideMesh : Error {
  int point_index;
  explicit PointOutsideMesh(int index)
      : Error("PointOutsideMesh: point " + std::to_string(index)), point_index(index) {}
};

struct NotPositiveDefinite : Error {
  int pivot;  // index of the offending pivot in original ordering, -1 if unknown
  explicit NotPositiveDefinite(int pivot_index)
      : Error("NotPositiveDefinite: pivot " + std::to_string(pivot_index)), pivot(pivot_index) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& what) : Error("DimensionMismatch: " + what) {}
};

struct SchemaError : Error {
  std::string column;
  explicit SchemaError(const std::string& col) : Error("SchemaError: missing column '" + col + "'"), column(col) {}
};

struct ParseError : Error {
  int line;
  ParseError(const std::string& what, int line_number)
      : Error("ParseError: line " + std::to_string(line_number) + ": " + what), line(line_number) {}
};

struct UnseenDay : Error {
  int day;
  explicit UnseenDay(int d) : Error("UnseenDay: day " + std::to_string(d) + " not in training data"), day(d) {}
};

struct BadK : Error {
  explicit BadK(const std::string& what) : Error("BadK: " + what) {}
};

struct EmptyTrainSet : Error {
  explicit EmptyTrainSet(const std::string& what) : Error("EmptyTrainSet: " + what) {}
};

struct DegenerateResponse : Error {
  DegenerateResponse() : Error("DegenerateResponse: holdout response has zero variance") {}
};

struct NonFinite : Error {
  explicit NonFinite(const std::string& what) : Error("NonFinite: " + what) {}
};

struct TooLarge : Error {
  explicit TooLarge(const std::string& what) : Error("TooLarge: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("ConfigError: " + what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("IoError: " + what) {}
};

}  // namespace pmfield
