#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srdo {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what) : Error("dimension mismatch: " + what) {}
};

class ZeroVarianceColumn : public Error {
 public:
  explicit ZeroVarianceColumn(std::size_t j)
      : Error("column " + std::to_string(j) + " has zero variance"), column(j) {}
  std::size_t column;
};

class DegenerateWeightedVariance : public Error {
 public:
  explicit DegenerateWeightedVariance(std::size_t j)
      : Error("weighted variance of column " + std::to_string(j) + " below 1e-12"), column(j) {}
  std::size_t column;
};

class NotSymmetric : public Error {
 public:
  NotSymmetric() : Error("matrix is not symmetric within 1e-9") {}
};

class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite() : Error("matrix is not positive definite (Cholesky pivot <= 1e-12)") {}
};

class InvalidRho : public Error {
 public:
  InvalidRho(double rho, int s)
      : Error("rho = " + std::to_string(rho) + " makes an s = " + std::to_string(s) +
              " block non positive definite") {}
};

class SingularGram : public Error {
 public:
  SingularGram()
      : Error("weighted Gram matrix is singular; reweighting cannot rescue exact rank "
              "deficiency") {}
};

class OneClassOnly : public Error {
 public:
  OneClassOnly() : Error("only one class present among rows with positive weight") {}
};

class DidNotSeparateClasses : public Error {
 public:
  using Error::Error;
};

class AllWeightsClipped : public Error {
 public:
  AllWeightsClipped()
      : Error("every raw weight fell outside the clip bounds; the ratio classifier has "
              "likely overfit") {}
};

class AllSamplesDropped : public Error {
 public:
  AllSamplesDropped() : Error("confidence threshold dropped every sample") {}
};

class IndefinitePenalty : public Error {
 public:
  IndefinitePenalty()
      : Error("lambda2 quadratic penalty makes the objective indefinite (unbounded below)") {}
  explicit IndefinitePenalty(std::size_t j)
      : Error("quadratic penalty makes the coordinate " + std::to_string(j) +
              " subproblem unbounded") {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error("empty input: " + what) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error("parse error at row " + std::to_string(row) + ", column " +
              std::to_string(column) + ": " + what),
        row(row),
        column(column) {}
  std::size_t row;
  std::size_t column;
};

class MissingColumn : public Error {
 public:
  explicit MissingColumn(const std::string& name)
      : Error("column '" + name + "' not found in header"), name(name) {}
  std::string name;
};

class NonNumericCell : public Error {
 public:
  NonNumericCell(std::size_t row, std::size_t column)
      : Error("non-numeric or missing cell at row " + std::to_string(row) + ", column " +
              std::to_string(column)),
        row(row),
        column(column) {}
  std::size_t row;
  std::size_t column;
};

class RowOutOfRange : public Error {
 public:
  RowOutOfRange(std::size_t row, double value)
      : Error("row " + std::to_string(row) + ": environment value " + std::to_string(value) +
              " lies outside the bin edges"),
        row(row) {}
  std::size_t row;
};

class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& field, const std::string& what)
      : Error("config error at line " + std::to_string(line) + " (" + field + "): " + what),
        line(line),
        field(field) {}
  std::size_t line;
  std::string field;
};

}  // namespace srdo
