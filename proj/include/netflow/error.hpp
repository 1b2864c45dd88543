#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace netflow {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate or inconsistent geometry (zero-area rectangle, collinear triangle, ...).
class InvalidGeometry : public Error {
 public:
  using Error::Error;
};

/// A mesh or config file could not be parsed. `line()` is 1-based, 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Structurally valid input that violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Linear system is singular beyond the expected constant kernel.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

/// An iterative method stopped before reaching its tolerance.
class SolverFailure : public Error {
 public:
  SolverFailure(const std::string& what, std::size_t iterations, double residual)
      : Error(what + " (iterations=" + std::to_string(iterations) +
              ", residual=" + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}
  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

/// Total permeability is not positive definite on some triangle.
class IndefinitePermeability : public Error {
 public:
  IndefinitePermeability(const std::string& what, std::size_t triangle)
      : Error(what + " (triangle " + std::to_string(triangle) + ")"), triangle_(triangle) {}
  std::size_t triangle() const noexcept { return triangle_; }

 private:
  std::size_t triangle_;
};

/// An explicit update produced a non-finite value on one edge of a network.
class NonFiniteUpdate : public Error {
 public:
  NonFiniteUpdate(const std::string& what, std::size_t edge)
      : Error(what + " (edge " + std::to_string(edge) + ")"), edge_(edge) {}
  std::size_t edge() const noexcept { return edge_; }

 private:
  std::size_t edge_;
};

}  // namespace netflow
