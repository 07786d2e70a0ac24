#pragma once

// Shared scalar-generic dense types and the library error hierarchy.
// Everything in this library is templated on the scalar type and uses
// Eigen dynamic-size matrices as the single dense representation.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace udkf {

using Index = Eigen::Index;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dimension mismatches between arguments.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// Factorization inputs violating symmetry/definiteness requirements.
class FactorizationError : public Error {
 public:
  explicit FactorizationError(const std::string& what) : Error(what) {}
};

// Numerically rank-deficient orthogonalization inputs.
class RankError : public Error {
 public:
  explicit RankError(const std::string& what) : Error(what) {}
};

// Breakdown inside a filter recursion (innovation covariance invalid).
class FilterError : public Error {
 public:
  explicit FilterError(const std::string& what) : Error(what) {}
};

// Model parameters outside their admissible domain.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what) {}
};

// Objective-function evaluation failure; remembers which filter step broke.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, Index step)
      : Error(what + " (at step " + std::to_string(step) + ")"), step_(step) {}
  Index step() const { return step_; }

 private:
  Index step_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

}  // namespace detail

}  // namespace udkf
