#pragma once

#include <stdexcept>
#include <string>

namespace rpie {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

enum class Hypothesis { H1, H2, H3 };

/// A structural assumption of the kriging model does not hold (rank of F,
/// canonical vectors in Im F, ...).
class HypothesisViolation : public Error {
 public:
  HypothesisViolation(Hypothesis which, const std::string& what)
      : Error(what), which_(which) {}
  Hypothesis which() const noexcept { return which_; }

 private:
  Hypothesis which_;
};

class IllConditioned : public Error {
 public:
  using Error::Error;
};

class EstimationFailure : public Error {
 public:
  using Error::Error;
};

class InvalidMatrix : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or empty user data (CSV ingestion, empty metric inputs, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// No lambda on the grid admits a sigma2 solving the coverage constraint.
class CalibrationInfeasible : public Error {
 public:
  CalibrationInfeasible(const std::string& side, long k_eps, double n_a, const std::string& what)
      : Error(what), side_(side), k_eps_(k_eps), n_a_(n_a) {}
  const std::string& side() const noexcept { return side_; }
  long k_eps() const noexcept { return k_eps_; }
  double n_a() const noexcept { return n_a_; }

 private:
  std::string side_;
  long k_eps_;
  double n_a_;
};

}  // namespace rpie
