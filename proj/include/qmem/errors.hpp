#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qmem {

/// Error category. The CLI maps each category onto a process exit code.
enum class ErrorKind { validation, numerical, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class LabelError : public Error {
 public:
  explicit LabelError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class InvalidStateError : public Error {
 public:
  explicit InvalidStateError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

/// Raised when tomography input lacks preparations or measurement settings.
class IncompleteDataError : public Error {
 public:
  IncompleteDataError(const std::string& what, std::vector<std::string> missing)
      : Error(ErrorKind::validation, what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// The first argument of a relative entropy has weight outside the support of the second.
class SupportError : public Error {
 public:
  SupportError(const std::string& what, double eigenvalue, double weight)
      : Error(ErrorKind::numerical, what), eigenvalue_(eigenvalue), weight_(weight) {}
  double eigenvalue() const noexcept { return eigenvalue_; }
  double weight() const noexcept { return weight_; }

 private:
  double eigenvalue_;
  double weight_;
};

class SingularChannelError : public Error {
 public:
  SingularChannelError(const std::string& what, double sigma_min, double sigma_max)
      : Error(ErrorKind::numerical, what), sigma_min_(sigma_min), sigma_max_(sigma_max) {}
  double sigma_min() const noexcept { return sigma_min_; }
  double sigma_max() const noexcept { return sigma_max_; }

 private:
  double sigma_min_;
  double sigma_max_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::MatrixXcd last_iterate, int iterations)
      : Error(ErrorKind::numerical, what), last_(std::move(last_iterate)), iterations_(iterations) {}
  const Eigen::MatrixXcd& last_iterate() const noexcept { return last_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Eigen::MatrixXcd last_;
  int iterations_;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double gap, int iterations)
      : Error(ErrorKind::numerical, what), gap_(gap), iterations_(iterations) {}
  double gap() const noexcept { return gap_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double gap_;
  int iterations_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace qmem
