#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dataloops {

// A point in R^d.
using Point = Eigen::VectorXd;

// A set of points, one per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Argument outside the mathematical domain of an operation (t_anchor >= t,
// negative time, empty support, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Malformed or inconsistent file / configuration input.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dataloops
