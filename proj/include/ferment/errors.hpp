#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ferment {

/// The constraint set is empty. `witness_rows` lists nodes whose threshold
/// no controlled node can influence (empty when the certificate came from a
/// solver rather than the reachability test).
class InfeasibleProblem : public std::runtime_error {
 public:
  InfeasibleProblem(const std::string& what, std::vector<int> witness_rows = {})
      : std::runtime_error(what), witness_rows_(std::move(witness_rows)) {}

  const std::vector<int>& witness_rows() const { return witness_rows_; }

 private:
  std::vector<int> witness_rows_;
};

/// A numerical solve stopped without meeting its tolerances.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ferment
