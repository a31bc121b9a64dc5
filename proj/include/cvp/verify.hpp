#pragma once

// Acceptance suite: oracle and reduction checks for every solver, shared by
// the `verify` command and the acceptance test binary.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace cvp {

struct Check {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool scalable = true;  ///< multiplied by the tolerance scale (runtimes and counts are not)
  bool passed = false;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  double seconds = 0.0;
  std::string error;  ///< set when the criterion threw
  [[nodiscard]] bool passed() const;
};

struct VerifyOptions {
  double tolerance_scale = 1.0;
  std::uint64_t seed = 1;
  std::vector<int> only;  ///< criterion ids to run; empty runs all
};

using CriterionSink = std::function<void(const CriterionResult&)>;

std::vector<CriterionResult> run_acceptance(const VerifyOptions& opts, const CriterionSink& sink = {});

/// One line per criterion followed by its measured-vs-tolerance checks.
void print_criterion(std::ostream& out, const CriterionResult& r);

}  // namespace cvp
