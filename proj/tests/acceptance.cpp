// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero if any criterion fails.

#include "cvp/verify.hpp"

#include <iostream>

int main() {
  const auto results = cvp::run_acceptance({}, [](const cvp::CriterionResult& r) {
    cvp::print_criterion(std::cout, r);
    std::cout.flush();
  });
  int failed = 0;
  for (const auto& r : results) failed += r.passed() ? 0 : 1;
  std::cout << results.size() - failed << " of " << results.size() << " acceptance criteria passed\n";
  return failed == 0 ? 0 : 1;
}
