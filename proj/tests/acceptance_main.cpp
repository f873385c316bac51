// Acceptance gate: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion.  Exit code 0 only when all pass.
#include <cstdio>
#include <iostream>

#include "skoffar/acceptance.hpp"

int main() {
  using namespace skoffar::acceptance;
  std::vector<CriterionResult> results = run_all(std::cout);
  int failed = 0;
  for (const auto& r : results)
    if (!r.passed) ++failed;
  std::printf("%zu criteria, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 2;
}
