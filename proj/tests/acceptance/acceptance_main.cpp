// Acceptance gate: every release criterion as one runnable binary, one
// pass/fail line per check. Exit code 0 only when everything holds. The
// long-running learning smoke test is excluded here and runs through
// `rbclab verify --long`.
#include <cstdio>
#include <vector>

#include "rbclab/lab/verify.hpp"

using rbclab::lab::CheckResult;

namespace {

int report(int criterion, const std::vector<CheckResult>& checks) {
  int failures = 0;
  for (const auto& c : checks) {
    std::printf("criterion %d [%s] %s\n", criterion, c.passed ? "PASS" : "FAIL",
                c.name.c_str());
    if (!c.detail.empty()) {
      std::printf("             %s\n", c.detail.c_str());
    }
    if (!c.passed) ++failures;
  }
  std::fflush(stdout);
  return failures;
}

}  // namespace

int main() {
  int failures = 0;
  failures += report(1, rbclab::lab::verify_network_invariance());
  failures += report(2, rbclab::lab::verify_parameter_counts());
  failures += report(3, rbclab::lab::verify_action_pipeline());
  failures += report(4, rbclab::lab::verify_clip_algebra());
  failures += report(5, rbclab::lab::verify_gradients());
  failures += report(6, rbclab::lab::verify_solver_physics());
  failures += report(7, rbclab::lab::verify_marl_coupling());
  failures += report(8, rbclab::lab::verify_determinism());
  std::printf("criterion 9 [SKIP] desk-scale learning smoke test runs via "
              "`rbclab verify --long` (excluded from the default gate)\n");
  std::printf("acceptance: %d failing checks\n", failures);
  return failures == 0 ? 0 : 1;
}
