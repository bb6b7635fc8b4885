#pragma once

#include <string>
#include <vector>

#include "rbclab/nets/policy.hpp"

namespace rbclab::lab {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The verification groups, one per acceptance concern. Tolerances and
// thresholds are pinned in the implementations.
std::vector<CheckResult> verify_network_invariance();  // flip invariance + FC control
std::vector<CheckResult> verify_parameter_counts();
std::vector<CheckResult> verify_action_pipeline();
std::vector<CheckResult> verify_clip_algebra();
std::vector<CheckResult> verify_gradients();
std::vector<CheckResult> verify_solver_physics();
std::vector<CheckResult> verify_marl_coupling();
std::vector<CheckResult> verify_determinism();
std::vector<CheckResult> verify_learning_smoke();  // long-running, qualitative

/// Largest action-mean gap between agents i and N_s-1-i on a
/// mirror-symmetric snapshot, for a GI trunk with the given flip mode.
/// Feeding the naive flip here is the mutation that the physical
/// mirror-coupling check must catch.
double marl_coupling_gap(nets::FlipMode mode, bool pe_enabled, std::uint64_t param_seed);

std::vector<CheckResult> run_verify_suite(bool include_long);

/// Prints one line per check; returns the number of failures.
int report_checks(const std::vector<CheckResult>& checks);

}  // namespace rbclab::lab
