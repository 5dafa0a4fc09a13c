#pragma once

#include <string>
#include <vector>

namespace vfi {

enum class SelftestLevel { fast, full };

struct SelftestOptions {
  SelftestLevel level = SelftestLevel::fast;
  // Deliberately perturbs a softmax result inside the checks; the harness
  // must then fail and name the group. Exists to prove failures surface.
  bool inject_softmax_fault = false;
  // When non-empty and the full-level overfit group runs, its loss curve is
  // written here as CSV (step,total,rec,warp1,warp2).
  std::string loss_curve_path;
};

struct GroupResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// Runs the invariant groups of every module; fast level skips training-time
// checks (gradient fidelity, overfit).
std::vector<GroupResult> run_selftest(const SelftestOptions& opts);

}  // namespace vfi
