#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sct::verify {

// One named verification check with the numeric evidence behind its verdict.
struct CheckResult {
  std::string name;
  bool pass = false;
  double worst = 0.0;   // worst observed error
  double limit = 0.0;   // tolerance it was judged against
  std::string detail;
};

// ---- gradient checks --------------------------------------------------------
// Seeded finite-difference checks, `trials` independent random graphs per op.
// Elementwise/movement ops are held to 1e-4 relative error, composite graphs
// (scan, ss2d, vss block, contrast loss, full model) to 1e-3.
std::vector<std::string> gradcheck_names();
CheckResult gradcheck_op(const std::string& op, std::size_t trials,
                         std::uint64_t seed);
std::vector<CheckResult> gradcheck_all(std::size_t trials, std::uint64_t seed);

// Negative control: corrupts the clip adjoint via the fault hook and requires
// the checker to flag the op, then restores it.
CheckResult fault_injection_check(std::uint64_t seed);

// ---- scan oracle ------------------------------------------------------------
// Recurrence vs the unrolled closed-form summation (independent loops + libm),
// `cases` randomized (L,E,D) draws plus tiny/large-timestep limit cases.
// Limit 1e-10 elementwise.
CheckResult scan_oracle_check(std::size_t cases, std::uint64_t seed);

// ---- window arithmetic ------------------------------------------------------
// Normalization endpoints, inverse round trip, window-edge mapping, and
// renormalization slopes.
std::vector<CheckResult> window_checks();

// ---- container formats ------------------------------------------------------
// Randomized bit-exact round trips and size-formula agreement.
CheckResult volume_roundtrip_check(std::size_t cases, std::uint64_t seed);
CheckResult checkpoint_roundtrip_check(std::size_t cases, std::uint64_t seed);
// 20 corrupted-file fixtures; each must be rejected with the exact byte offset.
CheckResult corrupt_fixture_check();

// Everything above at default sizes, in a stable order.
std::vector<CheckResult> selftest(std::uint64_t seed);

bool all_pass(const std::vector<CheckResult>& rs);
std::string format_results(const std::vector<CheckResult>& rs);

}  // namespace sct::verify
