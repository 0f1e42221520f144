#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "caforge/engine.hpp"

namespace caforge {

// Raised when the engine and the naive reference disagree on a workload; a
// benchmark that fails this gate measures nothing and produces no report.
struct EquivalenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One definitional update of any model: per-cell scalar gathers and plain
// loops, sharing no optimized code paths with the engine. Serves as the
// benchmark baseline and as an equivalence oracle.
State naive_reference_step(const CaModel& model, const State& state,
                           const InputField* input = nullptr,
                           std::uint64_t step_seed = 0);

// Multi-step reference run using the same per-step seed derivation as the
// engine's rollout.
State naive_reference_rollout(const CaModel& model, State state, int steps,
                              std::uint64_t master_seed);

struct BenchWorkload {
  std::string name;
  CaModel model;
  State initial;
  int steps = 0;
  std::uint64_t seed = 0;
  // 0 requires bit-identical final states (discrete rules); otherwise the
  // equivalence gate allows |engine - ref| <= tolerance * (1 + |ref|).
  float tolerance = 0.0f;
};

// Named default workloads:
//   eca          width 4096, rule 110, 1000 steps          (exact match)
//   life         1024 x 1024 Conway soup, 100 steps        (exact match)
//   lenia        128 x 128, radius-13 ring, 32 steps       (1e-4)
//   nca-forward  64 x 64, 16 channels, hidden 128, 16 steps (1e-4)
// Throws std::invalid_argument for unknown names.
BenchWorkload make_bench_workload(const std::string& name);

// Same, with the lattice dims and/or step count overridden when non-empty /
// positive.
BenchWorkload make_bench_workload(const std::string& name,
                                  const std::vector<int>& dims, int steps);

struct BenchReport {
  std::string workload;
  std::vector<int> dims;
  int steps = 0;
  int threads = 1;                 // engine parallelism cap in effect
  std::int64_t cell_updates = 0;   // cells * steps, per run
  double engine_seconds = 0.0;     // median over timed repetitions
  double reference_seconds = 0.0;  // median over timed repetitions
  double engine_updates_per_sec = 0.0;
  double reference_updates_per_sec = 0.0;
  double speedup = 0.0;  // engine rate / reference rate
};

// Times the engine and the reference over the identical workload (one
// untimed engine warmup, then `repetitions` timed runs of each side, medians
// reported) and verifies final-state agreement first. Throws
// EquivalenceError when that gate fails.
BenchReport run_benchmark(const BenchWorkload& workload, int repetitions = 5);

// The report as a single line of JSON.
std::string bench_report_json(const BenchReport& report);

}  // namespace caforge
