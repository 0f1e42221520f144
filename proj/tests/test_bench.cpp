#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "caforge/bench.hpp"
#include "caforge/engine.hpp"
#include "caforge/rng.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace caforge;

namespace {

State random_bits(std::vector<int> dims, std::uint64_t seed, float density) {
  State s(LatticeSpec(std::move(dims), 1, Boundary::Periodic));
  rng::Stream stream(seed);
  for (float& v : s.values) {
    v = stream.next_uniform(0.0f, 1.0f) < density ? 1.0f : 0.0f;
  }
  return s;
}

void fill_uniform(std::vector<float>& v, std::uint64_t seed, float lo,
                  float hi) {
  rng::Stream stream(seed);
  for (float& x : v) x = stream.next_uniform(lo, hi);
}

}  // namespace

TEST_CASE("reference step matches the engine for all 256 elementary rules") {
  for (int rule = 0; rule < 256; ++rule) {
    CAPTURE(rule);
    for (Boundary b : {Boundary::Periodic, Boundary::ZeroPad}) {
      CaModel model = CaModel::eca(rule, b);
      State s = random_bits({32}, 1000 + rule, 0.5f);
      s.spec.boundary = b;
      const State engine_next = step(model, s);
      const State naive_next = naive_reference_step(model, s);
      CHECK(engine_next.values == naive_next.values);
    }
  }
}

TEST_CASE("reference step matches the engine on random life grids") {
  for (int trial = 0; trial < 8; ++trial) {
    CAPTURE(trial);
    for (Boundary b : {Boundary::Periodic, Boundary::ZeroPad}) {
      CaModel model = CaModel::life(LifeRule::conway(), b);
      State s = random_bits({32, 32}, 2000 + trial, 0.4f);
      s.spec.boundary = b;
      const State engine_next = step(model, s);
      const State naive_next = naive_reference_step(model, s);
      CHECK(engine_next.values == naive_next.values);
    }
  }
  // A non-Conway rule exercises the birth/survive tables.
  const std::vector<int> birth = {3, 6};
  const std::vector<int> survive = {2, 3};
  CaModel high = CaModel::life(LifeRule::from_counts(birth, survive));
  State s = random_bits({24, 24}, 2100, 0.5f);
  CHECK(step(high, s).values == naive_reference_step(high, s).values);
}

TEST_CASE("reference step matches the spectral engine path on a ring rule") {
  // Radius 13 resolves to the FFT path; the reference gathers directly.
  LeniaRule rule = lenia_default_rule();
  CaModel model = CaModel::lenia(rule);
  State s = new_state(LatticeSpec({32, 32}, 1, Boundary::Periodic),
                      StateInit::Uniform01, 31);
  const State engine_next = step(model, s);
  const State naive_next = naive_reference_step(model, s);
  REQUIRE(engine_next.values.size() == naive_next.values.size());
  for (std::size_t i = 0; i < engine_next.values.size(); ++i) {
    CHECK(std::abs(engine_next.values[i] - naive_next.values[i]) <= 1e-4f);
  }
}

TEST_CASE("reference rollout tracks a neural model step for step") {
  NcaParams p = init_nca_params(41, 8, 3, 24);
  rng::Stream weights(42);
  for (auto* t : p.tensors()) {
    for (float& v : *t) v = weights.next_uniform(-0.3f, 0.3f);
  }
  p.fire_rate = 0.5f;
  CaModel model =
      CaModel::neural(std::move(p), identity_sobel_bank(2, 3),
                      Boundary::ZeroPad);
  State s0 = new_state(LatticeSpec({12, 12}, 8, Boundary::ZeroPad),
                       StateInit::Uniform01, 43);
  const std::uint64_t seed = 44;
  const int steps = 3;

  RolloutRecord rec = rollout(model, s0, {}, steps, false, seed);
  const State ref = naive_reference_rollout(model, s0, steps, seed);
  REQUIRE(rec.final_state.values.size() == ref.values.size());
  for (std::size_t i = 0; i < ref.values.size(); ++i) {
    CHECK(std::abs(rec.final_state.values[i] - ref.values[i]) <= 1e-4f);
  }
}

TEST_CASE("reference step honors alive masking and cell masks") {
  NcaParams p = init_nca_params(51, 4, 3, 12);
  rng::Stream weights(52);
  for (auto* t : p.tensors()) {
    for (float& v : *t) v = weights.next_uniform(-0.05f, 0.05f);
  }
  p.fire_rate = 0.8f;
  p.alive_masking = true;
  CaModel model = CaModel::neural(std::move(p), identity_sobel_bank(2, 3),
                                  Boundary::ZeroPad);
  CellMask mask = CellMask::all(36, true);
  mask.updatable[7] = 0;
  model.mask = mask;

  State s(LatticeSpec({6, 6}, 4, Boundary::ZeroPad));
  fill_uniform(s.values, 53, 0.5f, 1.0f);  // alpha far from the 0.1 threshold
  const State engine_next = step(model, s, nullptr, 99);
  const State naive_next = naive_reference_step(model, s, nullptr, 99);
  for (std::size_t i = 0; i < naive_next.values.size(); ++i) {
    CHECK(std::abs(engine_next.values[i] - naive_next.values[i]) <= 1e-4f);
  }
}

TEST_CASE("benchmark workloads are deterministic and gate on equivalence") {
  const BenchWorkload a = make_bench_workload("eca", {64}, 16);
  const BenchWorkload b = make_bench_workload("eca", {64}, 16);
  CHECK(a.initial.values == b.initial.values);
  CHECK(a.seed == b.seed);
  CHECK(a.steps == 16);
  CHECK(a.initial.spec.dims == std::vector<int>{64});

  const BenchReport report = run_benchmark(a, 3);
  CHECK(report.workload == "eca");
  CHECK(report.cell_updates == 64 * 16);
  CHECK(report.engine_updates_per_sec > 0.0);
  CHECK(report.reference_updates_per_sec > 0.0);
  CHECK(report.speedup ==
        doctest::Approx(report.engine_updates_per_sec /
                        report.reference_updates_per_sec));
  CHECK(report.threads >= 1);
}

TEST_CASE("benchmark runs every named workload at reduced size") {
  for (const char* name : {"life", "lenia", "nca-forward"}) {
    CAPTURE(name);
    const std::vector<int> dims =
        std::string(name) == "life" ? std::vector<int>{24, 24}
                                    : std::vector<int>{16, 16};
    const BenchWorkload w = make_bench_workload(name, dims, 4);
    const BenchReport report = run_benchmark(w, 3);
    const std::int64_t expected = std::string(name) == "life"
                                      ? 24LL * 24 * 4
                                      : 16LL * 16 * 4;
    CHECK(report.cell_updates == expected);
    CHECK(report.engine_seconds > 0.0);
    CHECK(report.reference_seconds > 0.0);
  }
}

TEST_CASE("the equivalence gate rejects numerically divergent paths") {
  // Demanding bit-exact agreement between the spectral engine path and the
  // direct-gather reference must fail: only the tolerance makes them
  // comparable. Pull the state into the band where the growth bump is live
  // so low-order float differences actually propagate.
  BenchWorkload w = make_bench_workload("lenia", {16, 16}, 2);
  for (float& v : w.initial.values) v *= 0.3f;
  w.tolerance = 0.0f;
  CHECK_THROWS_AS(run_benchmark(w, 1), std::runtime_error);
}

TEST_CASE("unknown workloads and bad repetition counts are rejected") {
  CHECK_THROWS_AS(make_bench_workload("sandpile"), std::invalid_argument);
  const BenchWorkload w = make_bench_workload("eca", {16}, 2);
  CHECK_THROWS_AS(run_benchmark(w, 0), std::invalid_argument);
}

TEST_CASE("benchmark reports serialize as single-line structured records") {
  const BenchWorkload w = make_bench_workload("eca", {32}, 4);
  const BenchReport report = run_benchmark(w, 1);
  const std::string line = bench_report_json(report);
  CHECK(line.find('\n') == std::string::npos);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("workload").get<std::string>() == "eca");
  CHECK(j.at("steps").get<int>() == 4);
  CHECK(j.at("speedup").get<double>() > 0.0);
  CHECK(j.at("cell_updates").get<std::int64_t>() == 32 * 4);
}
