#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "caforge/lattice.hpp"
#include "caforge/nca.hpp"
#include "caforge/perceive.hpp"
#include "caforge/rules.hpp"

namespace caforge {

enum class PerceivePath : std::uint8_t { Auto = 0, Direct = 1, Fft = 2 };

// A complete automaton: boundary policy, perception bank, and the local
// update rule. Immutable while a rollout runs.
struct CaModel {
  using Update = std::variant<EcaRule, LifeRule, LeniaRule, NcaParams>;

  Update update;
  KernelBank bank;  // neural perception; Lenia carries its own kernel
  PerceivePath perceive_path = PerceivePath::Auto;
  Boundary boundary = Boundary::Periodic;
  int input_channels = 0;  // external per-cell signal, concatenated to
                           // the perception field (neural rules only)
  std::optional<CellMask> mask;  // cells outside it keep their state

  bool is_neural() const {
    return std::holds_alternative<NcaParams>(update);
  }
  const NcaParams& nca() const { return std::get<NcaParams>(update); }
  NcaParams& nca() { return std::get<NcaParams>(update); }

  static CaModel eca(int rule_number, Boundary b = Boundary::Periodic);
  static CaModel life(LifeRule rule, Boundary b = Boundary::Periodic);
  static CaModel lenia(LeniaRule rule);
  static CaModel neural(NcaParams params, KernelBank bank, Boundary b,
                        int input_channels = 0);

  // Throws std::invalid_argument if the model cannot run on `spec`
  // (rank/channel mismatches, FFT on a non-periodic grid, ...).
  void validate_for(const LatticeSpec& spec) const;
};

// Seed for the dropout mask of step t, derived counter-style from the
// rollout seed so replay never needs stored masks.
std::uint64_t step_seed_for(std::uint64_t master_seed, std::int64_t step);

// Which convolution path a neural model's perception resolves to. Exposed so
// replaying code (e.g. the backward pass) matches the forward bit-for-bit.
bool neural_perceive_uses_fft(const CaModel& model);

// Reusable buffers for repeated stepping of one (model, lattice) pair.
// Steady-state stepping performs no per-step heap allocation.
struct EngineWorkspace {
  std::vector<float> perception;
  std::vector<float> potential;  // Lenia
  std::optional<FftConvCache> fft_cache;
  std::optional<DirectConvCache> direct_cache;
  DropoutMask dropout;
  NcaWorkspace nca;
};

// One synchronous global update. `input` must be present exactly when the
// model declares input channels. step_seed feeds the neural dropout mask;
// deterministic rules ignore it.
State step(const CaModel& model, const State& state,
           const InputField* input = nullptr, std::uint64_t step_seed = 0);

void step_into(const CaModel& model, const State& state,
               const InputField* input, std::uint64_t step_seed, State& out,
               EngineWorkspace& ws);

struct RolloutRecord {
  State initial_state;
  State final_state;
  // Post-step states, one per step, so trajectory.back() == final_state.
  // Empty unless record_all was set.
  std::vector<State> trajectory;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> step_seeds;
  double wall_seconds = 0.0;
  std::int64_t cell_updates = 0;

  double cell_updates_per_second() const {
    return wall_seconds > 0.0
               ? static_cast<double>(cell_updates) / wall_seconds
               : 0.0;
  }
};

// Iterates step() num_steps times with per-step seeds derive(seed, t).
// `inputs`, when non-empty, supplies one field per step. first_step offsets
// the seed counter so chained rollouts reproduce one long run exactly.
RolloutRecord rollout(const CaModel& model, const State& state0,
                      std::span<const InputField> inputs, int num_steps,
                      bool record_all, std::uint64_t seed,
                      std::int64_t first_step = 0);

}  // namespace caforge
