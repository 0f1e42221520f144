#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "caforge/lattice.hpp"
#include "caforge/perceive.hpp"

namespace caforge {

// Wolfram-numbered elementary rule over (left, self, right).
struct EcaRule {
  int rule_number = 0;

  EcaRule() = default;
  explicit EcaRule(int number);
};

// Outer-totalistic birth/survive rule over the Moore(1) neighborhood,
// neighbor count excluding the cell itself.
struct LifeRule {
  std::array<bool, 9> birth{};
  std::array<bool, 9> survive{};

  static LifeRule conway();  // B3/S23
  static LifeRule from_counts(std::span<const int> birth_counts,
                              std::span<const int> survive_counts);
};

// Convolution potential -> Gaussian-bump growth -> clipped Euler step.
struct LeniaRule {
  enum class ConvPath : std::uint8_t { Auto = 0, Direct = 1, Fft = 2 };

  KernelBank kernel;
  float growth_center = 0.15f;
  float growth_width = 0.015f;
  float dt = 0.1f;
  ConvPath path = ConvPath::Auto;

  float growth(float potential) const;
  bool use_fft() const;  // resolves Auto: FFT beyond radius 7
};

// Default demo rule: 128x128, R=13 single-ring shell, mu=0.15, sigma=0.015,
// dt=0.1. Supports the familiar Orbium-style gliders.
LeniaRule lenia_default_rule();
LatticeSpec lenia_default_spec();

State eca_step(const State& state, const EcaRule& rule, Boundary boundary);
State life_step(const State& state, const LifeRule& rule, Boundary boundary);
State lenia_step(const State& state, const LeniaRule& rule);

// In-place variants used by the engine's rollout loop.
void eca_step_into(const State& state, const EcaRule& rule, Boundary boundary,
                   State& out);
void life_step_into(const State& state, const LifeRule& rule,
                    Boundary boundary, State& out);
// Exactly one of the caches may be non-null; with neither, a direct pass is
// planned on the spot.
void lenia_step_into(const State& state, const LeniaRule& rule, State& out,
                     std::vector<float>& potential,
                     FftConvCache* fft_cache = nullptr,
                     const DirectConvCache* direct_cache = nullptr);

}  // namespace caforge
