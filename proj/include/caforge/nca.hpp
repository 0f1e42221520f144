#pragma once

#include <cstdint>
#include <vector>

#include "caforge/lattice.hpp"
#include "caforge/perceive.hpp"

namespace caforge {

// Parameters of the per-cell two-layer network:
//   hidden = relu(perception * w1 + b1)
//   delta  = hidden * w2 + b2
//   next   = state + delta   (on firing cells)
// w1 is [perception_channels x hidden] row-major, w2 is [hidden x channels].
struct NcaParams {
  int perception_channels = 0;  // includes concatenated input channels
  int hidden = 0;
  int channels = 0;

  std::vector<float> w1, b1, w2, b2;

  float fire_rate = 0.5f;
  bool alive_masking = false;
  float alive_threshold = 0.1f;
  int alpha_channel = 3;
  bool residual = true;  // false = plain MLP update (delta replaces state)

  std::size_t param_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }
  void validate() const;

  // Fixed tensor order (w1, b1, w2, b2) for optimizers and checkpoints.
  std::vector<std::vector<float>*> tensors();
  std::vector<const std::vector<float>*> tensors() const;
};

// Per-cell Bernoulli(fire_rate) gate, reproducible from its seed.
struct DropoutMask {
  std::vector<std::uint8_t> fire;
  std::uint64_t seed = 0;
};

DropoutMask make_dropout_mask(std::int64_t cell_count, float fire_rate,
                              std::uint64_t seed);

// In-place variant for steady-state loops; reuses mask.fire capacity.
void fill_dropout_mask(DropoutMask& mask, std::int64_t cell_count,
                       float fire_rate, std::uint64_t seed);

// Moore(1) max-pool of the alpha channel against the threshold;
// out[cell] = 1 where the pooled alpha exceeds it.
void compute_alive(const State& state, int alpha_channel, float threshold,
                   std::vector<std::uint8_t>& out);

struct NcaWorkspace {
  std::vector<float> hidden;
  std::vector<std::uint8_t> alive_pre, alive_post;
};

State nca_update(const State& state, const PerceptionField& perception,
                 const NcaParams& params, const DropoutMask& mask);

// Engine-facing variant: perception given as a cells x stride row-major
// buffer whose first params.perception_channels columns are valid.
void nca_update_into(const State& state, const float* perception,
                     std::int64_t perception_stride, const NcaParams& params,
                     const DropoutMask& mask, State& out, NcaWorkspace& ws);

// w1/b1 drawn uniform with fan-in scaling; w2/b2 zero so the fresh rule is
// the identity map.
NcaParams init_nca_params(std::uint64_t seed, int state_channels,
                          int kernel_count, int hidden,
                          int extra_input_channels = 0);

}  // namespace caforge
