#include "caforge/nca.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "caforge/rng.hpp"

namespace caforge {

namespace {

using MatrixRf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapRf = Eigen::Map<const MatrixRf>;
using MapRf = Eigen::Map<MatrixRf>;
using StridedConstMapRf =
    Eigen::Map<const MatrixRf, Eigen::Unaligned, Eigen::OuterStride<>>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXf>;

}  // namespace

void NcaParams::validate() const {
  if (perception_channels <= 0 || hidden <= 0 || channels <= 0) {
    throw std::invalid_argument("nca params: dimensions must be positive");
  }
  auto want = [](const std::vector<float>& t, std::size_t n,
                 const char* name) {
    if (t.size() != n) {
      throw std::invalid_argument(std::string("nca params: ") + name +
                                  " has the wrong element count");
    }
  };
  want(w1, static_cast<std::size_t>(perception_channels) * hidden, "w1");
  want(b1, static_cast<std::size_t>(hidden), "b1");
  want(w2, static_cast<std::size_t>(hidden) * channels, "w2");
  want(b2, static_cast<std::size_t>(channels), "b2");
  if (!(fire_rate > 0.0f) || fire_rate > 1.0f) {
    throw std::invalid_argument("nca params: fire_rate must be in (0, 1]");
  }
  if (alive_masking && (alpha_channel < 0 || alpha_channel >= channels)) {
    throw std::invalid_argument("nca params: alpha channel out of range");
  }
}

std::vector<std::vector<float>*> NcaParams::tensors() {
  return {&w1, &b1, &w2, &b2};
}

std::vector<const std::vector<float>*> NcaParams::tensors() const {
  return {&w1, &b1, &w2, &b2};
}

void fill_dropout_mask(DropoutMask& mask, std::int64_t cell_count,
                       float fire_rate, std::uint64_t seed) {
  if (cell_count < 0) {
    throw std::invalid_argument("dropout mask: negative cell count");
  }
  if (!(fire_rate > 0.0f) || fire_rate > 1.0f) {
    throw std::invalid_argument("dropout mask: fire_rate must be in (0, 1]");
  }
  mask.seed = seed;
  mask.fire.resize(static_cast<std::size_t>(cell_count));
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < cell_count; ++i) {
    mask.fire[i] = rng::u01(rng::derive(seed, static_cast<std::uint64_t>(i))) <
                           fire_rate
                       ? 1
                       : 0;
  }
}

DropoutMask make_dropout_mask(std::int64_t cell_count, float fire_rate,
                              std::uint64_t seed) {
  DropoutMask mask;
  fill_dropout_mask(mask, cell_count, fire_rate, seed);
  return mask;
}

void compute_alive(const State& state, int alpha_channel, float threshold,
                   std::vector<std::uint8_t>& out) {
  const LatticeSpec& spec = state.spec;
  spec.validate();
  if (alpha_channel < 0 || alpha_channel >= spec.channels) {
    throw std::invalid_argument("compute_alive: alpha channel out of range");
  }
  const int rank = spec.rank();
  const std::int64_t cells = spec.cell_count();
  out.assign(static_cast<std::size_t>(cells), 0);
  const bool periodic = spec.boundary == Boundary::Periodic;

#pragma omp parallel
  {
    static thread_local std::vector<int> coord, ncoord, delta;
    coord.resize(static_cast<std::size_t>(rank));
    ncoord.resize(static_cast<std::size_t>(rank));
    delta.resize(static_cast<std::size_t>(rank));
#pragma omp for schedule(static)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      spec.cell_coord(cell, coord);
      // Max-pool the alpha channel over the 3^rank box. A missing neighbor
      // under zero padding contributes alpha 0.
      float best = periodic ? -std::numeric_limits<float>::infinity() : 0.0f;
      delta.assign(static_cast<std::size_t>(rank), -1);
      bool done = false;
      while (!done) {
        bool inside = true;
        for (int a = 0; a < rank; ++a) {
          int v = coord[a] + delta[a];
          if (periodic) {
            v = wrap_index(v, spec.dims[a]);
          } else if (v < 0 || v >= spec.dims[a]) {
            inside = false;
            break;
          }
          ncoord[a] = v;
        }
        if (inside) {
          const float alpha =
              state.at(spec.cell_index(ncoord), alpha_channel);
          best = alpha > best ? alpha : best;
        }
        done = true;
        for (int a = rank - 1; a >= 0; --a) {
          if (++delta[a] <= 1) {
            done = false;
            break;
          }
          delta[a] = -1;
        }
      }
      out[cell] = best > threshold ? 1 : 0;
    }
  }
}

void nca_update_into(const State& state, const float* perception,
                     std::int64_t perception_stride, const NcaParams& params,
                     const DropoutMask& mask, State& out, NcaWorkspace& ws) {
  params.validate();
  const LatticeSpec& spec = state.spec;
  if (spec.channels != params.channels) {
    throw std::invalid_argument("nca update: state channel count mismatch");
  }
  const std::int64_t cells = spec.cell_count();
  if (static_cast<std::int64_t>(mask.fire.size()) != cells) {
    throw std::invalid_argument("nca update: dropout mask size mismatch");
  }
  if (perception_stride < params.perception_channels) {
    throw std::invalid_argument("nca update: perception stride too small");
  }

  out.spec = spec;
  out.values.resize(static_cast<std::size_t>(spec.value_count()));

  const int pch = params.perception_channels;
  const int hidden = params.hidden;
  const int ch = params.channels;

  ws.hidden.resize(static_cast<std::size_t>(cells) * hidden);

  StridedConstMapRf P(perception, cells, pch,
                      Eigen::OuterStride<>(perception_stride));
  ConstMapRf W1(params.w1.data(), pch, hidden);
  ConstMapRf W2(params.w2.data(), hidden, ch);
  MapRf H(ws.hidden.data(), cells, hidden);
  MapRf O(out.values.data(), cells, ch);

  H.noalias() = P * W1;
  H.rowwise() += ConstRowMap(params.b1.data(), hidden);
  H = H.cwiseMax(0.0f);

  O.noalias() = H * W2;
  O.rowwise() += ConstRowMap(params.b2.data(), ch);

  // Dropout gate: firing cells take the network output (plus the previous
  // state when residual); silent cells carry the previous state through.
  const float* src = state.values.data();
  float* dst = out.values.data();
  const bool residual = params.residual;
#pragma omp parallel for schedule(static)
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    float* o = dst + cell * ch;
    const float* s = src + cell * ch;
    if (mask.fire[cell]) {
      if (residual) {
        for (int c = 0; c < ch; ++c) o[c] += s[c];
      }
    } else {
      for (int c = 0; c < ch; ++c) o[c] = s[c];
    }
  }

  if (params.alive_masking) {
    compute_alive(state, params.alpha_channel, params.alive_threshold,
                  ws.alive_pre);
    compute_alive(out, params.alpha_channel, params.alive_threshold,
                  ws.alive_post);
#pragma omp parallel for schedule(static)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      if (!(ws.alive_pre[cell] && ws.alive_post[cell])) {
        float* o = dst + cell * ch;
        for (int c = 0; c < ch; ++c) o[c] = 0.0f;
      }
    }
  }
}

State nca_update(const State& state, const PerceptionField& perception,
                 const NcaParams& params, const DropoutMask& mask) {
  if (!perception.spec.same_space(state.spec)) {
    throw std::invalid_argument("nca update: perception grid mismatch");
  }
  if (perception.spec.channels != params.perception_channels) {
    throw std::invalid_argument(
        "nca update: perception channel count mismatch");
  }
  State out;
  NcaWorkspace ws;
  nca_update_into(state, perception.values.data(), perception.spec.channels,
                  params, mask, out, ws);
  return out;
}

NcaParams init_nca_params(std::uint64_t seed, int state_channels,
                          int kernel_count, int hidden,
                          int extra_input_channels) {
  if (state_channels <= 0 || kernel_count <= 0 || hidden <= 0 ||
      extra_input_channels < 0) {
    throw std::invalid_argument("nca init: dimensions must be positive");
  }
  NcaParams p;
  p.channels = state_channels;
  p.perception_channels = state_channels * kernel_count + extra_input_channels;
  p.hidden = hidden;

  const float bound =
      1.0f / std::sqrt(static_cast<float>(p.perception_channels));
  p.w1.resize(static_cast<std::size_t>(p.perception_channels) * hidden);
  p.b1.resize(static_cast<std::size_t>(hidden));
  // w2/b2 stay zero: an untrained rule leaves every state fixed, so training
  // starts from "do nothing" rather than noise.
  p.w2.assign(static_cast<std::size_t>(hidden) * state_channels, 0.0f);
  p.b2.assign(static_cast<std::size_t>(state_channels), 0.0f);

  std::uint64_t k = 0;
  for (float& v : p.w1) {
    v = bound * (2.0f * rng::u01(rng::derive(seed, k++)) - 1.0f);
  }
  for (float& v : p.b1) {
    v = bound * (2.0f * rng::u01(rng::derive(seed, k++)) - 1.0f);
  }
  return p;
}

}  // namespace caforge
