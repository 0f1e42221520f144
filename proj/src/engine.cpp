#include "caforge/engine.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>
#include <utility>

#include "caforge/rng.hpp"

namespace caforge {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

bool neural_perceive_uses_fft(const CaModel& model) {
  switch (model.perceive_path) {
    case PerceivePath::Direct:
      return false;
    case PerceivePath::Fft:
      return true;
    case PerceivePath::Auto:
      break;
  }
  if (model.boundary != Boundary::Periodic) return false;
  int max_extent = 0;
  for (const Kernel& k : model.bank.kernels) {
    for (int e : k.extents) max_extent = std::max(max_extent, e);
  }
  return (max_extent - 1) / 2 > 7;
}

CaModel CaModel::eca(int rule_number, Boundary b) {
  CaModel m;
  m.update = EcaRule(rule_number);
  m.boundary = b;
  return m;
}

CaModel CaModel::life(LifeRule rule, Boundary b) {
  CaModel m;
  m.update = rule;
  m.boundary = b;
  return m;
}

CaModel CaModel::lenia(LeniaRule rule) {
  CaModel m;
  m.bank = rule.kernel;
  m.update = std::move(rule);
  m.boundary = Boundary::Periodic;
  return m;
}

CaModel CaModel::neural(NcaParams params, KernelBank bank, Boundary b,
                        int input_channels) {
  CaModel m;
  m.update = std::move(params);
  m.bank = std::move(bank);
  m.boundary = b;
  m.input_channels = input_channels;
  return m;
}

void CaModel::validate_for(const LatticeSpec& spec) const {
  spec.validate();
  if (spec.boundary != boundary) {
    throw std::invalid_argument(
        "model: state boundary policy differs from the model's");
  }
  if (input_channels < 0) {
    throw std::invalid_argument("model: negative input channel count");
  }
  if (input_channels > 0 && !is_neural()) {
    throw std::invalid_argument(
        "model: external input requires a neural update rule");
  }
  if (mask && static_cast<std::int64_t>(mask->updatable.size()) !=
                  spec.cell_count()) {
    throw std::invalid_argument("model: cell mask size mismatch");
  }
  std::visit(
      overloaded{
          [&](const EcaRule&) {
            if (spec.rank() != 1 || spec.channels != 1) {
              throw std::invalid_argument(
                  "model: elementary rules need a 1-D single-channel grid");
            }
          },
          [&](const LifeRule&) {
            if (spec.rank() != 2 || spec.channels != 1) {
              throw std::invalid_argument(
                  "model: totalistic life rules need a 2-D single-channel "
                  "grid");
            }
          },
          [&](const LeniaRule& r) {
            if (boundary != Boundary::Periodic) {
              throw std::invalid_argument(
                  "model: continuous shell rules need a periodic grid");
            }
            if (r.kernel.rank() != spec.rank()) {
              throw std::invalid_argument("model: kernel rank mismatch");
            }
          },
          [&](const NcaParams& p) {
            p.validate();
            if (bank.kernel_count() == 0 || bank.rank() != spec.rank()) {
              throw std::invalid_argument(
                  "model: perception bank rank mismatch");
            }
            if (p.channels != spec.channels) {
              throw std::invalid_argument(
                  "model: state channel count mismatch");
            }
            if (perception_channels(bank, spec.channels) + input_channels !=
                p.perception_channels) {
              throw std::invalid_argument(
                  "model: perception width does not match bank + input");
            }
            if (perceive_path == PerceivePath::Fft &&
                boundary != Boundary::Periodic) {
              throw std::invalid_argument(
                  "model: spectral perception needs a periodic grid");
            }
          },
      },
      update);
}

std::uint64_t step_seed_for(std::uint64_t master_seed, std::int64_t step) {
  return rng::derive(master_seed, static_cast<std::uint64_t>(step));
}

void step_into(const CaModel& model, const State& state,
               const InputField* input, std::uint64_t step_seed, State& out,
               EngineWorkspace& ws) {
  const LatticeSpec& spec = state.spec;
  model.validate_for(spec);

  if (model.input_channels > 0) {
    if (input == nullptr) {
      throw std::invalid_argument(
          "step: model declares input channels but no input was given");
    }
    if (input->spec.dims != spec.dims) {
      throw std::invalid_argument("step: input spatial dims mismatch");
    }
    if (input->spec.channels != model.input_channels) {
      throw std::invalid_argument("step: input channel count mismatch");
    }
    if (static_cast<std::int64_t>(input->values.size()) !=
        input->spec.value_count()) {
      throw std::invalid_argument("step: input buffer size mismatch");
    }
  } else if (input != nullptr) {
    throw std::invalid_argument(
        "step: input given to a model that declares none");
  }

  out.spec = spec;
  out.values.resize(static_cast<std::size_t>(spec.value_count()));

  std::visit(
      overloaded{
          [&](const EcaRule& r) {
            eca_step_into(state, r, model.boundary, out);
          },
          [&](const LifeRule& r) {
            life_step_into(state, r, model.boundary, out);
          },
          [&](const LeniaRule& r) {
            if (r.use_fft()) {
              if (!ws.fft_cache) ws.fft_cache.emplace(r.kernel, spec.dims);
              lenia_step_into(state, r, out, ws.potential, &*ws.fft_cache);
            } else {
              if (!ws.direct_cache)
                ws.direct_cache.emplace(r.kernel, spec.dims,
                                        Boundary::Periodic);
              lenia_step_into(state, r, out, ws.potential, nullptr,
                              &*ws.direct_cache);
            }
          },
          [&](const NcaParams& p) {
            const std::int64_t cells = spec.cell_count();
            const int stride = p.perception_channels;
            const int bank_pch = perception_channels(model.bank, spec.channels);
            ws.perception.resize(static_cast<std::size_t>(cells) * stride);
            if (neural_perceive_uses_fft(model)) {
              if (!ws.fft_cache) ws.fft_cache.emplace(model.bank, spec.dims);
              ws.fft_cache->apply(state, ws.perception.data(), stride);
            } else {
              if (!ws.direct_cache)
                ws.direct_cache.emplace(model.bank, spec.dims,
                                        model.boundary);
              ws.direct_cache->apply(state, ws.perception.data(), stride);
            }
            if (model.input_channels > 0) {
              const int ic = model.input_channels;
              const float* iv = input->values.data();
#pragma omp parallel for schedule(static)
              for (std::int64_t cell = 0; cell < cells; ++cell) {
                float* dst = ws.perception.data() + cell * stride + bank_pch;
                const float* src = iv + cell * ic;
                for (int c = 0; c < ic; ++c) dst[c] = src[c];
              }
            }
            fill_dropout_mask(ws.dropout, cells, p.fire_rate, step_seed);
            nca_update_into(state, ws.perception.data(), stride, p,
                            ws.dropout, out, ws.nca);
          },
      },
      model.update);

  if (model.mask) {
    const std::uint8_t* up = model.mask->updatable.data();
    const int ch = spec.channels;
    const std::int64_t cells = spec.cell_count();
    const float* src = state.values.data();
    float* dst = out.values.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      if (!up[cell]) {
        for (int c = 0; c < ch; ++c) dst[cell * ch + c] = src[cell * ch + c];
      }
    }
  }
}

State step(const CaModel& model, const State& state, const InputField* input,
           std::uint64_t step_seed) {
  State out;
  EngineWorkspace ws;
  step_into(model, state, input, step_seed, out, ws);
  return out;
}

RolloutRecord rollout(const CaModel& model, const State& state0,
                      std::span<const InputField> inputs, int num_steps,
                      bool record_all, std::uint64_t seed,
                      std::int64_t first_step) {
  if (num_steps < 0) {
    throw std::invalid_argument("rollout: negative step count");
  }
  model.validate_for(state0.spec);
  if (!inputs.empty() && static_cast<int>(inputs.size()) != num_steps) {
    throw std::invalid_argument("rollout: inputs length must equal num_steps");
  }
  if (model.input_channels > 0 && inputs.empty() && num_steps > 0) {
    throw std::invalid_argument(
        "rollout: model declares input channels but no inputs were given");
  }

  RolloutRecord rec;
  rec.seed = seed;
  rec.initial_state = state0;
  rec.step_seeds.reserve(static_cast<std::size_t>(num_steps));
  if (record_all) rec.trajectory.reserve(static_cast<std::size_t>(num_steps));

  State cur = state0;
  State next;
  EngineWorkspace ws;
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < num_steps; ++t) {
    const std::uint64_t ss = step_seed_for(seed, first_step + t);
    rec.step_seeds.push_back(ss);
    const InputField* in = inputs.empty() ? nullptr : &inputs[t];
    step_into(model, cur, in, ss, next, ws);
    std::swap(cur, next);
    if (record_all) rec.trajectory.push_back(cur);
  }
  const auto t1 = std::chrono::steady_clock::now();
  rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  rec.cell_updates = state0.spec.cell_count() * num_steps;
  rec.final_state = std::move(cur);
  return rec;
}

}  // namespace caforge
