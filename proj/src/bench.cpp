#include "caforge/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <variant>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "caforge/rng.hpp"
#include "json.hpp"

namespace caforge {

namespace {

int wrap(int x, int n) { return ((x % n) + n) % n; }

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// ---------------------------------------------------------------------------
// Definitional single steps. Every rule is evaluated with per-cell scalar
// gathers written from its definition; nothing here calls the optimized
// stepping code.
// ---------------------------------------------------------------------------

State naive_eca(const State& state, const EcaRule& rule, Boundary boundary) {
  const int n = state.spec.dims[0];
  State out(state.spec);
  const bool periodic = boundary == Boundary::Periodic;
  for (int x = 0; x < n; ++x) {
    const auto bit = [&](int i) -> int {
      if (i < 0 || i >= n) {
        if (!periodic) return 0;
        i = wrap(i, n);
      }
      return state.values[i] != 0.0f ? 1 : 0;
    };
    const int pattern = (bit(x - 1) << 2) | (bit(x) << 1) | bit(x + 1);
    out.values[x] = ((rule.rule_number >> pattern) & 1) ? 1.0f : 0.0f;
  }
  return out;
}

State naive_life(const State& state, const LifeRule& rule, Boundary boundary) {
  const int h = state.spec.dims[0];
  const int w = state.spec.dims[1];
  State out(state.spec);
  const bool periodic = boundary == Boundary::Periodic;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int neighbors = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          int ny = y + dy, nx = x + dx;
          if (periodic) {
            ny = wrap(ny, h);
            nx = wrap(nx, w);
          } else if (ny < 0 || ny >= h || nx < 0 || nx >= w) {
            continue;
          }
          if (state.values[static_cast<std::size_t>(ny) * w + nx] != 0.0f) {
            ++neighbors;
          }
        }
      }
      const bool alive =
          state.values[static_cast<std::size_t>(y) * w + x] != 0.0f;
      const bool next =
          alive ? rule.survive[neighbors] : rule.birth[neighbors];
      out.values[static_cast<std::size_t>(y) * w + x] = next ? 1.0f : 0.0f;
    }
  }
  return out;
}

// One response of a centered filter at `coord`, scalar tap loop.
float gather_response(const State& state, const Kernel& k, int channel,
                      std::span<const int> coord, Boundary boundary) {
  const int rank = state.spec.rank();
  std::vector<int> kc(rank, 0), nc(rank);
  float acc = 0.0f;
  for (std::size_t i = 0; i < k.values.size(); ++i) {
    bool inside = true;
    for (int a = 0; a < rank; ++a) {
      int x = coord[a] + (kc[a] - k.extents[a] / 2);
      if (boundary == Boundary::Periodic) {
        x = wrap(x, state.spec.dims[a]);
      } else if (x < 0 || x >= state.spec.dims[a]) {
        inside = false;
      }
      nc[a] = x;
    }
    if (inside) {
      acc += k.values[i] *
             state.values[state.spec.cell_index(nc) * state.spec.channels +
                          channel];
    }
    for (int a = rank - 1; a >= 0; --a) {
      if (++kc[a] < k.extents[a]) break;
      kc[a] = 0;
    }
  }
  return acc;
}

State naive_lenia(const State& state, const LeniaRule& rule) {
  const int ch = state.spec.channels;
  if (rule.kernel.kernels.size() != 1 ||
      perception_channels(rule.kernel, ch) != ch) {
    throw std::invalid_argument(
        "reference step needs a single kernel yielding one potential per "
        "channel");
  }
  const Kernel& k = rule.kernel.kernels[0];
  const bool shared = rule.kernel.mode == KernelMode::SharedAcrossChannels;
  const std::int64_t cells = state.spec.cell_count();
  State out(state.spec);
  std::vector<int> coord(state.spec.rank());
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    state.spec.cell_coord(cell, coord);
    for (int c = 0; c < ch; ++c) {
      const int src = shared ? rule.kernel.designated_channel : c;
      const float u = gather_response(state, k, src, coord, Boundary::Periodic);
      const float d = (u - rule.growth_center) / rule.growth_width;
      const float growth = 2.0f * std::exp(-0.5f * d * d) - 1.0f;
      out.values[cell * ch + c] =
          clamp01(state.values[cell * ch + c] + rule.dt * growth);
    }
  }
  return out;
}

std::vector<std::uint8_t> naive_alive_flags(const State& state,
                                            const NcaParams& p) {
  const LatticeSpec& spec = state.spec;
  const int rank = spec.rank();
  const std::int64_t cells = spec.cell_count();
  std::vector<std::uint8_t> flags(cells);
  std::vector<int> coord(rank), delta(rank, -1), nc(rank);
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    spec.cell_coord(cell, coord);
    float best = spec.boundary == Boundary::Periodic
                     ? -std::numeric_limits<float>::infinity()
                     : 0.0f;
    std::fill(delta.begin(), delta.end(), -1);
    bool done = false;
    while (!done) {
      bool inside = true;
      for (int a = 0; a < rank; ++a) {
        int x = coord[a] + delta[a];
        if (spec.boundary == Boundary::Periodic) {
          x = wrap(x, spec.dims[a]);
        } else if (x < 0 || x >= spec.dims[a]) {
          inside = false;
        }
        nc[a] = x;
      }
      if (inside) {
        best = std::max(best, state.values[spec.cell_index(nc) * spec.channels +
                                           p.alpha_channel]);
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
    flags[cell] = best > p.alive_threshold ? 1 : 0;
  }
  return flags;
}

State naive_nca(const CaModel& model, const State& state,
                const InputField* input, std::uint64_t step_seed) {
  const NcaParams& p = model.nca();
  const LatticeSpec& spec = state.spec;
  const std::int64_t cells = spec.cell_count();
  const int ch = p.channels;
  const int kcount = static_cast<int>(model.bank.kernels.size());
  const int bank_pch = ch * kcount;
  State out(spec);
  std::vector<float> perception(p.perception_channels);
  std::vector<float> hidden(p.hidden);
  std::vector<int> coord(spec.rank());
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const bool fire =
        rng::u01(rng::derive(step_seed, static_cast<std::uint64_t>(cell))) <
        p.fire_rate;
    if (!fire) {
      for (int c = 0; c < ch; ++c) {
        out.values[cell * ch + c] = state.values[cell * ch + c];
      }
      continue;
    }
    spec.cell_coord(cell, coord);
    for (int c = 0; c < ch; ++c) {
      for (int j = 0; j < kcount; ++j) {
        perception[c * kcount + j] = gather_response(
            state, model.bank.kernels[j], c, coord, model.boundary);
      }
    }
    for (int j = bank_pch; j < p.perception_channels; ++j) {
      perception[j] =
          input->values[cell * (p.perception_channels - bank_pch) +
                        (j - bank_pch)];
    }
    for (int q = 0; q < p.hidden; ++q) {
      float z = p.b1[q];
      for (int j = 0; j < p.perception_channels; ++j) {
        z += perception[j] * p.w1[static_cast<std::size_t>(j) * p.hidden + q];
      }
      hidden[q] = z > 0.0f ? z : 0.0f;
    }
    for (int c = 0; c < ch; ++c) {
      float d = p.b2[c];
      for (int q = 0; q < p.hidden; ++q) {
        d += hidden[q] * p.w2[static_cast<std::size_t>(q) * ch + c];
      }
      out.values[cell * ch + c] =
          p.residual ? state.values[cell * ch + c] + d : d;
    }
  }
  if (p.alive_masking) {
    const std::vector<std::uint8_t> pre = naive_alive_flags(state, p);
    const std::vector<std::uint8_t> post = naive_alive_flags(out, p);
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      if (!(pre[cell] && post[cell])) {
        for (int c = 0; c < ch; ++c) out.values[cell * ch + c] = 0.0f;
      }
    }
  }
  if (model.mask) {
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      if (!model.mask->updatable[cell]) {
        for (int c = 0; c < ch; ++c) {
          out.values[cell * ch + c] = state.values[cell * ch + c];
        }
      }
    }
  }
  return out;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

State naive_reference_step(const CaModel& model, const State& state,
                           const InputField* input, std::uint64_t step_seed) {
  model.validate_for(state.spec);
  if (const auto* eca = std::get_if<EcaRule>(&model.update)) {
    return naive_eca(state, *eca, model.boundary);
  }
  if (const auto* life = std::get_if<LifeRule>(&model.update)) {
    return naive_life(state, *life, model.boundary);
  }
  if (const auto* lenia = std::get_if<LeniaRule>(&model.update)) {
    return naive_lenia(state, *lenia);
  }
  return naive_nca(model, state, input, step_seed);
}

State naive_reference_rollout(const CaModel& model, State state, int steps,
                              std::uint64_t master_seed) {
  for (int t = 0; t < steps; ++t) {
    state = naive_reference_step(model, state, nullptr,
                                 step_seed_for(master_seed, t));
  }
  return state;
}

BenchWorkload make_bench_workload(const std::string& name) {
  return make_bench_workload(name, {}, 0);
}

BenchWorkload make_bench_workload(const std::string& name,
                                  const std::vector<int>& dims, int steps) {
  BenchWorkload w;
  w.name = name;
  if (name == "eca") {
    const std::vector<int> d = dims.empty() ? std::vector<int>{4096} : dims;
    w.model = CaModel::eca(110);
    w.initial = State(LatticeSpec(d, 1, Boundary::Periodic));
    rng::Stream bits(0xbec5);
    for (float& v : w.initial.values) {
      v = bits.next_uniform(0.0f, 1.0f) < 0.5f ? 1.0f : 0.0f;
    }
    w.steps = steps > 0 ? steps : 1000;
    w.seed = 11;
    w.tolerance = 0.0f;
    return w;
  }
  if (name == "life") {
    const std::vector<int> d =
        dims.empty() ? std::vector<int>{1024, 1024} : dims;
    w.model = CaModel::life(LifeRule::conway());
    w.initial = State(LatticeSpec(d, 1, Boundary::Periodic));
    rng::Stream bits(0x11fe);
    for (float& v : w.initial.values) {
      v = bits.next_uniform(0.0f, 1.0f) < 0.35f ? 1.0f : 0.0f;
    }
    w.steps = steps > 0 ? steps : 100;
    w.seed = 12;
    w.tolerance = 0.0f;
    return w;
  }
  if (name == "lenia") {
    LeniaRule rule = lenia_default_rule();
    w.model = CaModel::lenia(rule);
    const std::vector<int> d =
        dims.empty() ? lenia_default_spec().dims : dims;
    w.initial = new_state(LatticeSpec(d, 1, Boundary::Periodic),
                          StateInit::Uniform01, 0x1e41a);
    w.steps = steps > 0 ? steps : 32;
    w.seed = 13;
    w.tolerance = 1e-4f;
    return w;
  }
  if (name == "nca-forward") {
    const std::vector<int> d = dims.empty() ? std::vector<int>{64, 64} : dims;
    NcaParams p = init_nca_params(0x9ca, 16, 3, 128);
    rng::Stream weights(0x9cb);
    for (auto* t : p.tensors()) {
      for (float& v : *t) v = weights.next_uniform(-0.3f, 0.3f);
    }
    // Shrink the output layer so the residual rollout stays bounded over the
    // run; throughput is unchanged, only the values it produces.
    const float out_scale = 1.0f / static_cast<float>(p.hidden);
    for (float& v : p.w2) v *= out_scale;
    for (float& v : p.b2) v *= out_scale;
    p.fire_rate = 0.5f;
    w.model = CaModel::neural(std::move(p), identity_sobel_bank(2, 3),
                              Boundary::ZeroPad);
    w.initial = new_state(LatticeSpec(d, 16, Boundary::ZeroPad),
                          StateInit::Uniform01, 0x9cc);
    w.steps = steps > 0 ? steps : 16;
    w.seed = 14;
    w.tolerance = 1e-4f;
    return w;
  }
  throw std::invalid_argument(
      "unknown workload \"" + name +
      "\" (expected eca, life, lenia, or nca-forward)");
}

BenchReport run_benchmark(const BenchWorkload& workload, int repetitions) {
  if (repetitions < 1) {
    throw std::invalid_argument("benchmark needs at least one repetition");
  }
  workload.model.validate_for(workload.initial.spec);

  // Untimed warmup, also the engine output for the equivalence gate.
  RolloutRecord warm = rollout(workload.model, workload.initial, {},
                               workload.steps, false, workload.seed);

  // Equivalence gate: the reference must reproduce the engine before any
  // timing is trusted. The gate run is reused as the first timed reference
  // repetition below.
  using clock = std::chrono::steady_clock;
  const auto ref_start = clock::now();
  const State ref_final = naive_reference_rollout(
      workload.model, workload.initial, workload.steps, workload.seed);
  const double ref_first =
      std::chrono::duration<double>(clock::now() - ref_start).count();

  const std::vector<float>& got = warm.final_state.values;
  const std::vector<float>& want = ref_final.values;
  if (got.size() != want.size()) {
    throw EquivalenceError("benchmark equivalence failed on " +
                           workload.name + ": shape mismatch");
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    const float diff = std::abs(got[i] - want[i]);
    // Mixed absolute/relative bound; tolerance 0 demands bitwise equality.
    const float bound =
        workload.tolerance * (1.0f + std::abs(want[i]));
    const bool ok = workload.tolerance == 0.0f ? got[i] == want[i]
                                               : diff <= bound;
    if (!ok) {
      throw EquivalenceError(
          "benchmark equivalence failed on " + workload.name + ": value " +
          std::to_string(i) + " engine " + std::to_string(got[i]) +
          " vs reference " + std::to_string(want[i]));
    }
  }

  std::vector<double> engine_times;
  engine_times.reserve(repetitions);
  for (int r = 0; r < repetitions; ++r) {
    RolloutRecord rec = rollout(workload.model, workload.initial, {},
                                workload.steps, false, workload.seed);
    engine_times.push_back(rec.wall_seconds);
  }
  std::vector<double> reference_times = {ref_first};
  for (int r = 1; r < repetitions; ++r) {
    const auto start = clock::now();
    naive_reference_rollout(workload.model, workload.initial, workload.steps,
                            workload.seed);
    reference_times.push_back(
        std::chrono::duration<double>(clock::now() - start).count());
  }

  BenchReport report;
  report.workload = workload.name;
  report.dims = workload.initial.spec.dims;
  report.steps = workload.steps;
#ifdef _OPENMP
  report.threads = omp_get_max_threads();
#else
  report.threads = 1;
#endif
  report.cell_updates =
      workload.initial.spec.cell_count() * static_cast<std::int64_t>(workload.steps);
  report.engine_seconds = median(engine_times);
  report.reference_seconds = median(reference_times);
  report.engine_updates_per_sec =
      static_cast<double>(report.cell_updates) / report.engine_seconds;
  report.reference_updates_per_sec =
      static_cast<double>(report.cell_updates) / report.reference_seconds;
  report.speedup =
      report.engine_updates_per_sec / report.reference_updates_per_sec;
  return report;
}

std::string bench_report_json(const BenchReport& report) {
  const nlohmann::json j = {
      {"workload", report.workload},
      {"dims", report.dims},
      {"steps", report.steps},
      {"threads", report.threads},
      {"cell_updates", report.cell_updates},
      {"engine_seconds", report.engine_seconds},
      {"reference_seconds", report.reference_seconds},
      {"engine_updates_per_sec", report.engine_updates_per_sec},
      {"reference_updates_per_sec", report.reference_updates_per_sec},
      {"speedup", report.speedup},
  };
  return j.dump();
}

}  // namespace caforge
