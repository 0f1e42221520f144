#include "caforge/rules.hpp"

#include <cmath>
#include <stdexcept>

namespace caforge {

EcaRule::EcaRule(int number) : rule_number(number) {
  if (number < 0 || number > 255)
    throw std::invalid_argument("eca: rule number must be in 0..255");
}

LifeRule LifeRule::conway() {
  return from_counts(std::array{3}, std::array{2, 3});
}

LifeRule LifeRule::from_counts(std::span<const int> birth_counts,
                               std::span<const int> survive_counts) {
  LifeRule r;
  for (int n : birth_counts) {
    if (n < 0 || n > 8) throw std::invalid_argument("life: count outside 0..8");
    r.birth[n] = true;
  }
  for (int n : survive_counts) {
    if (n < 0 || n > 8) throw std::invalid_argument("life: count outside 0..8");
    r.survive[n] = true;
  }
  return r;
}

namespace {

void require_binary(const State& s, const char* who) {
  for (float v : s.values) {
    if (v != 0.0f && v != 1.0f)
      throw std::invalid_argument(std::string(who) + ": non-binary state value");
  }
}

}  // namespace

void eca_step_into(const State& state, const EcaRule& rule, Boundary boundary,
                   State& out) {
  if (state.spec.rank() != 1 || state.spec.channels != 1)
    throw std::invalid_argument("eca_step: state must be 1-D single-channel");
  if (rule.rule_number < 0 || rule.rule_number > 255)
    throw std::invalid_argument("eca_step: rule number must be in 0..255");
  require_binary(state, "eca_step");

  const int n = state.spec.dims[0];
  const float* src = state.values.data();
  float* dst = out.values.data();

  float table[8];
  for (int p = 0; p < 8; ++p)
    table[p] = (rule.rule_number >> p) & 1 ? 1.0f : 0.0f;

  auto cell = [&](float left, float self, float right) {
    const int p = 4 * static_cast<int>(left) + 2 * static_cast<int>(self) +
                  static_cast<int>(right);
    return table[p];
  };

  const bool periodic = boundary == Boundary::Periodic;
  const float first = periodic ? src[n - 1] : 0.0f;
  const float last = periodic ? src[0] : 0.0f;
  if (n == 1) {
    dst[0] = cell(first, src[0], last);
    return;
  }
  dst[0] = cell(first, src[0], src[1]);
  for (int x = 1; x < n - 1; ++x) dst[x] = cell(src[x - 1], src[x], src[x + 1]);
  dst[n - 1] = cell(src[n - 2], src[n - 1], last);
}

State eca_step(const State& state, const EcaRule& rule, Boundary boundary) {
  State out(state.spec);
  eca_step_into(state, rule, boundary, out);
  return out;
}

void life_step_into(const State& state, const LifeRule& rule,
                    Boundary boundary, State& out) {
  if (state.spec.rank() != 2 || state.spec.channels != 1)
    throw std::invalid_argument("life_step: state must be 2-D single-channel");
  require_binary(state, "life_step");

  const int h = state.spec.dims[0];
  const int w = state.spec.dims[1];
  const float* src = state.values.data();
  float* dst = out.values.data();
  const bool periodic = boundary == Boundary::Periodic;

  // next = lut[self][count]; counts are exact small integers in float.
  float lut[2][9];
  for (int n = 0; n < 9; ++n) {
    lut[0][n] = rule.birth[n] ? 1.0f : 0.0f;
    lut[1][n] = rule.survive[n] ? 1.0f : 0.0f;
  }

  static thread_local std::vector<float> zero_buf;
  zero_buf.assign(static_cast<std::size_t>(w), 0.0f);
  const float* zeros = zero_buf.data();  // shared, read-only inside the loop

#pragma omp parallel
  {
    static thread_local std::vector<float> cs;  // 3-row column sums
    cs.resize(static_cast<std::size_t>(w));
#pragma omp for schedule(static)
    for (int y = 0; y < h; ++y) {
      const float* up;
      const float* dn;
      if (periodic) {
        up = src + static_cast<std::int64_t>((y + h - 1) % h) * w;
        dn = src + static_cast<std::int64_t>((y + 1) % h) * w;
      } else {
        up = y > 0 ? src + static_cast<std::int64_t>(y - 1) * w : zeros;
        dn = y < h - 1 ? src + static_cast<std::int64_t>(y + 1) * w
                       : zeros;
      }
      const float* mid = src + static_cast<std::int64_t>(y) * w;
      float* orow = dst + static_cast<std::int64_t>(y) * w;

      for (int x = 0; x < w; ++x) cs[x] = up[x] + mid[x] + dn[x];
      for (int x = 1; x < w - 1; ++x) {
        const int count = static_cast<int>(cs[x - 1] + cs[x] + cs[x + 1] - mid[x]);
        orow[x] = lut[static_cast<int>(mid[x])][count];
      }
      const float lwrap = periodic ? cs[w - 1] : 0.0f;
      const float rwrap = periodic ? cs[0] : 0.0f;
      if (w == 1) {
        const int count = static_cast<int>(lwrap + cs[0] + rwrap - mid[0]);
        orow[0] = lut[static_cast<int>(mid[0])][count];
      } else {
        int count = static_cast<int>(lwrap + cs[0] + cs[1] - mid[0]);
        orow[0] = lut[static_cast<int>(mid[0])][count];
        count = static_cast<int>(cs[w - 2] + cs[w - 1] + rwrap - mid[w - 1]);
        orow[w - 1] = lut[static_cast<int>(mid[w - 1])][count];
      }
    }
  }
}

State life_step(const State& state, const LifeRule& rule, Boundary boundary) {
  State out(state.spec);
  life_step_into(state, rule, boundary, out);
  return out;
}

float LeniaRule::growth(float potential) const {
  const float d = (potential - growth_center) / growth_width;
  return 2.0f * std::exp(-0.5f * d * d) - 1.0f;
}

bool LeniaRule::use_fft() const {
  if (path == ConvPath::Direct) return false;
  if (path == ConvPath::Fft) return true;
  int max_extent = 0;
  for (const Kernel& k : kernel.kernels)
    for (int e : k.extents) max_extent = std::max(max_extent, e);
  return (max_extent - 1) / 2 > 7;
}

void lenia_step_into(const State& state, const LeniaRule& rule, State& out,
                     std::vector<float>& potential, FftConvCache* fft_cache,
                     const DirectConvCache* direct_cache) {
  if (state.spec.boundary != Boundary::Periodic)
    throw std::invalid_argument("lenia_step: requires Periodic boundary");
  const std::int64_t cells = state.spec.cell_count();
  const int c = state.spec.channels;
  const int pch = perception_channels(rule.kernel, c);
  if (pch != c)
    throw std::invalid_argument("lenia_step: kernel bank must emit one potential per channel");
  potential.resize(static_cast<std::size_t>(cells * pch));

  if (fft_cache != nullptr)
    fft_cache->apply(state, potential.data(), pch);
  else if (direct_cache != nullptr)
    direct_cache->apply(state, potential.data(), pch);
  else
    conv_perceive_into(state, rule.kernel, Boundary::Periodic, potential.data(), pch);

  const float* src = state.values.data();
  const float* u = potential.data();
  float* dst = out.values.data();
  const std::int64_t n = cells * c;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const float next = src[i] + rule.dt * rule.growth(u[i]);
    dst[i] = next < 0.0f ? 0.0f : (next > 1.0f ? 1.0f : next);
  }
}

State lenia_step(const State& state, const LeniaRule& rule) {
  State out(state.spec);
  std::vector<float> potential;
  if (rule.use_fft()) {
    FftConvCache cache(rule.kernel, state.spec.dims);
    lenia_step_into(state, rule, out, potential, &cache);
  } else {
    lenia_step_into(state, rule, out, potential);
  }
  return out;
}

LeniaRule lenia_default_rule() {
  LeniaRule rule;
  const int extent = 2 * 13 + 1;
  const std::array<int, 2> extents{extent, extent};
  const std::array<double, 1> rings{1.0};
  rule.kernel = lenia_kernel_shell(extents, 13.0, rings);
  rule.growth_center = 0.15f;
  rule.growth_width = 0.015f;
  rule.dt = 0.1f;
  return rule;
}

LatticeSpec lenia_default_spec() {
  return LatticeSpec({128, 128}, 1, Boundary::Periodic);
}

}  // namespace caforge
