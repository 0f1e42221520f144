#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "caforge/perceive.hpp"
#include "caforge/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace caforge;
using testutil::check_near;

namespace {

// Definitional reference: for every cell, walk every tap of every kernel and
// gather state(x + tap_offset), wrapping or zeroing at the border. Double
// accumulation, no shared code with the library's optimized paths.
float naive_response(const State& s, std::span<const int> coord,
                     const Kernel& k, int channel, Boundary b) {
  const int rank = k.rank();
  std::vector<int> tap(rank), nc(rank);
  double acc = 0.0;
  for (std::int64_t i = 0; i < k.tap_count(); ++i) {
    std::int64_t rem = i;
    for (int a = rank - 1; a >= 0; --a) {
      tap[a] = static_cast<int>(rem % k.extents[a]);
      rem /= k.extents[a];
    }
    bool inside = true;
    for (int a = 0; a < rank; ++a) {
      int v = coord[a] + tap[a] - k.extents[a] / 2;
      if (b == Boundary::Periodic) {
        v = wrap_index(v, s.spec.dims[a]);
      } else if (v < 0 || v >= s.spec.dims[a]) {
        inside = false;
        break;
      }
      nc[a] = v;
    }
    if (inside)
      acc += static_cast<double>(k.values[i]) *
             s.at(s.spec.cell_index(nc), channel);
  }
  return static_cast<float>(acc);
}

PerceptionField naive_perceive(const State& s, const KernelBank& bank,
                               Boundary b) {
  const int pch = perception_channels(bank, s.spec.channels);
  PerceptionField f;
  f.spec = LatticeSpec(s.spec.dims, pch, b);
  f.values.resize(static_cast<std::size_t>(f.spec.value_count()));
  const int rank = s.spec.rank();
  std::vector<int> coord(rank);
  const bool depthwise = bank.mode == KernelMode::DepthwisePerChannel;
  for (std::int64_t cell = 0; cell < s.spec.cell_count(); ++cell) {
    s.spec.cell_coord(cell, coord);
    for (int j = 0; j < bank.kernel_count(); ++j) {
      if (depthwise) {
        for (int ch = 0; ch < s.spec.channels; ++ch)
          f.values[cell * pch + ch * bank.kernel_count() + j] =
              naive_response(s, coord, bank.kernels[j], ch, b);
      } else {
        f.values[cell * pch + j] = naive_response(
            s, coord, bank.kernels[j], bank.designated_channel, b);
      }
    }
  }
  return f;
}

Kernel random_kernel(std::vector<int> extents, std::uint64_t seed) {
  Kernel k;
  k.extents = std::move(extents);
  k.values.resize(static_cast<std::size_t>(k.tap_count()));
  rng::Stream rs(seed);
  for (float& v : k.values) v = rs.next_uniform(-1.0f, 1.0f);
  return k;
}

}  // namespace

TEST_CASE("a centered gradient filter on a ramp reads the ramp slope") {
  State s(LatticeSpec({4}, 1, Boundary::Periodic));
  s.values = {0.0f, 1.0f, 2.0f, 3.0f};
  KernelBank bank;
  bank.kernels.push_back(Kernel{{3}, {-1.0f, 0.0f, 1.0f}});

  PerceptionField f = conv_perceive(s, bank, Boundary::Periodic);
  CHECK(f.values[1] == 2.0f);  // s[2] - s[0]
  CHECK(f.values[2] == 2.0f);  // s[3] - s[1]
  CHECK(f.values[0] == -2.0f); // s[1] - s[3] across the wrap
  CHECK(f.values[3] == -2.0f); // s[0] - s[2] across the wrap

  PerceptionField z = conv_perceive(s, bank, Boundary::ZeroPad);
  CHECK(z.values[0] == 1.0f);  // missing left neighbor reads 0
  CHECK(z.values[3] == -2.0f); // missing right neighbor reads 0
}

TEST_CASE("direct perception matches the definitional reference") {
  rng::Stream rs(2024);
  for (int trial = 0; trial < 24; ++trial) {
    const int rank = 1 + static_cast<int>(rs.next_below(3));
    std::vector<int> dims(rank), extents(rank);
    for (int a = 0; a < rank; ++a) {
      dims[a] = 3 + static_cast<int>(rs.next_below(7));
      extents[a] = 1 + 2 * static_cast<int>(rs.next_below(3));
    }
    const int channels = 1 + static_cast<int>(rs.next_below(3));
    const Boundary b =
        rs.next_below(2) == 0 ? Boundary::Periodic : Boundary::ZeroPad;
    LatticeSpec spec(dims, channels, b);
    State s = new_state(spec, StateInit::Uniform01, 555 + trial);

    KernelBank bank;
    const int kcount = 1 + static_cast<int>(rs.next_below(3));
    for (int j = 0; j < kcount; ++j)
      bank.kernels.push_back(random_kernel(extents, 900 + 10 * trial + j));
    if (rs.next_below(2) == 0) {
      bank.mode = KernelMode::SharedAcrossChannels;
      bank.designated_channel = static_cast<int>(rs.next_below(channels));
    }

    const PerceptionField got = conv_perceive(s, bank, b);
    const PerceptionField want = naive_perceive(s, bank, b);
    REQUIRE(got.values.size() == want.values.size());
    for (std::size_t i = 0; i < got.values.size(); ++i)
      check_near(got.values[i], want.values[i], 1e-5, 1e-5);
  }
}

TEST_CASE("spectral perception equals direct perception on periodic grids") {
  rng::Stream rs(77);
  for (int trial = 0; trial < 16; ++trial) {
    const int rank = 1 + static_cast<int>(rs.next_below(2));
    std::vector<int> dims(rank), extents(rank);
    for (int a = 0; a < rank; ++a) {
      dims[a] = 4 + static_cast<int>(rs.next_below(9));  // mixed pow2/odd
      extents[a] = 1 + 2 * static_cast<int>(rs.next_below(4));
    }
    const int channels = 1 + static_cast<int>(rs.next_below(2));
    LatticeSpec spec(dims, channels, Boundary::Periodic);
    State s = new_state(spec, StateInit::Uniform01, 31 + trial);

    KernelBank bank;
    bank.kernels.push_back(random_kernel(extents, 400 + trial));

    const PerceptionField direct = conv_perceive(s, bank, Boundary::Periodic);
    const PerceptionField spectral = fft_perceive(s, bank);
    REQUIRE(direct.values.size() == spectral.values.size());
    for (std::size_t i = 0; i < direct.values.size(); ++i)
      check_near(spectral.values[i], direct.values[i], 1e-4);
  }
}

TEST_CASE("spectral perception folds kernels wider than the grid") {
  LatticeSpec spec({5}, 1, Boundary::Periodic);
  State s = new_state(spec, StateInit::Uniform01, 9);
  KernelBank bank;
  bank.kernels.push_back(random_kernel({7}, 10));
  const PerceptionField direct = conv_perceive(s, bank, Boundary::Periodic);
  const PerceptionField spectral = fft_perceive(s, bank);
  for (std::size_t i = 0; i < direct.values.size(); ++i)
    check_near(spectral.values[i], direct.values[i], 1e-4);
}

TEST_CASE("spectral perception requires a periodic grid") {
  State s(LatticeSpec({8}, 1, Boundary::ZeroPad));
  KernelBank bank;
  bank.kernels.push_back(random_kernel({3}, 1));
  CHECK_THROWS_AS(fft_perceive(s, bank), std::invalid_argument);
}

TEST_CASE("perception commutes with translation on periodic grids") {
  LatticeSpec spec({6, 7}, 1, Boundary::Periodic);
  State s = new_state(spec, StateInit::Uniform01, 12);
  KernelBank bank;
  bank.kernels.push_back(random_kernel({3, 5}, 13));

  const int sy = 2, sx = 3;
  State shifted(spec);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x)
      shifted.values[spec.cell_index(std::array{(y + sy) % 6, (x + sx) % 7})] =
          s.values[spec.cell_index(std::array{y, x})];

  const PerceptionField base = conv_perceive(s, bank, Boundary::Periodic);
  const PerceptionField moved = conv_perceive(shifted, bank, Boundary::Periodic);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x)
      check_near(
          moved.values[spec.cell_index(std::array{(y + sy) % 6, (x + sx) % 7})],
          base.values[spec.cell_index(std::array{y, x})], 1e-6);
}

TEST_CASE("perception is linear in the state") {
  LatticeSpec spec({5, 5}, 2, Boundary::Periodic);
  State a = new_state(spec, StateInit::Uniform01, 1);
  State b = new_state(spec, StateInit::Uniform01, 2);
  State mix(spec);
  for (std::size_t i = 0; i < mix.values.size(); ++i)
    mix.values[i] = 1.5f * a.values[i] - 0.5f * b.values[i];

  KernelBank bank = identity_sobel_bank(2, 3);
  const PerceptionField fa = conv_perceive(a, bank, Boundary::Periodic);
  const PerceptionField fb = conv_perceive(b, bank, Boundary::Periodic);
  const PerceptionField fm = conv_perceive(mix, bank, Boundary::Periodic);
  for (std::size_t i = 0; i < fm.values.size(); ++i)
    check_near(fm.values[i], 1.5f * fa.values[i] - 0.5f * fb.values[i], 1e-5);
}

TEST_CASE("identity-plus-gradient bank: identity channel reproduces the state") {
  LatticeSpec spec({4, 4}, 2, Boundary::Periodic);
  State s = new_state(spec, StateInit::Uniform01, 3);
  KernelBank bank = identity_sobel_bank(2, 3);
  REQUIRE(bank.kernel_count() == 3);
  const PerceptionField f = conv_perceive(s, bank, Boundary::Periodic);
  const int pch = perception_channels(bank, 2);
  REQUIRE(pch == 6);
  for (std::int64_t cell = 0; cell < spec.cell_count(); ++cell) {
    // channel-major, kernel-minor: kernel 0 of channel ch sits at ch*3.
    CHECK(f.values[cell * pch + 0] == s.at(cell, 0));
    CHECK(f.values[cell * pch + 3] == s.at(cell, 1));
  }
}

TEST_CASE("gradient kernels vanish on constant fields and read ramps") {
  LatticeSpec spec({8, 8}, 1, Boundary::ZeroPad);
  State flat(spec);
  for (float& v : flat.values) v = 0.75f;
  KernelBank bank = sobel_bank_2d();
  const PerceptionField f = conv_perceive(flat, bank, Boundary::ZeroPad);
  // Interior only; the border sees the zero padding.
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x) {
      const std::int64_t cell = spec.cell_index(std::array{y, x});
      check_near(f.values[cell * 2 + 0], 0.0, 1e-6);
      check_near(f.values[cell * 2 + 1], 0.0, 1e-6);
    }

  State ramp(spec);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      ramp.values[spec.cell_index(std::array{y, x})] = 0.25f * x;
  const PerceptionField g = conv_perceive(ramp, bank, Boundary::ZeroPad);
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x) {
      const std::int64_t cell = spec.cell_index(std::array{y, x});
      // Separable [1,2,1] x [-1,0,1]: response 8 * slope along x, 0 along y.
      check_near(g.values[cell * 2 + 0], 8.0 * 0.25, 1e-5);
      check_near(g.values[cell * 2 + 1], 0.0, 1e-5);
    }
}

TEST_CASE("identity-plus-gradient bank rejects unsupported shapes") {
  CHECK_THROWS_AS(identity_sobel_bank(2, 4), std::invalid_argument);
  CHECK_THROWS_AS(identity_sobel_bank(4, 5), std::invalid_argument);
}

TEST_CASE("even-extent kernels are rejected on the direct path") {
  State s(LatticeSpec({8}, 1));
  KernelBank bank;
  bank.kernels.push_back(random_kernel({4}, 5));
  CHECK_THROWS_AS(conv_perceive(s, bank, Boundary::Periodic),
                  std::invalid_argument);
}

TEST_CASE("strided output leaves the extra columns untouched") {
  LatticeSpec spec({6}, 1, Boundary::Periodic);
  State s = new_state(spec, StateInit::Uniform01, 17);
  KernelBank bank;
  bank.kernels.push_back(random_kernel({3}, 18));
  const std::int64_t stride = 3;
  std::vector<float> out(6 * stride, -7.0f);
  conv_perceive_into(s, bank, Boundary::Periodic, out.data(), stride);
  const PerceptionField f = conv_perceive(s, bank, Boundary::Periodic);
  for (int c = 0; c < 6; ++c) {
    CHECK(out[c * stride] == f.values[c]);
    CHECK(out[c * stride + 1] == -7.0f);
    CHECK(out[c * stride + 2] == -7.0f);
  }
}

TEST_CASE("direct cache rejects states with a different shape") {
  KernelBank bank;
  bank.kernels.push_back(random_kernel({3}, 21));
  DirectConvCache cache(bank, {8}, Boundary::Periodic);
  State other(LatticeSpec({9}, 1));
  std::vector<float> out(9);
  CHECK_THROWS_AS(cache.apply(other, out.data(), 1), std::invalid_argument);
}

TEST_CASE("ring-shell kernels are normalized, symmetric and bounded") {
  const std::array<int, 2> extents{27, 27};
  const std::array<double, 1> rings{1.0};
  KernelBank bank = lenia_kernel_shell(extents, 13.0, rings);
  REQUIRE(bank.kernel_count() == 1);
  CHECK(bank.mode == KernelMode::SharedAcrossChannels);
  const Kernel& k = bank.kernels[0];

  double sum = 0.0;
  for (float v : k.values) {
    CHECK(v >= 0.0f);
    sum += v;
  }
  check_near(sum, 1.0, 1e-6);

  // Radial symmetry: value at offset o equals value at -o.
  for (int y = 0; y < 27; ++y)
    for (int x = 0; x < 27; ++x)
      CHECK(k.values[y * 27 + x] == k.values[(26 - y) * 27 + (26 - x)]);

  // Support strictly inside the radius.
  for (int y = 0; y < 27; ++y)
    for (int x = 0; x < 27; ++x) {
      const double r = std::hypot(y - 13.0, x - 13.0) / 13.0;
      if (r >= 1.0) CHECK(k.values[y * 27 + x] == 0.0f);
    }
  // The center of the single ring (r = 0.5) carries the peak.
  float peak = 0.0f;
  for (float v : k.values) peak = std::max(peak, v);
  CHECK(k.values[13 * 27 + (13 + 6)] < peak);
  check_near(k.values[13 * 27 + 20] / peak,
             std::exp(4.0 - 1.0 / ((7.0 / 13.0) * (1.0 - 7.0 / 13.0)) + 0.0) /
                 std::exp(0.0),
             2e-1);
}

TEST_CASE("multi-ring shells weight each ring independently") {
  const std::array<int, 1> extents{25};
  const std::array<double, 2> rings{1.0, 0.25};
  KernelBank bank = lenia_kernel_shell(extents, 12.0, rings);
  const Kernel& k = bank.kernels[0];
  // Ring 0 covers r in (0, 0.5), ring 1 covers (0.5, 1). With m*r = 2r, the
  // ring-0 peak sits near r=0.25 (offset 3), ring-1 near r=0.75 (offset 9).
  CHECK(k.values[12 + 3] > k.values[12 + 9]);
  check_near(k.values[12 + 9] / k.values[12 + 3], 0.25, 2e-2);
}

TEST_CASE("an all-zero shell is rejected") {
  const std::array<int, 2> extents{3, 3};
  const std::array<double, 1> rings{1.0};
  CHECK_THROWS_AS(lenia_kernel_shell(extents, 1.0, rings),
                  std::invalid_argument);
}
