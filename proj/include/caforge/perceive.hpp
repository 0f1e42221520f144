#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "caforge/fft.hpp"
#include "caforge/lattice.hpp"

namespace caforge {

enum class KernelMode : std::uint8_t {
  DepthwisePerChannel = 0,   // every state channel filtered by every kernel
  SharedAcrossChannels = 1,  // kernels applied to one designated channel
};

// Centered dense filter. Taps are stored row-major; tap i corresponds to the
// spatial offset (coord(i) - extent/2), and responses are gathered at
// state(x + offset) -- the cross-correlation convention used by conv layers,
// so a filter reads exactly as written.
struct Kernel {
  std::vector<int> extents;
  std::vector<float> values;

  int rank() const { return static_cast<int>(extents.size()); }
  std::int64_t tap_count() const;
};

struct KernelBank {
  std::vector<Kernel> kernels;
  KernelMode mode = KernelMode::DepthwisePerChannel;
  int designated_channel = 0;  // SharedAcrossChannels source channel

  int rank() const;
  int kernel_count() const { return static_cast<int>(kernels.size()); }
};

// Gathered neighborhood features, one bundle of kernel responses per cell.
// Channel order is state-channel-major, kernel-minor.
struct PerceptionField {
  LatticeSpec spec;
  std::vector<float> values;
};

int perception_channels(const KernelBank& bank, int state_channels);

PerceptionField conv_perceive(const State& state, const KernelBank& bank,
                              Boundary boundary);

// Same contract as conv_perceive restricted to Periodic boundaries, computed
// by pointwise products of spectra.
PerceptionField fft_perceive(const State& state, const KernelBank& bank);

// Engine-facing variant writing into a preallocated cells x out_stride
// row-major buffer, starting at column 0. Extra columns (e.g. concatenated
// external input) are left untouched.
void conv_perceive_into(const State& state, const KernelBank& bank,
                        Boundary boundary, float* out,
                        std::int64_t out_stride);

// Precomputed tap tables for repeated direct perception on one lattice
// shape; steady-state apply() performs no heap allocation.
class DirectConvCache {
 public:
  DirectConvCache(const KernelBank& bank, std::vector<int> dims,
                  Boundary boundary);
  ~DirectConvCache();

  DirectConvCache(DirectConvCache&&) noexcept;
  DirectConvCache& operator=(DirectConvCache&&) noexcept;

  void apply(const State& state, float* out, std::int64_t out_stride) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Reusable spectral state for repeated FFT perception on one lattice shape:
// kernel spectra, plans and temporaries survive across steps.
class FftConvCache {
 public:
  FftConvCache(const KernelBank& bank, std::vector<int> dims);
  ~FftConvCache();

  FftConvCache(FftConvCache&&) noexcept;
  FftConvCache& operator=(FftConvCache&&) noexcept;

  void apply(const State& state, float* out, std::int64_t out_stride);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Fixed perception banks used by the neural rules: identity plus gradient
// filters, depthwise. Supported (rank, count): (1,2), (2,3), (3,4).
KernelBank identity_sobel_bank(int rank, int kernel_count);
KernelBank sobel_bank_2d();  // Sobel-x, Sobel-y

enum class ShellPeak : std::uint8_t { ExponentialBump = 0 };

// Radially symmetric ring-weighted kernel, L1-normalized. `extents` are the
// kernel's spatial extents (typically 2R+1 per axis).
KernelBank lenia_kernel_shell(std::span<const int> extents, double radius,
                              std::span<const double> ring_weights,
                              ShellPeak peak = ShellPeak::ExponentialBump);

}  // namespace caforge
