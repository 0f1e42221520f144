#include "caforge/perceive.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace caforge {

std::int64_t Kernel::tap_count() const {
  std::int64_t n = 1;
  for (int e : extents) n *= e;
  return n;
}

int KernelBank::rank() const {
  if (kernels.empty()) throw std::invalid_argument("kernel bank: empty");
  return kernels.front().rank();
}

int perception_channels(const KernelBank& bank, int state_channels) {
  return bank.mode == KernelMode::DepthwisePerChannel
             ? state_channels * bank.kernel_count()
             : bank.kernel_count();
}

namespace {

void validate_bank(const KernelBank& bank, const LatticeSpec& spec,
                   bool direct_mode) {
  if (bank.kernels.empty()) throw std::invalid_argument("perceive: empty bank");
  for (const Kernel& k : bank.kernels) {
    if (k.rank() != spec.rank())
      throw std::invalid_argument("perceive: kernel rank mismatch");
    if (k.tap_count() != static_cast<std::int64_t>(k.values.size()))
      throw std::invalid_argument("perceive: kernel value count mismatch");
    if (direct_mode) {
      for (int e : k.extents) {
        if (e % 2 == 0)
          throw std::invalid_argument(
              "perceive: even-extent kernel in direct mode");
      }
    }
  }
  if (bank.mode == KernelMode::SharedAcrossChannels &&
      (bank.designated_channel < 0 || bank.designated_channel >= spec.channels))
    throw std::invalid_argument("perceive: designated channel out of range");
}

// Tap table for one kernel: spatial offsets (tap minus center) with weights,
// plus the linear cell delta valid away from the boundary.
struct TapSet {
  std::vector<std::vector<int>> offsets;
  std::vector<std::int64_t> interior_delta;
  std::vector<float> weights;
};

std::vector<TapSet> build_taps(const KernelBank& bank, const LatticeSpec& spec,
                               std::vector<int>& max_reach) {
  const int rank = spec.rank();
  std::vector<std::int64_t> stride(rank, 1);
  for (int a = rank - 2; a >= 0; --a) stride[a] = stride[a + 1] * spec.dims[a + 1];

  max_reach.assign(rank, 0);
  std::vector<TapSet> taps(bank.kernels.size());
  for (std::size_t j = 0; j < bank.kernels.size(); ++j) {
    const Kernel& k = bank.kernels[j];
    TapSet& t = taps[j];
    std::vector<int> c(rank, 0);
    for (std::int64_t i = 0; i < k.tap_count(); ++i) {
      const float w = k.values[i];
      if (w != 0.0f) {
        std::vector<int> off(rank);
        std::int64_t delta = 0;
        for (int a = 0; a < rank; ++a) {
          off[a] = c[a] - k.extents[a] / 2;
          delta += static_cast<std::int64_t>(off[a]) * stride[a];
          max_reach[a] = std::max(max_reach[a], std::abs(off[a]));
        }
        t.offsets.push_back(std::move(off));
        t.interior_delta.push_back(delta);
        t.weights.push_back(w);
      }
      int a = rank - 1;
      while (a >= 0 && ++c[a] == k.extents[a]) c[a--] = 0;
    }
  }
  return taps;
}

}  // namespace

struct DirectConvCache::Impl {
  KernelBank bank;
  std::vector<int> dims;
  Boundary boundary;
  std::vector<TapSet> taps;
  std::vector<int> reach;
  bool has_interior = true;

  Impl(const KernelBank& b, std::vector<int> d, Boundary bd)
      : bank(b), dims(std::move(d)), boundary(bd) {
    // The real channel count is only known at apply(); probe with enough
    // channels that the designated-channel check cannot misfire here.
    LatticeSpec probe(dims, std::max(1, bank.designated_channel + 1),
                      boundary);
    validate_bank(bank, probe, /*direct_mode=*/true);
    taps = build_taps(bank, probe, reach);
    for (int a = 0; a < probe.rank(); ++a)
      if (2 * reach[a] >= dims[a]) has_interior = false;
  }
};

DirectConvCache::DirectConvCache(const KernelBank& bank, std::vector<int> dims,
                                 Boundary boundary)
    : impl_(std::make_unique<Impl>(bank, std::move(dims), boundary)) {}

DirectConvCache::~DirectConvCache() = default;
DirectConvCache::DirectConvCache(DirectConvCache&&) noexcept = default;
DirectConvCache& DirectConvCache::operator=(DirectConvCache&&) noexcept =
    default;

void DirectConvCache::apply(const State& state, float* out,
                            std::int64_t out_stride) const {
  const Impl& im = *impl_;
  const LatticeSpec& spec = state.spec;
  if (spec.dims != im.dims)
    throw std::invalid_argument("perceive: state shape differs from cache");
  if (im.bank.mode == KernelMode::SharedAcrossChannels &&
      im.bank.designated_channel >= spec.channels)
    throw std::invalid_argument("perceive: designated channel out of range");

  const int rank = spec.rank();
  const int c = spec.channels;
  const int kcount = im.bank.kernel_count();
  const bool depthwise = im.bank.mode == KernelMode::DepthwisePerChannel;
  const int pch = perception_channels(im.bank, c);
  const std::int64_t cells = spec.cell_count();
  const bool periodic = im.boundary == Boundary::Periodic;
  const std::vector<TapSet>& taps = im.taps;
  const std::vector<int>& reach = im.reach;
  const bool has_interior = im.has_interior;

  const float* src = state.values.data();

#pragma omp parallel
  {
    static thread_local std::vector<float> acc;
    static thread_local std::vector<int> coord, ncoord;
    acc.resize(static_cast<std::size_t>(pch));
    coord.resize(static_cast<std::size_t>(rank));
    ncoord.resize(static_cast<std::size_t>(rank));
#pragma omp for schedule(static)
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      spec.cell_coord(cell, coord);
      bool interior = has_interior;
      if (interior) {
        for (int a = 0; a < rank; ++a) {
          if (coord[a] < reach[a] || coord[a] >= spec.dims[a] - reach[a]) {
            interior = false;
            break;
          }
        }
      }
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (int j = 0; j < kcount; ++j) {
        const TapSet& t = taps[j];
        const std::size_t ntap = t.weights.size();
        for (std::size_t i = 0; i < ntap; ++i) {
          const float w = t.weights[i];
          std::int64_t ncell;
          if (interior) {
            ncell = cell + t.interior_delta[i];
          } else {
            bool inside = true;
            for (int a = 0; a < rank; ++a) {
              int x = coord[a] + t.offsets[i][a];
              if (periodic) {
                x = wrap_index(x, spec.dims[a]);
              } else if (x < 0 || x >= spec.dims[a]) {
                inside = false;
                break;
              }
              ncoord[a] = x;
            }
            if (!inside) continue;
            ncell = 0;
            for (int a = 0; a < rank; ++a)
              ncell = ncell * spec.dims[a] + ncoord[a];
          }
          const float* nb = src + ncell * c;
          if (depthwise) {
            for (int ch = 0; ch < c; ++ch)
              acc[static_cast<std::size_t>(ch) * kcount + j] += w * nb[ch];
          } else {
            acc[j] += w * nb[im.bank.designated_channel];
          }
        }
      }
      std::memcpy(out + cell * out_stride, acc.data(), sizeof(float) * pch);
    }
  }
}

void conv_perceive_into(const State& state, const KernelBank& bank,
                        Boundary boundary, float* out,
                        std::int64_t out_stride) {
  DirectConvCache cache(bank, state.spec.dims, boundary);
  cache.apply(state, out, out_stride);
}

PerceptionField conv_perceive(const State& state, const KernelBank& bank,
                              Boundary boundary) {
  PerceptionField f;
  const int pch = perception_channels(bank, state.spec.channels);
  f.spec = LatticeSpec(state.spec.dims, pch, boundary);
  f.values.assign(static_cast<std::size_t>(f.spec.value_count()), 0.0f);
  conv_perceive_into(state, bank, boundary, f.values.data(), pch);
  return f;
}

// --- FFT path ------------------------------------------------------------

struct FftConvCache::Impl {
  fft::PlanNd plan;
  KernelMode mode;
  int designated = 0;
  int kcount = 0;
  std::vector<std::vector<fft::cfloat>> kernel_fft;
  std::vector<fft::cfloat> chan, work, scratch;

  Impl(const KernelBank& bank, std::vector<int> dims)
      : plan(std::move(dims)), mode(bank.mode),
        designated(bank.designated_channel), kcount(bank.kernel_count()) {
    const std::vector<int>& d = plan.dims();
    const int rank = static_cast<int>(d.size());
    const std::int64_t points = plan.points();
    scratch.resize(plan.scratch_size());
    chan.resize(points);
    work.resize(points);

    // Correlation with taps a_d is circular convolution with c(-d) = a_d,
    // so each tap lands at the negated, wrapped offset.
    kernel_fft.reserve(bank.kernels.size());
    std::vector<int> coord(rank);
    for (const Kernel& k : bank.kernels) {
      std::vector<fft::cfloat> img(points, fft::cfloat{0.0f, 0.0f});
      std::fill(coord.begin(), coord.end(), 0);
      for (std::int64_t i = 0; i < k.tap_count(); ++i) {
        const float w = k.values[i];
        if (w != 0.0f) {
          std::int64_t idx = 0;
          for (int a = 0; a < rank; ++a) {
            const int off = coord[a] - k.extents[a] / 2;
            idx = idx * d[a] + wrap_index(-off, d[a]);
          }
          img[idx] += w;
        }
        int a = rank - 1;
        while (a >= 0 && ++coord[a] == k.extents[a]) coord[a--] = 0;
      }
      plan.forward(img.data(), scratch.data());
      kernel_fft.push_back(std::move(img));
    }
  }
};

FftConvCache::FftConvCache(const KernelBank& bank, std::vector<int> dims)
    : impl_(std::make_unique<Impl>(bank, std::move(dims))) {
  if (bank.kernels.empty()) throw std::invalid_argument("perceive: empty bank");
  for (const Kernel& k : bank.kernels) {
    if (k.rank() != static_cast<int>(impl_->plan.dims().size()))
      throw std::invalid_argument("perceive: kernel rank mismatch");
    if (k.tap_count() != static_cast<std::int64_t>(k.values.size()))
      throw std::invalid_argument("perceive: kernel value count mismatch");
  }
}

FftConvCache::~FftConvCache() = default;
FftConvCache::FftConvCache(FftConvCache&&) noexcept = default;
FftConvCache& FftConvCache::operator=(FftConvCache&&) noexcept = default;

void FftConvCache::apply(const State& state, float* out,
                         std::int64_t out_stride) {
  Impl& im = *impl_;
  if (state.spec.dims != im.plan.dims())
    throw std::invalid_argument("fft_perceive: lattice dims mismatch");
  if (state.spec.boundary != Boundary::Periodic)
    throw std::invalid_argument("fft_perceive: requires Periodic boundary");

  const int c = state.spec.channels;
  const std::int64_t points = im.plan.points();
  const bool depthwise = im.mode == KernelMode::DepthwisePerChannel;
  if (!depthwise && (im.designated < 0 || im.designated >= c))
    throw std::invalid_argument("fft_perceive: designated channel out of range");

  const float* src = state.values.data();
  const int ch_lo = depthwise ? 0 : im.designated;
  const int ch_hi = depthwise ? c : im.designated + 1;
  for (int ch = ch_lo; ch < ch_hi; ++ch) {
    for (std::int64_t i = 0; i < points; ++i)
      im.chan[i] = fft::cfloat{src[i * c + ch], 0.0f};
    im.plan.forward(im.chan.data(), im.scratch.data());
    for (int j = 0; j < im.kcount; ++j) {
      const fft::cfloat* kf = im.kernel_fft[j].data();
      for (std::int64_t i = 0; i < points; ++i) im.work[i] = im.chan[i] * kf[i];
      im.plan.inverse(im.work.data(), im.scratch.data());
      const std::int64_t col = depthwise ? static_cast<std::int64_t>(ch) * im.kcount + j : j;
      for (std::int64_t i = 0; i < points; ++i)
        out[i * out_stride + col] = im.work[i].real();
    }
  }
}

PerceptionField fft_perceive(const State& state, const KernelBank& bank) {
  if (state.spec.boundary != Boundary::Periodic)
    throw std::invalid_argument("fft_perceive: requires Periodic boundary");
  PerceptionField f;
  const int pch = perception_channels(bank, state.spec.channels);
  f.spec = LatticeSpec(state.spec.dims, pch, Boundary::Periodic);
  f.values.assign(static_cast<std::size_t>(f.spec.value_count()), 0.0f);
  FftConvCache cache(bank, state.spec.dims);
  cache.apply(state, f.values.data(), pch);
  return f;
}

// --- Fixed banks -----------------------------------------------------------

namespace {

Kernel identity_kernel(int rank) {
  Kernel k;
  k.extents.assign(rank, 3);
  k.values.assign(static_cast<std::size_t>(k.tap_count()), 0.0f);
  k.values[k.values.size() / 2] = 1.0f;
  return k;
}

// Separable gradient filter: d/d(axis) with [1,2,1] smoothing elsewhere.
Kernel sobel_kernel(int rank, int axis) {
  static const float deriv[3] = {-1.0f, 0.0f, 1.0f};
  static const float smooth[3] = {1.0f, 2.0f, 1.0f};
  Kernel k;
  k.extents.assign(rank, 3);
  k.values.resize(static_cast<std::size_t>(k.tap_count()));
  std::vector<int> c(rank, 0);
  for (std::size_t i = 0; i < k.values.size(); ++i) {
    float v = 1.0f;
    for (int a = 0; a < rank; ++a) v *= (a == axis ? deriv[c[a]] : smooth[c[a]]);
    k.values[i] = v;
    int a = rank - 1;
    while (a >= 0 && ++c[a] == 3) c[a--] = 0;
  }
  return k;
}

}  // namespace

KernelBank identity_sobel_bank(int rank, int kernel_count) {
  if (kernel_count != rank + 1)
    throw std::invalid_argument("identity_sobel_bank: unsupported (rank, count)");
  if (rank < 1 || rank > 3)
    throw std::invalid_argument("identity_sobel_bank: unsupported rank");
  KernelBank bank;
  bank.mode = KernelMode::DepthwisePerChannel;
  bank.kernels.push_back(identity_kernel(rank));
  if (rank == 1) {
    Kernel g;
    g.extents = {3};
    g.values = {-1.0f, 0.0f, 1.0f};
    bank.kernels.push_back(std::move(g));
  } else {
    // x first (last spatial axis), then the remaining axes.
    for (int a = rank - 1; a >= 0; --a)
      bank.kernels.push_back(sobel_kernel(rank, a));
  }
  return bank;
}

KernelBank sobel_bank_2d() {
  KernelBank bank;
  bank.mode = KernelMode::DepthwisePerChannel;
  bank.kernels.push_back(sobel_kernel(2, 1));
  bank.kernels.push_back(sobel_kernel(2, 0));
  return bank;
}

KernelBank lenia_kernel_shell(std::span<const int> extents, double radius,
                              std::span<const double> ring_weights,
                              ShellPeak peak) {
  if (radius < 1.0)
    throw std::invalid_argument("lenia_kernel_shell: radius must be >= 1");
  if (ring_weights.empty())
    throw std::invalid_argument("lenia_kernel_shell: at least one ring");
  (void)peak;  // single peak shape

  Kernel k;
  k.extents.assign(extents.begin(), extents.end());
  const std::int64_t taps = k.tap_count();
  k.values.resize(static_cast<std::size_t>(taps));

  const int rank = k.rank();
  const int rings = static_cast<int>(ring_weights.size());
  std::vector<int> c(rank, 0);
  double sum = 0.0;
  for (std::int64_t i = 0; i < taps; ++i) {
    double r2 = 0.0;
    for (int a = 0; a < rank; ++a) {
      const double off = c[a] - k.extents[a] / 2;
      r2 += off * off;
    }
    const double r = std::sqrt(r2) / radius;
    double v = 0.0;
    if (r < 1.0) {
      const double mr = rings * r;
      int ring = static_cast<int>(mr);
      if (ring >= rings) ring = rings - 1;
      const double s = mr - ring;
      if (s > 1e-9 && s < 1.0 - 1e-9)
        v = ring_weights[ring] * std::exp(4.0 - 1.0 / (s * (1.0 - s)));
    }
    k.values[i] = static_cast<float>(v);
    sum += v;
    int a = rank - 1;
    while (a >= 0 && ++c[a] == k.extents[a]) c[a--] = 0;
  }
  if (sum == 0.0)
    throw std::invalid_argument("lenia_kernel_shell: kernel is all zero");
  const float inv = static_cast<float>(1.0 / sum);
  for (float& v : k.values) v *= inv;

  KernelBank bank;
  bank.mode = KernelMode::SharedAcrossChannels;
  bank.designated_channel = 0;
  bank.kernels.push_back(std::move(k));
  return bank;
}

}  // namespace caforge
