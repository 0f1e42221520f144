#include "caforge/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace caforge::fft {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
  int m = 1;
  while (m < n) m <<= 1;
  return m;
}

// exp(-i * pi * k / denom), computed in double so large indices stay accurate.
cfloat unit(double k, double denom) {
  const double a = -std::numbers::pi * k / denom;
  return {static_cast<float>(std::cos(a)), static_cast<float>(std::sin(a))};
}

}  // namespace

Plan1d::Plan1d(int n) : n_(n) {
  if (n < 1) throw std::invalid_argument("fft: size must be >= 1");
  pow2_ = is_pow2(n);
  m_ = pow2_ ? n : next_pow2(2 * n - 1);

  bitrev_.resize(m_);
  int bits = 0;
  while ((1 << bits) < m_) ++bits;
  for (int i = 0; i < m_; ++i) {
    int r = 0;
    for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1) << (bits - 1 - b);
    bitrev_[i] = r;
  }
  twiddle_.resize(m_ / 2);
  for (int k = 0; k < m_ / 2; ++k) twiddle_[k] = unit(2.0 * k, m_);

  if (!pow2_) {
    // Chirp w_j = exp(-i pi j^2 / n); j^2 taken mod 2n keeps the angle small.
    chirp_.resize(n_);
    for (int j = 0; j < n_; ++j) {
      const long long q = (static_cast<long long>(j) * j) % (2LL * n_);
      chirp_[j] = unit(static_cast<double>(q), n_);
    }
    // Filter b_j = conj(w_j) laid out circularly on m_ points.
    bfft_.assign(m_, cfloat{0.0f, 0.0f});
    for (int j = 0; j < n_; ++j) {
      const cfloat b = std::conj(chirp_[j]);
      bfft_[j] = b;
      if (j != 0) bfft_[m_ - j] = b;
    }
    pow2_forward(bfft_.data());
  }
}

void Plan1d::pow2_forward(cfloat* data) const {
  for (int i = 0; i < m_; ++i) {
    const int r = bitrev_[i];
    if (r > i) std::swap(data[i], data[r]);
  }
  for (int len = 2; len <= m_; len <<= 1) {
    const int half = len >> 1;
    const int stride = m_ / len;
    for (int base = 0; base < m_; base += len) {
      for (int k = 0; k < half; ++k) {
        const cfloat w = twiddle_[k * stride];
        const cfloat u = data[base + k];
        const cfloat t = data[base + k + half] * w;
        data[base + k] = u + t;
        data[base + k + half] = u - t;
      }
    }
  }
}

void Plan1d::pow2_inverse(cfloat* data) const {
  for (int i = 0; i < m_; ++i) data[i] = std::conj(data[i]);
  pow2_forward(data);
  const float inv = 1.0f / static_cast<float>(m_);
  for (int i = 0; i < m_; ++i) data[i] = std::conj(data[i]) * inv;
}

void Plan1d::bluestein(cfloat* data, cfloat* scratch) const {
  cfloat* a = scratch;  // m_ elements
  for (int j = 0; j < n_; ++j) a[j] = data[j] * chirp_[j];
  for (int j = n_; j < m_; ++j) a[j] = cfloat{0.0f, 0.0f};
  pow2_forward(a);
  for (int j = 0; j < m_; ++j) a[j] *= bfft_[j];
  pow2_inverse(a);
  for (int k = 0; k < n_; ++k) data[k] = a[k] * chirp_[k];
}

void Plan1d::forward(cfloat* data, cfloat* scratch) const {
  if (n_ == 1) return;
  if (pow2_)
    pow2_forward(data);
  else
    bluestein(data, scratch);
}

void Plan1d::inverse(cfloat* data, cfloat* scratch) const {
  if (n_ == 1) return;
  if (pow2_) {
    pow2_inverse(data);
    return;
  }
  for (int i = 0; i < n_; ++i) data[i] = std::conj(data[i]);
  bluestein(data, scratch);
  const float inv = 1.0f / static_cast<float>(n_);
  for (int i = 0; i < n_; ++i) data[i] = std::conj(data[i]) * inv;
}

PlanNd::PlanNd(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw std::invalid_argument("fft: empty dims");
  points_ = 1;
  for (int d : dims_) {
    plans_.emplace_back(d);
    points_ *= d;
  }
  for (const Plan1d& p : plans_) {
    const std::size_t need = static_cast<std::size_t>(p.size()) + p.scratch_size();
    scratch_ = std::max(scratch_, need);
  }
}

void PlanNd::transform_axis(cfloat* data, int axis, bool inv,
                            cfloat* scratch) const {
  const Plan1d& plan = plans_[axis];
  const int n = dims_[axis];
  if (n == 1) return;

  std::int64_t stride = 1;
  for (std::size_t a = axis + 1; a < dims_.size(); ++a) stride *= dims_[a];
  const std::int64_t outer = points_ / (n * stride);

  cfloat* line = scratch;
  cfloat* sub = scratch + n;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < stride; ++i) {
      cfloat* base = data + o * n * stride + i;
      if (stride == 1) {
        if (inv)
          plan.inverse(base, sub);
        else
          plan.forward(base, sub);
        continue;
      }
      for (int k = 0; k < n; ++k) line[k] = base[k * stride];
      if (inv)
        plan.inverse(line, sub);
      else
        plan.forward(line, sub);
      for (int k = 0; k < n; ++k) base[k * stride] = line[k];
    }
  }
}

void PlanNd::forward(cfloat* data, cfloat* scratch) const {
  for (std::size_t a = 0; a < dims_.size(); ++a)
    transform_axis(data, static_cast<int>(a), false, scratch);
}

void PlanNd::inverse(cfloat* data, cfloat* scratch) const {
  for (std::size_t a = 0; a < dims_.size(); ++a)
    transform_axis(data, static_cast<int>(a), true, scratch);
}

}  // namespace caforge::fft
