#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace caforge::fft {

using cfloat = std::complex<float>;

// 1-D complex transform plan. Power-of-two sizes run an iterative
// Cooley-Tukey in place; everything else goes through Bluestein's chirp-z
// over a padded power-of-two grid, so arbitrary extents (96, 72, ...) work.
class Plan1d {
 public:
  explicit Plan1d(int n);

  int size() const { return n_; }
  std::size_t scratch_size() const { return pow2_ ? 0 : static_cast<std::size_t>(m_); }

  // In-place transforms; scratch must hold scratch_size() elements.
  void forward(cfloat* data, cfloat* scratch) const;
  void inverse(cfloat* data, cfloat* scratch) const;  // scaled by 1/n

 private:
  void pow2_forward(cfloat* data) const;
  void pow2_inverse(cfloat* data) const;
  void bluestein(cfloat* data, cfloat* scratch) const;

  int n_ = 0;
  bool pow2_ = false;
  int m_ = 0;  // power-of-two working size (== n_ when pow2_)
  std::vector<int> bitrev_;
  std::vector<cfloat> twiddle_;  // forward twiddles for size m_
  std::vector<cfloat> chirp_;    // exp(-i pi j^2 / n), j in [0, n)
  std::vector<cfloat> bfft_;     // FFT_m of the Bluestein filter
};

// Separable N-D transform: one 1-D pass per axis.
class PlanNd {
 public:
  explicit PlanNd(std::vector<int> dims);

  const std::vector<int>& dims() const { return dims_; }
  std::int64_t points() const { return points_; }
  std::size_t scratch_size() const { return scratch_; }

  void forward(cfloat* data, cfloat* scratch) const;
  void inverse(cfloat* data, cfloat* scratch) const;

 private:
  void transform_axis(cfloat* data, int axis, bool inv, cfloat* scratch) const;

  std::vector<int> dims_;
  std::vector<Plan1d> plans_;
  std::int64_t points_ = 0;
  std::size_t scratch_ = 0;
};

}  // namespace caforge::fft
