#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace caforge {

enum class Boundary : std::uint8_t { Periodic = 0, ZeroPad = 1 };

std::string to_string(Boundary b);

// Shape and boundary policy of a d-dimensional, c-channel grid.
// Extents are spatial only; channels live contiguously per cell.
struct LatticeSpec {
  std::vector<int> dims;
  int channels = 1;
  Boundary boundary = Boundary::Periodic;

  LatticeSpec() = default;
  LatticeSpec(std::vector<int> dims, int channels,
              Boundary boundary = Boundary::Periodic);

  int rank() const { return static_cast<int>(dims.size()); }
  std::int64_t cell_count() const;
  std::int64_t value_count() const { return cell_count() * channels; }

  // Row-major over spatial dims. Coordinates must be in range.
  std::int64_t cell_index(std::span<const int> coord) const;
  void cell_coord(std::int64_t index, std::span<int> out) const;

  bool same_space(const LatticeSpec& other) const { return dims == other.dims; }
  bool same_shape(const LatticeSpec& other) const {
    return dims == other.dims && channels == other.channels;
  }

  void validate() const;  // throws std::invalid_argument
};

// Dense cell-state buffer, cell-major with channels contiguous (channel-last).
struct State {
  LatticeSpec spec;
  std::vector<float> values;

  State() = default;
  explicit State(LatticeSpec s);

  float at(std::int64_t cell, int channel) const {
    return values[cell * spec.channels + channel];
  }
  float& at(std::int64_t cell, int channel) {
    return values[cell * spec.channels + channel];
  }
};

// External per-cell input; shares spatial dims with the paired state but has
// its own channel count.
struct InputField {
  LatticeSpec spec;
  std::vector<float> values;
};

struct NeighborhoodSpec {
  enum class Kind { Moore, VonNeumann, Offsets };

  Kind kind = Kind::Moore;
  int radius = 1;
  std::vector<std::vector<int>> offsets;  // Kind::Offsets only

  static NeighborhoodSpec moore(int radius);
  static NeighborhoodSpec von_neumann(int radius);
  static NeighborhoodSpec explicit_offsets(std::vector<std::vector<int>> offs);

  // Offsets in the fixed enumeration order of this spec: row-major
  // (lexicographic) over the offset box for the named kinds, the given
  // order for explicit offsets.
  std::vector<std::vector<int>> offset_list(int rank) const;
};

// One flag per cell; true = the cell may be updated.
struct CellMask {
  std::vector<std::uint8_t> updatable;

  static CellMask all(std::int64_t cell_count, bool value);
};

enum class StateInit { Zeros, Uniform01, SingleSeedCell };

State new_state(const LatticeSpec& spec, StateInit init,
                std::uint64_t seed = 0);

// Per-neighbor channel vectors in the neighborhood's fixed offset order.
// Periodic wraps; ZeroPad yields zero vectors outside the lattice.
std::vector<std::vector<float>> gather_neighborhood(
    const State& state, std::span<const int> coord,
    const NeighborhoodSpec& nbhd);

// next where the mask allows updates, prev elsewhere.
State apply_mask(const State& state_next, const State& state_prev,
                 const CellMask& mask);

// Mathematical modulo; well-defined for negative a.
constexpr int wrap_index(int a, int extent) {
  int m = a % extent;
  return m < 0 ? m + extent : m;
}

}  // namespace caforge
