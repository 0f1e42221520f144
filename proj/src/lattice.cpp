#include "caforge/lattice.hpp"

#include <algorithm>
#include <stdexcept>

#include "caforge/rng.hpp"

namespace caforge {

std::string to_string(Boundary b) {
  return b == Boundary::Periodic ? "periodic" : "zeropad";
}

LatticeSpec::LatticeSpec(std::vector<int> d, int c, Boundary b)
    : dims(std::move(d)), channels(c), boundary(b) {
  validate();
}

void LatticeSpec::validate() const {
  if (dims.empty()) throw std::invalid_argument("lattice: no spatial dims");
  for (int e : dims) {
    if (e < 1) throw std::invalid_argument("lattice: extent must be >= 1");
  }
  if (channels < 1) throw std::invalid_argument("lattice: channels must be >= 1");
}

std::int64_t LatticeSpec::cell_count() const {
  std::int64_t n = 1;
  for (int e : dims) n *= e;
  return n;
}

std::int64_t LatticeSpec::cell_index(std::span<const int> coord) const {
  if (coord.size() != dims.size())
    throw std::invalid_argument("cell_index: coordinate rank mismatch");
  std::int64_t idx = 0;
  for (std::size_t a = 0; a < dims.size(); ++a) {
    if (coord[a] < 0 || coord[a] >= dims[a])
      throw std::out_of_range("cell_index: coordinate out of range");
    idx = idx * dims[a] + coord[a];
  }
  return idx;
}

void LatticeSpec::cell_coord(std::int64_t index, std::span<int> out) const {
  for (std::size_t a = dims.size(); a-- > 0;) {
    out[a] = static_cast<int>(index % dims[a]);
    index /= dims[a];
  }
}

State::State(LatticeSpec s) : spec(std::move(s)) {
  spec.validate();
  values.assign(static_cast<std::size_t>(spec.value_count()), 0.0f);
}

NeighborhoodSpec NeighborhoodSpec::moore(int radius) {
  if (radius < 1) throw std::invalid_argument("moore: radius must be >= 1");
  NeighborhoodSpec n;
  n.kind = Kind::Moore;
  n.radius = radius;
  return n;
}

NeighborhoodSpec NeighborhoodSpec::von_neumann(int radius) {
  if (radius < 1) throw std::invalid_argument("von_neumann: radius must be >= 1");
  NeighborhoodSpec n;
  n.kind = Kind::VonNeumann;
  n.radius = radius;
  return n;
}

NeighborhoodSpec NeighborhoodSpec::explicit_offsets(
    std::vector<std::vector<int>> offs) {
  NeighborhoodSpec n;
  n.kind = Kind::Offsets;
  n.offsets = std::move(offs);
  return n;
}

std::vector<std::vector<int>> NeighborhoodSpec::offset_list(int rank) const {
  if (kind == Kind::Offsets) {
    for (const auto& o : offsets) {
      if (static_cast<int>(o.size()) != rank)
        throw std::invalid_argument("neighborhood: offset rank mismatch");
    }
    return offsets;
  }
  // Row-major enumeration of the [-r, r]^rank box; VonNeumann keeps the
  // offsets with L1 norm <= r, in the same order.
  std::vector<std::vector<int>> out;
  std::vector<int> cur(rank, -radius);
  while (true) {
    if (kind == Kind::Moore) {
      out.push_back(cur);
    } else {
      int l1 = 0;
      for (int v : cur) l1 += std::abs(v);
      if (l1 <= radius) out.push_back(cur);
    }
    int a = rank - 1;
    while (a >= 0 && cur[a] == radius) cur[a--] = -radius;
    if (a < 0) break;
    ++cur[a];
  }
  return out;
}

CellMask CellMask::all(std::int64_t cell_count, bool value) {
  CellMask m;
  m.updatable.assign(static_cast<std::size_t>(cell_count), value ? 1 : 0);
  return m;
}

State new_state(const LatticeSpec& spec, StateInit init, std::uint64_t seed) {
  State s(spec);
  switch (init) {
    case StateInit::Zeros:
      break;
    case StateInit::Uniform01: {
      for (std::size_t i = 0; i < s.values.size(); ++i)
        s.values[i] = rng::u01(rng::derive(seed, i));
      break;
    }
    case StateInit::SingleSeedCell: {
      std::vector<int> center(spec.dims.size());
      for (std::size_t a = 0; a < spec.dims.size(); ++a)
        center[a] = spec.dims[a] / 2;
      std::int64_t cell = spec.cell_index(center);
      for (int ch = 0; ch < spec.channels; ++ch) s.at(cell, ch) = 1.0f;
      break;
    }
  }
  return s;
}

std::vector<std::vector<float>> gather_neighborhood(
    const State& state, std::span<const int> coord,
    const NeighborhoodSpec& nbhd) {
  const LatticeSpec& spec = state.spec;
  const int rank = spec.rank();
  if (static_cast<int>(coord.size()) != rank)
    throw std::invalid_argument("gather_neighborhood: coordinate rank mismatch");
  for (int a = 0; a < rank; ++a) {
    if (coord[a] < 0 || coord[a] >= spec.dims[a])
      throw std::out_of_range("gather_neighborhood: coordinate out of range");
  }

  const auto offsets = nbhd.offset_list(rank);
  std::vector<std::vector<float>> out;
  out.reserve(offsets.size());
  std::vector<int> n(rank);
  for (const auto& off : offsets) {
    bool inside = true;
    for (int a = 0; a < rank; ++a) {
      int c = coord[a] + off[a];
      if (spec.boundary == Boundary::Periodic) {
        c = wrap_index(c, spec.dims[a]);
      } else if (c < 0 || c >= spec.dims[a]) {
        inside = false;
      }
      n[a] = c;
    }
    if (!inside) {
      out.emplace_back(spec.channels, 0.0f);
      continue;
    }
    std::int64_t cell = spec.cell_index(n);
    out.emplace_back(state.values.begin() + cell * spec.channels,
                     state.values.begin() + (cell + 1) * spec.channels);
  }
  return out;
}

State apply_mask(const State& state_next, const State& state_prev,
                 const CellMask& mask) {
  if (!state_next.spec.same_shape(state_prev.spec))
    throw std::invalid_argument("apply_mask: state shape mismatch");
  const std::int64_t cells = state_next.spec.cell_count();
  if (static_cast<std::int64_t>(mask.updatable.size()) != cells)
    throw std::invalid_argument("apply_mask: mask length mismatch");

  State out = state_next;
  const int c = out.spec.channels;
  for (std::int64_t i = 0; i < cells; ++i) {
    if (!mask.updatable[i]) {
      std::copy_n(state_prev.values.begin() + i * c, c,
                  out.values.begin() + i * c);
    }
  }
  return out;
}

}  // namespace caforge
