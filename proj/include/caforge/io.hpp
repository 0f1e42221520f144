#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caforge/training.hpp"

namespace caforge {

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

// RGBA raster, row-major from the top-left, values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgba;  // height * width * 4

  float at(int y, int x, int c) const {
    return rgba[(static_cast<std::size_t>(y) * width + x) * 4 + c];
  }
  float& at(int y, int x, int c) {
    return rgba[(static_cast<std::size_t>(y) * width + x) * 4 + c];
  }
};

// PNG in/out (8-bit RGBA). save_png writes atomically (temp file + rename).
Image load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& image);

// Training target from a PNG: a {height, width} 4-channel state with the
// visible channels premultiplied by alpha.
State load_target_image(const std::filesystem::path& path,
                        Boundary boundary = Boundary::ZeroPad);

// Built-in targets for runs without image assets: a filled disk of radius
// 0.3 * side on a transparent background, and an opaque split-field image.
// Both are {side, side} 4-channel RGBA states.
State synthetic_disk_target(int side);
State synthetic_two_color_target(int side);

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Fixed palette for the ten row-task colors, documented in the README.
inline constexpr std::array<std::array<std::uint8_t, 3>, 10> kColorPalette = {{
    {0x00, 0x00, 0x00},  // 0 black
    {0x00, 0x74, 0xD9},  // 1 blue
    {0xFF, 0x41, 0x36},  // 2 red
    {0x2E, 0xCC, 0x40},  // 3 green
    {0xFF, 0xDC, 0x00},  // 4 yellow
    {0xAA, 0xAA, 0xAA},  // 5 gray
    {0xF0, 0x12, 0xBE},  // 6 magenta
    {0xFF, 0x85, 0x1B},  // 7 orange
    {0x7F, 0xDB, 0xFF},  // 8 sky
    {0x87, 0x0C, 0x25},  // 9 maroon
}};

// How state channels map to pixels. Channels mode copies up to four selected
// channels into RGBA (one selected channel renders as grayscale; missing
// G/B/A slots default to 0/0/1); values are clamped to [0,1]. ArgmaxPalette
// colors each cell by the palette entry of its largest of the first ten
// channels.
struct ChannelMap {
  enum class Mode { Channels, ArgmaxPalette };

  Mode mode = Mode::Channels;
  std::vector<int> channels = {0, 1, 2, 3};

  static ChannelMap rgba() { return {}; }
  static ChannelMap grayscale(int channel = 0) {
    return {Mode::Channels, {channel}};
  }
  static ChannelMap palette() { return {Mode::ArgmaxPalette, {}}; }
};

// One state as an image: 2-D states map to {height, width}, 1-D states to a
// single row. Throws std::invalid_argument for other ranks or bad maps.
Image render_frame(const State& state, const ChannelMap& map);

// A 1-D trajectory stacked into an image, one row per state, first state on
// the top row. Throws std::invalid_argument on an empty trajectory, a
// non-1-D state, or mismatched widths.
Image render_spacetime(std::span<const State> trajectory,
                       const ChannelMap& map);

// Frame-per-state PNG sequence <prefix>_0000.png, _0001.png, ... Returns the
// written paths in order. Throws std::invalid_argument on an empty
// trajectory.
std::vector<std::filesystem::path> render_animation(
    std::span<const State> trajectory, const ChannelMap& map,
    const std::filesystem::path& prefix);

// ---------------------------------------------------------------------------
// Checkpoints and state dumps
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume or evaluate a trained neural model. The binary
// layout is little-endian, versioned, and documented field-by-field in the
// README; round trips are bit-exact.
struct Checkpoint {
  LatticeSpec spec;                   // training lattice
  KernelBank bank;                    // perception filters
  NcaParams params;                   // network tensors and update flags
  std::optional<AdamState> optimizer; // present when training may resume
  std::uint64_t master_seed = 0;
};

// Atomic write (temp file + rename). Throws std::runtime_error on I/O
// failure.
void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& checkpoint);

// Throws std::runtime_error on unreadable, truncated, or trailing-garbage
// files, and on a version mismatch (the message names both versions).
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Raw state snapshot in the same little-endian container style; atomic write,
// bit-exact round trip.
void save_state(const std::filesystem::path& path, const State& state);
State load_state(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsRecord {
  std::int64_t iteration = 0;
  double loss = 0.0;
  double wall_seconds = 0.0;
  double cell_updates_per_sec = 0.0;
  std::string tag;
};

// Line-delimited JSON, one record per line, flushed per append. Iterations
// must strictly increase within each tag's series; violations throw
// std::invalid_argument.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);

  void append(const MetricsRecord& record);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::map<std::string, std::int64_t> last_iteration_;
};

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Row-task dataset loading
// ---------------------------------------------------------------------------

// Loads every task instance under `directory`. Two layouts are accepted:
// files directly in the directory are grouped into families by their stem
// with a trailing _<digits> instance counter removed, and each subdirectory
// is treated as one family containing instance files (the subdirectory name
// wins as the family name). Each *.json file holds one instance:
//   {"train": [{"input": [[ints]], "output": [[ints]]}, ...], "test": [...]}
// with single-row grids of colors 0..9. Returns one task per file, named by
// its family, sorted by (family, filename). An empty directory yields an
// empty list; malformed files throw std::runtime_error naming the file.
std::vector<Arc1dTask> load_arc1d(const std::filesystem::path& directory);

}  // namespace caforge
