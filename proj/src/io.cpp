#include "caforge/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string_view>
#include <utility>

#include "json.hpp"

namespace caforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Atomic file plumbing
// ---------------------------------------------------------------------------

fs::path temp_sibling(const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  return tmp;
}

void atomic_write_bytes(const fs::path& path,
                        std::span<const unsigned char> bytes) {
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::vector<unsigned char> read_all_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) {
    throw std::runtime_error("failed reading " + path.string());
  }
  return bytes;
}

// ---------------------------------------------------------------------------
// Little-endian binary containers
// ---------------------------------------------------------------------------

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void magic(const char (&m)[9]) {
    bytes_.insert(bytes_.end(), m, m + 8);  // drops the terminating NUL
  }
  void f32_array(std::span<const float> values) {
    u64(values.size());
    for (float v : values) f32(v);
  }

  std::span<const unsigned char> bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> bytes, fs::path path)
      : bytes_(bytes), path_(std::move(path)) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    }
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }

  void expect_magic(const char (&m)[9], const char* what) {
    need(8);
    if (std::memcmp(bytes_.data() + pos_, m, 8) != 0) {
      throw std::runtime_error(std::string("not a ") + what + " file: " +
                               path_.string());
    }
    pos_ += 8;
  }

  std::vector<float> f32_array() {
    const std::uint64_t count = u64();
    if (count > remaining() / 4) {
      throw std::runtime_error("truncated file: " + path_.string());
    }
    std::vector<float> values(count);
    for (std::uint64_t i = 0; i < count; ++i) values[i] = f32();
    return values;
  }

  void expect_eof() const {
    if (pos_ != bytes_.size()) {
      throw std::runtime_error("trailing bytes after payload in " +
                               path_.string());
    }
  }

  const fs::path& path() const { return path_; }

 private:
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void need(std::size_t n) const {
    if (n > remaining()) {
      throw std::runtime_error("truncated file: " + path_.string());
    }
  }

  std::span<const unsigned char> bytes_;
  fs::path path_;
  std::size_t pos_ = 0;
};

constexpr char kCheckpointMagic[9] = "CAFCKPT\x01";
constexpr char kStateMagic[9] = "CAFSTATE";

void write_spec(ByteWriter& w, const LatticeSpec& spec) {
  w.u32(static_cast<std::uint32_t>(spec.dims.size()));
  for (int d : spec.dims) w.i32(d);
  w.i32(spec.channels);
  w.u8(static_cast<std::uint8_t>(spec.boundary));
}

LatticeSpec read_spec(ByteReader& r) {
  const std::uint32_t rank = r.u32();
  if (rank > 16) {
    throw std::runtime_error("implausible lattice rank in " +
                             r.path().string());
  }
  std::vector<int> dims(rank);
  for (std::uint32_t i = 0; i < rank; ++i) dims[i] = r.i32();
  const int channels = r.i32();
  const std::uint8_t boundary = r.u8();
  if (boundary > 1) {
    throw std::runtime_error("unknown boundary tag in " + r.path().string());
  }
  return LatticeSpec(std::move(dims), channels,
                     static_cast<Boundary>(boundary));
}

void write_bank(ByteWriter& w, const KernelBank& bank) {
  w.u8(static_cast<std::uint8_t>(bank.mode));
  w.i32(bank.designated_channel);
  w.u32(static_cast<std::uint32_t>(bank.kernels.size()));
  for (const Kernel& k : bank.kernels) {
    w.u32(static_cast<std::uint32_t>(k.extents.size()));
    for (int e : k.extents) w.i32(e);
    w.f32_array(k.values);
  }
}

KernelBank read_bank(ByteReader& r) {
  KernelBank bank;
  const std::uint8_t mode = r.u8();
  if (mode > 1) {
    throw std::runtime_error("unknown kernel mode in " + r.path().string());
  }
  bank.mode = static_cast<KernelMode>(mode);
  bank.designated_channel = r.i32();
  const std::uint32_t count = r.u32();
  bank.kernels.resize(count);
  for (Kernel& k : bank.kernels) {
    const std::uint32_t rank = r.u32();
    if (rank > 16) {
      throw std::runtime_error("implausible kernel rank in " +
                               r.path().string());
    }
    k.extents.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) k.extents[i] = r.i32();
    k.values = r.f32_array();
  }
  return bank;
}

void write_params(ByteWriter& w, const NcaParams& p) {
  w.i32(p.perception_channels);
  w.i32(p.hidden);
  w.i32(p.channels);
  w.f32(p.fire_rate);
  w.u8(p.alive_masking ? 1 : 0);
  w.f32(p.alive_threshold);
  w.i32(p.alpha_channel);
  w.u8(p.residual ? 1 : 0);
  for (const auto* t : p.tensors()) w.f32_array(*t);
}

NcaParams read_params(ByteReader& r) {
  NcaParams p;
  p.perception_channels = r.i32();
  p.hidden = r.i32();
  p.channels = r.i32();
  p.fire_rate = r.f32();
  p.alive_masking = r.u8() != 0;
  p.alive_threshold = r.f32();
  p.alpha_channel = r.i32();
  p.residual = r.u8() != 0;
  for (auto* t : p.tensors()) *t = r.f32_array();
  return p;
}

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// ---------------------------------------------------------------------------
// Rendering helpers
// ---------------------------------------------------------------------------

void validate_map(const ChannelMap& map, int state_channels) {
  if (map.mode == ChannelMap::Mode::ArgmaxPalette) {
    if (state_channels < kColorCount) {
      throw std::invalid_argument(
          "palette rendering needs at least 10 channels");
    }
    return;
  }
  if (map.channels.empty() || map.channels.size() > 4) {
    throw std::invalid_argument("channel map must select 1 to 4 channels");
  }
  for (int c : map.channels) {
    if (c < 0 || c >= state_channels) {
      throw std::invalid_argument("channel map selects channel " +
                                  std::to_string(c) + " of a " +
                                  std::to_string(state_channels) +
                                  "-channel state");
    }
  }
}

void write_pixel(const State& s, std::int64_t cell, const ChannelMap& map,
                 float* px) {
  if (map.mode == ChannelMap::Mode::ArgmaxPalette) {
    int best = 0;
    float best_value = s.at(cell, 0);
    for (int c = 1; c < kColorCount; ++c) {
      if (s.at(cell, c) > best_value) {
        best_value = s.at(cell, c);
        best = c;
      }
    }
    for (int i = 0; i < 3; ++i) px[i] = kColorPalette[best][i] / 255.0f;
    px[3] = 1.0f;
    return;
  }
  px[0] = px[1] = px[2] = 0.0f;
  px[3] = 1.0f;
  for (std::size_t i = 0; i < map.channels.size(); ++i) {
    px[i] = clamp01(s.at(cell, map.channels[i]));
  }
  if (map.channels.size() == 1) px[1] = px[2] = px[0];
}

}  // namespace

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

Image load_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string message = image.message;
    png_image_free(&image);
    throw std::runtime_error("failed to read PNG " + path.string() + ": " +
                             message);
  }
  image.format = PNG_FORMAT_RGBA;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw std::runtime_error("failed to read PNG " + path.string() + ": " +
                             message);
  }
  Image out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgba.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out.rgba[i] = bytes[i] / 255.0f;
  }
  return out;
}

void save_png(const fs::path& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgba.size() != static_cast<std::size_t>(img.width) * img.height * 4) {
    throw std::invalid_argument("image buffer does not match its dimensions");
  }
  std::vector<unsigned char> bytes(img.rgba.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] =
        static_cast<unsigned char>(std::lround(clamp01(img.rgba[i]) * 255.0f));
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGBA;
  const fs::path tmp = temp_sibling(path);
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, bytes.data(), 0,
                               nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw std::runtime_error("failed to write PNG " + tmp.string() + ": " +
                             message);
  }
  fs::rename(tmp, path);
}

State load_target_image(const fs::path& path, Boundary boundary) {
  const Image img = load_png(path);
  State target(LatticeSpec({img.height, img.width}, 4, boundary));
  for (std::size_t px = 0; px < img.rgba.size(); px += 4) {
    const float a = img.rgba[px + 3];
    target.values[px + 0] = img.rgba[px + 0] * a;
    target.values[px + 1] = img.rgba[px + 1] * a;
    target.values[px + 2] = img.rgba[px + 2] * a;
    target.values[px + 3] = a;
  }
  return target;
}

State synthetic_disk_target(int side) {
  if (side <= 0) throw std::invalid_argument("target side must be positive");
  State target(LatticeSpec({side, side}, 4, Boundary::ZeroPad));
  const double center = (side - 1) / 2.0;
  const double radius = 0.3 * side;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double dy = y - center;
      const double dx = x - center;
      if (dy * dy + dx * dx <= radius * radius) {
        float* px = target.values.data() +
                    (static_cast<std::size_t>(y) * side + x) * 4;
        px[0] = 0.9f;
        px[1] = 0.4f;
        px[2] = 0.1f;
        px[3] = 1.0f;
      }
    }
  }
  return target;
}

State synthetic_two_color_target(int side) {
  if (side <= 0) throw std::invalid_argument("target side must be positive");
  State target(LatticeSpec({side, side}, 4, Boundary::ZeroPad));
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      float* px =
          target.values.data() + (static_cast<std::size_t>(y) * side + x) * 4;
      if (x < side / 2) {
        px[0] = 0.85f;
        px[1] = 0.25f;
        px[2] = 0.15f;
      } else {
        px[0] = 0.15f;
        px[1] = 0.35f;
        px[2] = 0.85f;
      }
      px[3] = 1.0f;
    }
  }
  return target;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

Image render_frame(const State& state, const ChannelMap& map) {
  validate_map(map, state.spec.channels);
  const int rank = state.spec.rank();
  int height = 1, width = 0;
  if (rank == 1) {
    width = state.spec.dims[0];
  } else if (rank == 2) {
    height = state.spec.dims[0];
    width = state.spec.dims[1];
  } else {
    throw std::invalid_argument("can only render 1-D and 2-D states");
  }
  Image img;
  img.width = width;
  img.height = height;
  img.rgba.resize(static_cast<std::size_t>(width) * height * 4);
  const std::int64_t cells = state.spec.cell_count();
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    write_pixel(state, cell, map, img.rgba.data() + cell * 4);
  }
  return img;
}

Image render_spacetime(std::span<const State> trajectory,
                       const ChannelMap& map) {
  if (trajectory.empty()) {
    throw std::invalid_argument("cannot render an empty trajectory");
  }
  const LatticeSpec& first = trajectory.front().spec;
  if (first.rank() != 1) {
    throw std::invalid_argument("space-time diagrams need 1-D states");
  }
  validate_map(map, first.channels);
  const int width = first.dims[0];
  Image img;
  img.width = width;
  img.height = static_cast<int>(trajectory.size());
  img.rgba.resize(static_cast<std::size_t>(width) * trajectory.size() * 4);
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const State& s = trajectory[t];
    if (!s.spec.same_shape(first)) {
      throw std::invalid_argument(
          "trajectory states disagree on width or channels");
    }
    for (int x = 0; x < width; ++x) {
      write_pixel(s, x, map,
                  img.rgba.data() + (t * static_cast<std::size_t>(width) + x) * 4);
    }
  }
  return img;
}

std::vector<fs::path> render_animation(std::span<const State> trajectory,
                                       const ChannelMap& map,
                                       const fs::path& prefix) {
  if (trajectory.empty()) {
    throw std::invalid_argument("cannot render an empty trajectory");
  }
  if (!prefix.parent_path().empty()) {
    fs::create_directories(prefix.parent_path());
  }
  std::vector<fs::path> written;
  written.reserve(trajectory.size());
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "_%04zu.png", t);
    fs::path frame = prefix;
    frame += suffix;
    save_png(frame, render_frame(trajectory[t], map));
    written.push_back(std::move(frame));
  }
  return written;
}

// ---------------------------------------------------------------------------
// Checkpoints and state dumps
// ---------------------------------------------------------------------------

void save_checkpoint(const fs::path& path, const Checkpoint& cp) {
  ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  write_spec(w, cp.spec);
  write_bank(w, cp.bank);
  write_params(w, cp.params);
  w.u8(cp.optimizer.has_value() ? 1 : 0);
  if (cp.optimizer) {
    const AdamState& opt = *cp.optimizer;
    w.f32(opt.beta1);
    w.f32(opt.beta2);
    w.f32(opt.epsilon);
    w.f32(opt.learning_rate);
    w.i64(opt.step_count);
    for (const auto* t : opt.m.tensors()) w.f32_array(*t);
    for (const auto* t : opt.v.tensors()) w.f32_array(*t);
  }
  w.u64(cp.master_seed);
  atomic_write_bytes(path, w.bytes());
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_all_bytes(path);
  ByteReader r(bytes, path);
  r.expect_magic(kCheckpointMagic, "checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(
        "checkpoint version mismatch in " + path.string() + ": file has version " +
        std::to_string(version) + ", this build reads version " +
        std::to_string(kCheckpointVersion));
  }
  Checkpoint cp;
  cp.spec = read_spec(r);
  cp.bank = read_bank(r);
  cp.params = read_params(r);
  if (r.u8() != 0) {
    AdamState opt;
    opt.beta1 = r.f32();
    opt.beta2 = r.f32();
    opt.epsilon = r.f32();
    opt.learning_rate = r.f32();
    opt.step_count = r.i64();
    for (auto* t : opt.m.tensors()) *t = r.f32_array();
    for (auto* t : opt.v.tensors()) *t = r.f32_array();
    cp.optimizer = std::move(opt);
  }
  cp.master_seed = r.u64();
  r.expect_eof();
  return cp;
}

void save_state(const fs::path& path, const State& state) {
  ByteWriter w;
  w.magic(kStateMagic);
  w.u32(kCheckpointVersion);
  write_spec(w, state.spec);
  w.f32_array(state.values);
  atomic_write_bytes(path, w.bytes());
}

State load_state(const fs::path& path) {
  const std::vector<unsigned char> bytes = read_all_bytes(path);
  ByteReader r(bytes, path);
  r.expect_magic(kStateMagic, "state dump");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(
        "state dump version mismatch in " + path.string() +
        ": file has version " + std::to_string(version) +
        ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  State state(read_spec(r));
  std::vector<float> values = r.f32_array();
  r.expect_eof();
  if (values.size() != state.values.size()) {
    throw std::runtime_error("state dump value count does not match its "
                             "lattice in " + path.string());
  }
  state.values = std::move(values);
  return state;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

MetricsWriter::MetricsWriter(const fs::path& path)
    : out_(path, std::ios::trunc), path_(path) {
  if (!out_) {
    throw std::runtime_error("cannot open metrics file " + path.string());
  }
}

void MetricsWriter::append(const MetricsRecord& record) {
  const auto it = last_iteration_.find(record.tag);
  if (it != last_iteration_.end() && record.iteration <= it->second) {
    throw std::invalid_argument(
        "metrics iterations must increase: got " +
        std::to_string(record.iteration) + " after " +
        std::to_string(it->second) + " for tag \"" + record.tag + "\"");
  }
  const json j = {{"iteration", record.iteration},
                  {"loss", record.loss},
                  {"wall_seconds", record.wall_seconds},
                  {"cell_updates_per_sec", record.cell_updates_per_sec},
                  {"tag", record.tag}};
  out_ << j.dump() << '\n';
  out_.flush();
  if (!out_) {
    throw std::runtime_error("failed writing metrics to " + path_.string());
  }
  last_iteration_[record.tag] = record.iteration;
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open metrics file " + path.string());
  }
  std::vector<MetricsRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      MetricsRecord r;
      r.iteration = j.at("iteration").get<std::int64_t>();
      r.loss = j.at("loss").get<double>();
      r.wall_seconds = j.at("wall_seconds").get<double>();
      r.cell_updates_per_sec = j.at("cell_updates_per_sec").get<double>();
      r.tag = j.at("tag").get<std::string>();
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error("malformed metrics line " +
                               std::to_string(line_number) + " in " +
                               path.string() + ": " + e.what());
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Row-task dataset loading
// ---------------------------------------------------------------------------

namespace {

// "denoise_12" -> "denoise"; a stem without a trailing instance counter is
// its own family.
std::string family_of_stem(const std::string& stem) {
  const std::size_t pos = stem.find_last_of('_');
  if (pos == std::string::npos || pos + 1 == stem.size()) return stem;
  for (std::size_t i = pos + 1; i < stem.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(stem[i]))) return stem;
  }
  return stem.substr(0, pos);
}

std::vector<int> parse_single_row(const json& grid, const char* which) {
  if (!grid.is_array() || grid.empty()) {
    throw std::runtime_error(std::string(which) +
                             " grid must be a non-empty array of rows");
  }
  if (grid.size() != 1) {
    throw std::runtime_error(std::string(which) + " grid has " +
                             std::to_string(grid.size()) +
                             " rows; row tasks require single-row grids");
  }
  const json& row = grid[0];
  if (!row.is_array() || row.empty()) {
    throw std::runtime_error(std::string(which) +
                             " row must be a non-empty array of colors");
  }
  std::vector<int> colors;
  colors.reserve(row.size());
  for (const json& v : row) {
    if (!v.is_number_integer()) {
      throw std::runtime_error(std::string(which) +
                               " row holds a non-integer value");
    }
    const int c = v.get<int>();
    if (c < 0 || c >= kColorCount) {
      throw std::runtime_error("color " + std::to_string(c) +
                               " outside 0..9 in " + which + " row");
    }
    colors.push_back(c);
  }
  return colors;
}

void parse_pairs(const json& j, const char* part, int& width,
                 std::vector<Arc1dPair>& out) {
  if (!j.contains(part)) {
    if (std::string_view(part) == "train") {
      throw std::runtime_error("missing \"train\" array");
    }
    return;  // "test" may be absent
  }
  const json& arr = j.at(part);
  if (!arr.is_array()) {
    throw std::runtime_error(std::string("\"") + part +
                             "\" must be an array of pairs");
  }
  for (const json& pair : arr) {
    if (!pair.is_object() || !pair.contains("input") ||
        !pair.contains("output")) {
      throw std::runtime_error(std::string("every \"") + part +
                               "\" entry needs \"input\" and \"output\"");
    }
    Arc1dPair p;
    p.input = parse_single_row(pair.at("input"), "input");
    p.output = parse_single_row(pair.at("output"), "output");
    if (width == 0) width = static_cast<int>(p.input.size());
    if (static_cast<int>(p.input.size()) != width ||
        static_cast<int>(p.output.size()) != width) {
      throw std::runtime_error("rows disagree on width");
    }
    out.push_back(std::move(p));
  }
}

Arc1dTask parse_task_file(const fs::path& file, std::string family) {
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open task file " + file.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed task file " + file.string() + ": " +
                             e.what());
  }
  Arc1dTask task;
  task.name = std::move(family);
  try {
    if (!j.is_object()) throw std::runtime_error("top level must be an object");
    parse_pairs(j, "train", task.width, task.train_pairs);
    parse_pairs(j, "test", task.width, task.test_pairs);
    if (task.train_pairs.empty() && task.test_pairs.empty()) {
      throw std::runtime_error("task holds no pairs");
    }
  } catch (const std::exception& e) {
    throw std::runtime_error("malformed task file " + file.string() + ": " +
                             e.what());
  }
  return task;
}

std::vector<fs::path> sorted_json_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::vector<Arc1dTask> load_arc1d(const fs::path& directory) {
  if (!fs::is_directory(directory)) {
    throw std::runtime_error("not a directory: " + directory.string());
  }
  struct Loaded {
    Arc1dTask task;
    fs::path source;
  };
  std::vector<Loaded> loaded;
  // Flat layout: instance files named <family>_<n>.json (or any stem).
  for (const fs::path& file : sorted_json_files(directory)) {
    loaded.push_back(
        {parse_task_file(file, family_of_stem(file.stem().string())), file});
  }
  // Directory-per-family layout: the directory name is the family.
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_directory()) subdirs.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (const fs::path& sub : subdirs) {
    for (const fs::path& file : sorted_json_files(sub)) {
      loaded.push_back({parse_task_file(file, sub.filename().string()), file});
    }
  }
  std::stable_sort(loaded.begin(), loaded.end(),
                   [](const Loaded& a, const Loaded& b) {
                     if (a.task.name != b.task.name) {
                       return a.task.name < b.task.name;
                     }
                     return a.source < b.source;
                   });
  std::vector<Arc1dTask> tasks;
  tasks.reserve(loaded.size());
  for (Loaded& l : loaded) tasks.push_back(std::move(l.task));
  return tasks;
}

}  // namespace caforge
