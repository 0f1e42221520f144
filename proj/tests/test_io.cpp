#include <unistd.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "caforge/engine.hpp"
#include "caforge/io.hpp"
#include "caforge/rng.hpp"
#include "caforge/training.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace caforge;
using testutil::check_near;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test, removed on scope exit.
struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() /
             ("caforge_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  REQUIRE(out.good());
  out << text;
}

void fill_uniform(std::vector<float>& v, std::uint64_t seed, float lo,
                  float hi) {
  rng::Stream stream(seed);
  for (float& x : v) x = stream.next_uniform(lo, hi);
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) !=
        std::bit_cast<std::uint32_t>(b[i])) {
      return false;
    }
  }
  return true;
}

NcaParams sample_params() {
  NcaParams p = init_nca_params(7, 4, 3, 6);
  fill_uniform(p.w1, 71, -0.5f, 0.5f);
  fill_uniform(p.b1, 72, -0.5f, 0.5f);
  fill_uniform(p.w2, 73, -0.5f, 0.5f);
  fill_uniform(p.b2, 74, -0.5f, 0.5f);
  // Values whose bit patterns round trips must preserve exactly.
  p.w1[0] = -0.0f;
  p.w1[1] = 1e-40f;                                        // subnormal
  p.w1[2] = 3.4e38f;                                       // near float max
  p.b2[0] = std::bit_cast<float>(std::uint32_t{0x7fc00001});  // quiet NaN
  p.fire_rate = 0.37f;
  p.alive_masking = true;
  p.alive_threshold = 0.12f;
  p.alpha_channel = 2;
  p.residual = false;
  return p;
}

Checkpoint sample_checkpoint(bool with_optimizer) {
  Checkpoint cp;
  cp.spec = LatticeSpec({12, 9}, 4, Boundary::ZeroPad);
  cp.bank = identity_sobel_bank(2, 3);
  cp.bank.designated_channel = 1;
  cp.params = sample_params();
  if (with_optimizer) {
    AdamState opt = AdamState::for_params(cp.params, 2e-3f);
    opt.step_count = 41;
    fill_uniform(opt.m.w1, 81, -0.1f, 0.1f);
    fill_uniform(opt.v.b2, 82, 0.0f, 0.1f);
    cp.optimizer = std::move(opt);
  }
  cp.master_seed = 0xfeedface12345678ull;
  return cp;
}

void check_params_equal(const NcaParams& a, const NcaParams& b) {
  CHECK(a.perception_channels == b.perception_channels);
  CHECK(a.hidden == b.hidden);
  CHECK(a.channels == b.channels);
  CHECK(a.fire_rate == b.fire_rate);
  CHECK(a.alive_masking == b.alive_masking);
  CHECK(a.alive_threshold == b.alive_threshold);
  CHECK(a.alpha_channel == b.alpha_channel);
  CHECK(a.residual == b.residual);
  auto ta = a.tensors();
  auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(bits_equal(*ta[i], *tb[i]));
}

}  // namespace

// ---------------------------------------------------------------------------
// PNG round trips and targets
// ---------------------------------------------------------------------------

TEST_CASE("png round trip stays within 8-bit quantization") {
  TempDir dir("png_roundtrip");
  Image img;
  img.width = 7;
  img.height = 5;
  img.rgba.resize(7 * 5 * 4);
  fill_uniform(img.rgba, 11, 0.0f, 1.0f);

  const fs::path file = dir.path / "random.png";
  save_png(file, img);
  const Image back = load_png(file);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  REQUIRE(back.rgba.size() == img.rgba.size());
  for (std::size_t i = 0; i < img.rgba.size(); ++i) {
    CHECK(std::abs(back.rgba[i] - img.rgba[i]) <= 1.0f / 255.0f);
  }
  // A second trip through the file is exact: the values are already quantized.
  const fs::path file2 = dir.path / "quantized.png";
  save_png(file2, back);
  const Image again = load_png(file2);
  CHECK(bits_equal(again.rgba, back.rgba));
  // Atomic write leaves no temp file behind.
  CHECK_FALSE(fs::exists(dir.path / "random.png.tmp"));
}

TEST_CASE("target loading premultiplies alpha") {
  TempDir dir("png_target");
  Image white;
  white.width = 1;
  white.height = 1;
  white.rgba = {1.0f, 1.0f, 1.0f, 1.0f};
  const fs::path white_file = dir.path / "white.png";
  save_png(white_file, white);
  const State target = load_target_image(white_file);
  REQUIRE(target.spec.dims == std::vector<int>{1, 1});
  REQUIRE(target.spec.channels == 4);
  for (int c = 0; c < 4; ++c) check_near(target.values[c], 1.0, 1e-6);

  // Fully transparent pixels lose their hidden color entirely.
  Image ghost;
  ghost.width = 1;
  ghost.height = 1;
  ghost.rgba = {0.7f, 0.3f, 0.9f, 0.0f};
  const fs::path ghost_file = dir.path / "ghost.png";
  save_png(ghost_file, ghost);
  const State ghost_target = load_target_image(ghost_file);
  for (int c = 0; c < 4; ++c) CHECK(ghost_target.values[c] == 0.0f);
}

TEST_CASE("png loader reports unreadable files") {
  TempDir dir("png_errors");
  CHECK_THROWS_AS(load_png(dir.path / "missing.png"), std::runtime_error);
  const fs::path junk = dir.path / "junk.png";
  write_text(junk, "this is not a png");
  CHECK_THROWS_AS(load_png(junk), std::runtime_error);
}

TEST_CASE("png writer validates the buffer shape") {
  Image bad;
  bad.width = 2;
  bad.height = 2;
  bad.rgba.resize(3);
  CHECK_THROWS_AS(save_png("unused.png", bad), std::invalid_argument);
}

TEST_CASE("synthetic targets have the advertised geometry") {
  const State disk = synthetic_disk_target(32);
  REQUIRE(disk.spec.dims == std::vector<int>{32, 32});
  REQUIRE(disk.spec.channels == 4);
  const auto px = [&](int y, int x, int c) {
    return disk.values[(static_cast<std::size_t>(y) * 32 + x) * 4 + c];
  };
  // Center inside the radius-0.3*side disk, corners outside.
  CHECK(px(16, 16, 0) == 0.9f);
  CHECK(px(16, 16, 3) == 1.0f);
  CHECK(px(0, 0, 3) == 0.0f);
  CHECK(px(31, 31, 3) == 0.0f);

  const State split = synthetic_two_color_target(24);
  REQUIRE(split.spec.dims == std::vector<int>{24, 24});
  const auto sx = [&](int y, int x, int c) {
    return split.values[(static_cast<std::size_t>(y) * 24 + x) * 4 + c];
  };
  CHECK(sx(5, 0, 0) == 0.85f);
  CHECK(sx(5, 23, 2) == 0.85f);
  CHECK(sx(5, 0, 0) != sx(5, 23, 0));
  for (int x : {0, 11, 12, 23}) CHECK(sx(7, x, 3) == 1.0f);
  CHECK_THROWS_AS(synthetic_disk_target(0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

TEST_CASE("one state renders as a single row") {
  State s(LatticeSpec({3}, 1, Boundary::Periodic));
  s.values = {0.0f, 0.5f, 1.0f};
  const std::vector<State> traj = {s};
  const Image img = render_spacetime(traj, ChannelMap::grayscale());
  REQUIRE(img.height == 1);
  REQUIRE(img.width == 3);
  // Grayscale replicates the channel into R, G and B; alpha is opaque.
  for (int x = 0; x < 3; ++x) {
    CHECK(img.at(0, x, 0) == s.values[x]);
    CHECK(img.at(0, x, 1) == s.values[x]);
    CHECK(img.at(0, x, 2) == s.values[x]);
    CHECK(img.at(0, x, 3) == 1.0f);
  }
}

TEST_CASE("space-time diagram of a binary rule matches a brute-force run") {
  // Rule 90 (next = left XOR right) from a centered seed, 8 steps, periodic.
  const int width = 16;
  const int steps = 8;
  std::vector<std::vector<int>> bits(steps + 1, std::vector<int>(width, 0));
  bits[0][width / 2] = 1;
  for (int t = 0; t < steps; ++t) {
    for (int x = 0; x < width; ++x) {
      const int l = bits[t][(x + width - 1) % width];
      const int c = bits[t][x];
      const int r = bits[t][(x + 1) % width];
      bits[t + 1][x] = (90 >> ((l << 2) | (c << 1) | r)) & 1;
    }
  }

  CaModel model = CaModel::eca(90);
  State s0(LatticeSpec({width}, 1, Boundary::Periodic));
  s0.values[width / 2] = 1.0f;
  RolloutRecord rec = rollout(model, s0, {}, steps, true, 0);
  std::vector<State> diagram;
  diagram.push_back(s0);
  for (const State& s : rec.trajectory) diagram.push_back(s);

  const Image img = render_spacetime(diagram, ChannelMap::grayscale());
  REQUIRE(img.height == steps + 1);
  REQUIRE(img.width == width);
  for (int t = 0; t <= steps; ++t) {
    for (int x = 0; x < width; ++x) {
      CHECK(img.at(t, x, 0) == static_cast<float>(bits[t][x]));
    }
  }
}

TEST_CASE("palette rendering colors cells by their argmax channel") {
  State s(LatticeSpec({10}, 12, Boundary::ZeroPad));
  for (int cell = 0; cell < 10; ++cell) {
    s.at(cell, cell) = 5.0f;        // winner = cell index
    s.at(cell, 11) = 100.0f;        // non-logit channels are ignored
  }
  const Image img = render_frame(s, ChannelMap::palette());
  REQUIRE(img.width == 10);
  REQUIRE(img.height == 1);
  for (int x = 0; x < 10; ++x) {
    for (int c = 0; c < 3; ++c) {
      check_near(img.at(0, x, c), kColorPalette[x][c] / 255.0, 1e-6);
    }
    CHECK(img.at(0, x, 3) == 1.0f);
  }
}

TEST_CASE("frame rendering maps a 2-D lattice straight onto pixels") {
  State s(LatticeSpec({2, 3}, 4, Boundary::ZeroPad));
  fill_uniform(s.values, 21, -0.5f, 1.5f);  // exercises clamping too
  const std::vector<float> before = s.values;
  const Image img = render_frame(s, ChannelMap::rgba());
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 3);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 3; ++x) {
      for (int c = 0; c < 4; ++c) {
        const float v = s.values[(static_cast<std::size_t>(y) * 3 + x) * 4 + c];
        const float want = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        CHECK(img.at(y, x, c) == want);
      }
    }
  }
  CHECK(s.values == before);  // rendering never mutates the state
}

TEST_CASE("partial channel maps leave missing slots at defaults") {
  State s(LatticeSpec({2}, 3, Boundary::ZeroPad));
  s.values = {0.2f, 0.4f, 0.6f, 0.1f, 0.3f, 0.5f};
  const Image img = render_frame(s, {ChannelMap::Mode::Channels, {2, 0}});
  CHECK(img.at(0, 0, 0) == 0.6f);  // channel 2 -> R
  CHECK(img.at(0, 0, 1) == 0.2f);  // channel 0 -> G
  CHECK(img.at(0, 0, 2) == 0.0f);  // B default
  CHECK(img.at(0, 0, 3) == 1.0f);  // A default
}

TEST_CASE("rendering rejects bad inputs") {
  const std::vector<State> empty;
  CHECK_THROWS_AS(render_spacetime(empty, ChannelMap::grayscale()),
                  std::invalid_argument);
  CHECK_THROWS_AS(render_animation(empty, ChannelMap::grayscale(), "anim"),
                  std::invalid_argument);

  State cube(LatticeSpec({2, 2, 2}, 1, Boundary::Periodic));
  CHECK_THROWS_AS(render_frame(cube, ChannelMap::grayscale()),
                  std::invalid_argument);

  State row(LatticeSpec({4}, 2, Boundary::Periodic));
  CHECK_THROWS_AS(render_frame(row, {ChannelMap::Mode::Channels, {2}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(render_frame(row, {ChannelMap::Mode::Channels, {}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(render_frame(row, {ChannelMap::Mode::Channels,
                                     {0, 0, 0, 0, 0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(render_frame(row, ChannelMap::palette()),
                  std::invalid_argument);

  State plane(LatticeSpec({2, 2}, 1, Boundary::Periodic));
  std::vector<State> mixed = {State(LatticeSpec({4}, 1, Boundary::Periodic)),
                              State(LatticeSpec({5}, 1, Boundary::Periodic))};
  CHECK_THROWS_AS(render_spacetime(mixed, ChannelMap::grayscale()),
                  std::invalid_argument);
  std::vector<State> planar = {plane};
  CHECK_THROWS_AS(render_spacetime(planar, ChannelMap::grayscale()),
                  std::invalid_argument);
}

TEST_CASE("animation writes one readable frame per state") {
  TempDir dir("animation");
  std::vector<State> traj;
  for (int t = 0; t < 3; ++t) {
    State s(LatticeSpec({4}, 1, Boundary::Periodic));
    s.values[t] = 1.0f;
    traj.push_back(std::move(s));
  }
  const auto files =
      render_animation(traj, ChannelMap::grayscale(), dir.path / "anim");
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "anim_0000.png");
  CHECK(files[2].filename() == "anim_0002.png");
  for (int t = 0; t < 3; ++t) {
    const Image frame = load_png(files[t]);
    REQUIRE(frame.width == 4);
    REQUIRE(frame.height == 1);
    for (int x = 0; x < 4; ++x) {
      CHECK(frame.at(0, x, 0) == (x == t ? 1.0f : 0.0f));
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint round trip is bit-exact") {
  TempDir dir("ckpt_roundtrip");
  for (bool with_optimizer : {true, false}) {
    CAPTURE(with_optimizer);
    const Checkpoint cp = sample_checkpoint(with_optimizer);
    const fs::path file = dir.path / "model.ckpt";
    save_checkpoint(file, cp);
    CHECK_FALSE(fs::exists(dir.path / "model.ckpt.tmp"));

    const Checkpoint back = load_checkpoint(file);
    CHECK(back.spec.dims == cp.spec.dims);
    CHECK(back.spec.channels == cp.spec.channels);
    CHECK(back.spec.boundary == cp.spec.boundary);
    CHECK(back.bank.mode == cp.bank.mode);
    CHECK(back.bank.designated_channel == cp.bank.designated_channel);
    REQUIRE(back.bank.kernels.size() == cp.bank.kernels.size());
    for (std::size_t i = 0; i < cp.bank.kernels.size(); ++i) {
      CHECK(back.bank.kernels[i].extents == cp.bank.kernels[i].extents);
      CHECK(bits_equal(back.bank.kernels[i].values,
                       cp.bank.kernels[i].values));
    }
    check_params_equal(back.params, cp.params);
    REQUIRE(back.optimizer.has_value() == with_optimizer);
    if (with_optimizer) {
      CHECK(back.optimizer->beta1 == cp.optimizer->beta1);
      CHECK(back.optimizer->beta2 == cp.optimizer->beta2);
      CHECK(back.optimizer->epsilon == cp.optimizer->epsilon);
      CHECK(back.optimizer->learning_rate == cp.optimizer->learning_rate);
      CHECK(back.optimizer->step_count == cp.optimizer->step_count);
      CHECK(bits_equal(back.optimizer->m.w1, cp.optimizer->m.w1));
      CHECK(bits_equal(back.optimizer->v.b2, cp.optimizer->v.b2));
    }
    CHECK(back.master_seed == cp.master_seed);

    // Writing the loaded copy reproduces the file byte for byte.
    const fs::path file2 = dir.path / "model2.ckpt";
    save_checkpoint(file2, back);
    std::ifstream a(file, std::ios::binary), b(file2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
  }
}

TEST_CASE("checkpoint loader rejects damaged files") {
  TempDir dir("ckpt_damage");
  const fs::path file = dir.path / "model.ckpt";
  save_checkpoint(file, sample_checkpoint(true));

  // Truncation at several prefixes, never a partial result.
  std::ifstream in(file, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  in.close();
  for (std::size_t keep : {std::size_t{4}, std::size_t{11}, std::size_t{40},
                           bytes.size() - 1}) {
    const fs::path cut = dir.path / "cut.ckpt";
    write_text(cut, bytes.substr(0, keep));
    CHECK_THROWS_WITH_AS(load_checkpoint(cut),
                         doctest::Contains("truncated"), std::runtime_error);
  }

  // Trailing garbage is rejected too.
  const fs::path padded = dir.path / "padded.ckpt";
  write_text(padded, bytes + "x");
  CHECK_THROWS_WITH_AS(load_checkpoint(padded),
                       doctest::Contains("trailing"), std::runtime_error);

  // A bumped version tag names both versions.
  std::string bumped = bytes;
  bumped[8] = 7;  // version lives after the 8-byte magic, little-endian
  const fs::path vfile = dir.path / "versioned.ckpt";
  write_text(vfile, bumped);
  try {
    load_checkpoint(vfile);
    FAIL("expected a version error");
  } catch (const std::runtime_error& e) {
    const std::string message = e.what();
    CHECK(message.find("version") != std::string::npos);
    CHECK(message.find('7') != std::string::npos);
    CHECK(message.find('1') != std::string::npos);
  }

  // Wrong magic.
  std::string wrong = bytes;
  wrong[0] = 'X';
  const fs::path mfile = dir.path / "magic.ckpt";
  write_text(mfile, wrong);
  CHECK_THROWS_AS(load_checkpoint(mfile), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint(dir.path / "absent.ckpt"),
                  std::runtime_error);
}

TEST_CASE("state dump round trip is bit-exact") {
  TempDir dir("state_dump");
  State s(LatticeSpec({3, 4}, 2, Boundary::ZeroPad));
  fill_uniform(s.values, 31, -2.0f, 2.0f);
  s.values[0] = -0.0f;
  s.values[1] = 1e-42f;

  const fs::path file = dir.path / "state.bin";
  save_state(file, s);
  const State back = load_state(file);
  CHECK(back.spec.dims == s.spec.dims);
  CHECK(back.spec.channels == s.spec.channels);
  CHECK(back.spec.boundary == s.spec.boundary);
  CHECK(bits_equal(back.values, s.values));

  std::ifstream in(file, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  in.close();
  const fs::path cut = dir.path / "cut.bin";
  write_text(cut, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH_AS(load_state(cut), doctest::Contains("truncated"),
                       std::runtime_error);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST_CASE("metrics write and read back as line-delimited records") {
  TempDir dir("metrics");
  const fs::path file = dir.path / "train.jsonl";
  {
    MetricsWriter writer(file);
    writer.append({0, 0.5, 0.1, 1e6, "growing"});
    writer.append({25, 0.25, 2.5, 1.1e6, "growing"});
    writer.append({50, 0.125, 5.0, 1.2e6, "growing"});
  }
  const auto records = read_metrics(file);
  REQUIRE(records.size() == 3);
  CHECK(records[0].iteration == 0);
  CHECK(records[1].iteration == 25);
  CHECK(records[2].iteration == 50);
  check_near(records[1].loss, 0.25, 1e-12);
  check_near(records[2].wall_seconds, 5.0, 1e-12);
  check_near(records[0].cell_updates_per_sec, 1e6, 1e-3);
  CHECK(records[0].tag == "growing");

  // Every line is standalone structured text.
  std::ifstream in(file);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.front() == '{');
    CHECK(line.back() == '}');
  }
  CHECK(lines == 3);
}

TEST_CASE("metrics iterations must strictly increase within a tag") {
  TempDir dir("metrics_monotone");
  MetricsWriter writer(dir.path / "m.jsonl");
  writer.append({3, 1.0, 0.0, 0.0, "t"});
  CHECK_THROWS_AS(writer.append({3, 0.9, 0.1, 0.0, "t"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(writer.append({2, 0.9, 0.1, 0.0, "t"}),
                  std::invalid_argument);
  writer.append({4, 0.9, 0.1, 0.0, "t"});
  // A different series may revisit earlier iteration numbers.
  writer.append({3, 0.5, 0.0, 0.0, "eval"});
  CHECK_THROWS_AS(writer.append({3, 0.5, 0.0, 0.0, "eval"}),
                  std::invalid_argument);
  CHECK(read_metrics(dir.path / "m.jsonl").size() == 3);
}

TEST_CASE("metrics reader names the offending line") {
  TempDir dir("metrics_bad");
  const fs::path file = dir.path / "m.jsonl";
  write_text(file,
             "{\"iteration\":0,\"loss\":1.0,\"wall_seconds\":0.0,"
             "\"cell_updates_per_sec\":0.0,\"tag\":\"t\"}\n"
             "not json\n");
  try {
    read_metrics(file);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string message = e.what();
    CHECK(message.find("line 2") != std::string::npos);
    CHECK(message.find("m.jsonl") != std::string::npos);
  }
  CHECK_THROWS_AS(read_metrics(dir.path / "missing.jsonl"),
                  std::runtime_error);
}

// ---------------------------------------------------------------------------
// Row-task dataset loading
// ---------------------------------------------------------------------------

TEST_CASE("row-task loader parses files and groups by family") {
  TempDir dir("arc_load");
  write_text(dir.path / "move_1_7.json",
             R"({"train": [{"input": [[0,1,1,0]], "output": [[0,0,1,1]]}],
                 "test": [{"input": [[1,1,0,0]], "output": [[0,1,1,0]]}]})");
  write_text(dir.path / "move_1_12.json",
             R"({"train": [{"input": [[1,1,0,0,0]], "output": [[0,1,1,0,0]]}],
                 "test": [{"input": [[0,1,1,0,0]], "output": [[0,0,1,1,0]]}]})");
  write_text(dir.path / "denoise_3.json",
             R"({"train": [{"input": [[2,2,2,0,2]], "output": [[2,2,2,0,0]]}],
                 "test": [{"input": [[2,0,2,2,2]], "output": [[0,0,2,2,2]]}]})");
  write_text(dir.path / "notes.txt", "ignored: not a task file");

  const auto tasks = load_arc1d(dir.path);
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0].name == "denoise");
  CHECK(tasks[1].name == "move_1");
  CHECK(tasks[2].name == "move_1");
  CHECK(tasks[0].width == 5);
  // move_1_12.json sorts before move_1_7.json lexicographically.
  CHECK(tasks[1].width == 5);
  CHECK(tasks[2].width == 4);
  REQUIRE(tasks[2].train_pairs.size() == 1);
  CHECK(tasks[2].train_pairs[0].input == std::vector<int>{0, 1, 1, 0});
  CHECK(tasks[2].train_pairs[0].output == std::vector<int>{0, 0, 1, 1});
  REQUIRE(tasks[2].test_pairs.size() == 1);
  tasks[0].validate();
  tasks[1].validate();
  tasks[2].validate();
}

TEST_CASE("row-task loader handles the minimal single-pair file") {
  TempDir dir("arc_minimal");
  write_text(dir.path / "tiny.json",
             R"({"train": [{"input": [[1,1,0]], "output": [[0,1,1]]}]})");
  const auto tasks = load_arc1d(dir.path);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].name == "tiny");
  CHECK(tasks[0].width == 3);
  CHECK(tasks[0].train_pairs.size() == 1);
  CHECK(tasks[0].test_pairs.empty());
}

TEST_CASE("row-task loader accepts a directory per family") {
  TempDir dir("arc_subdirs");
  fs::create_directories(dir.path / "shift_left");
  write_text(dir.path / "shift_left" / "instance_1.json",
             R"({"train": [{"input": [[0,3,3]], "output": [[3,3,0]]}],
                 "test": [{"input": [[0,0,3]], "output": [[0,3,0]]}]})");
  const auto tasks = load_arc1d(dir.path);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].name == "shift_left");
  CHECK(tasks[0].width == 3);
}

TEST_CASE("row-task loader returns an empty list for an empty directory") {
  TempDir dir("arc_empty");
  CHECK(load_arc1d(dir.path).empty());
  CHECK_THROWS_AS(load_arc1d(dir.path / "missing"), std::runtime_error);
}

TEST_CASE("row-task loader errors name the offending file") {
  TempDir dir("arc_errors");
  const auto expect_error_naming = [&](const std::string& name,
                                       const std::string& body) {
    TempDir inner("arc_error_case");
    const fs::path file = inner.path / name;
    write_text(file, body);
    try {
      load_arc1d(inner.path);
      FAIL("expected an error for " << name);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find(name) != std::string::npos);
    }
  };
  // Color out of range.
  expect_error_naming("color.json",
                      R"({"train": [{"input": [[10]], "output": [[0]]}]})");
  // Multi-row grid.
  expect_error_naming(
      "grid.json",
      R"({"train": [{"input": [[1,1],[0,0]], "output": [[0,1]]}]})");
  // Broken JSON.
  expect_error_naming("broken.json", "{\"train\": [");
  // Ragged widths.
  expect_error_naming(
      "ragged.json",
      R"({"train": [{"input": [[1,1,0]], "output": [[0,1]]}]})");
  // Non-integer colors.
  expect_error_naming(
      "floaty.json",
      R"({"train": [{"input": [[0.5,1]], "output": [[0,1]]}]})");
  // Missing train array.
  expect_error_naming("notrain.json", R"({"test": []})");
  // No pairs at all.
  expect_error_naming("empty.json", R"({"train": [], "test": []})");
}
