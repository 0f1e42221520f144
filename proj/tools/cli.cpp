#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "caforge/bench.hpp"
#include "caforge/io.hpp"
#include "caforge/rng.hpp"
#include "caforge/training.hpp"
#include "json.hpp"

namespace caforge::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Flag/usage problems exit with code 1 (runtime and data errors exit with 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<int> parse_dims(std::string text) {
  std::replace(text.begin(), text.end(), 'x', ',');
  std::replace(text.begin(), text.end(), 'X', ',');
  std::vector<int> dims;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find(',', pos);
    const std::string piece =
        text.substr(pos, next == std::string::npos ? next : next - pos);
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(piece, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != piece.size() || piece.empty() || value <= 0) {
      throw UsageError("bad dimension list \"" + text +
                       "\" (expected e.g. 64 or 72,72)");
    }
    dims.push_back(value);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (dims.empty()) {
    throw UsageError("bad dimension list: empty");
  }
  return dims;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find(',', pos);
    const std::string piece =
        text.substr(pos, next == std::string::npos ? next : next - pos);
    if (!piece.empty()) parts.push_back(piece);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return parts;
}

// Caps the engine's internal parallelism; CA_FORGE_THREADS is the fallback
// when the flag is absent.
void apply_thread_cap(int flag_value) {
  int cap = flag_value;
  if (cap <= 0) {
    if (const char* env = std::getenv("CA_FORGE_THREADS")) {
      char* end = nullptr;
      const long parsed = std::strtol(env, &end, 10);
      if (end != env && *end == '\0' && parsed > 0) {
        cap = static_cast<int>(parsed);
      } else {
        std::cerr << "warning: ignoring non-numeric CA_FORGE_THREADS=\"" << env
                  << "\"\n";
      }
    }
  }
  if (cap > 0) {
#ifdef _OPENMP
    omp_set_num_threads(cap);
#else
    (void)cap;
#endif
  }
}

void ensure_parent(const fs::path& path) {
  const fs::path dir = path.parent_path();
  if (!dir.empty()) fs::create_directories(dir);
}

// Shortest-ish decimal form of a float, so dumped configs read like the
// values they were set from (0.001, not its double widening).
double printable(float value) {
  char buffer[48];
  std::snprintf(buffer, sizeof buffer, "%.7g", static_cast<double>(value));
  return std::strtod(buffer, nullptr);
}

// ---------------------------------------------------------------------------
// --config expansion: the file's keys mirror long flag names and are injected
// as tokens right after the subcommand, so explicit flags override them.
// ---------------------------------------------------------------------------

std::vector<std::string> config_tokens(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw UsageError("cannot open config file " + file.string());
  }
  json parsed;
  try {
    in >> parsed;
  } catch (const std::exception& e) {
    throw UsageError("malformed config file " + file.string() + ": " +
                     e.what());
  }
  if (!parsed.is_object()) {
    throw UsageError("config file " + file.string() +
                     " must hold a single key/value object");
  }
  std::vector<std::string> tokens;
  for (const auto& [key, value] : parsed.items()) {
    if (value.is_array()) {
      std::string joined;
      for (const auto& element : value) {
        if (!element.is_number()) {
          throw UsageError("config key \"" + key +
                           "\": arrays may hold numbers only");
        }
        if (!joined.empty()) joined += ',';
        joined += element.dump();
      }
      tokens.push_back("--" + key + "=" + joined);
    } else if (value.is_string()) {
      tokens.push_back("--" + key + "=" + value.get<std::string>());
    } else if (value.is_boolean()) {
      tokens.push_back("--" + key + (value.get<bool>() ? "=true" : "=false"));
    } else if (value.is_number()) {
      tokens.push_back("--" + key + "=" + value.dump());
    } else {
      throw UsageError("config key \"" + key +
                       "\" holds an unsupported value type");
    }
  }
  return tokens;
}

std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<fs::path> file;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& arg = args[i];
    std::optional<std::string> value;
    if (arg == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
      value = args[++i];
    } else if (arg.rfind("--config=", 0) == 0) {
      value = arg.substr(std::string("--config=").size());
    }
    if (value) {
      if (file) throw UsageError("--config given more than once");
      file = *value;
    } else {
      rest.push_back(arg);
    }
  }
  if (!file) return rest;
  if (rest.empty() || rest.front().empty() || rest.front()[0] == '-') {
    throw UsageError("--config requires a subcommand before it");
  }
  std::vector<std::string> out;
  out.push_back(rest.front());
  std::vector<std::string> injected = config_tokens(*file);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunOpts {
  std::string model;
  int rule = 110;
  int width = 64;
  std::string dims;
  int steps = 32;
  std::uint64_t seed = 0;
  std::string pattern = "soup";
  float density = 0.35f;
  bool random_init = false;
  bool palette = false;
  std::string render_channels;
  std::string render;
  std::string animate;
  std::string save_state;
  std::string checkpoint;
  int threads = 0;
  bool print_config = false;
};

State random_soup(const LatticeSpec& spec, std::uint64_t seed, float density) {
  State s(spec);
  rng::Stream stream(seed);
  for (float& v : s.values) {
    v = stream.next_uniform(0.0f, 1.0f) < density ? 1.0f : 0.0f;
  }
  return s;
}

State life_initial(const std::vector<int>& dims, const std::string& pattern,
                   std::uint64_t seed, float density) {
  if (dims.size() != 2) {
    throw UsageError("life needs a two-dimensional grid (e.g. --dims 32,32)");
  }
  const LatticeSpec spec(dims, 1, Boundary::Periodic);
  if (pattern == "soup") return random_soup(spec, seed, density);
  if (dims[0] < 4 || dims[1] < 4) {
    throw UsageError("named patterns need at least a 4x4 grid");
  }
  State s = new_state(spec, StateInit::Zeros);
  const int cy = dims[0] / 2;
  const int cx = dims[1] / 2;
  auto set = [&](int y, int x) {
    const std::array<int, 2> coord{y, x};
    s.at(spec.cell_index(coord), 0) = 1.0f;
  };
  if (pattern == "blinker") {
    set(cy, cx - 1);
    set(cy, cx);
    set(cy, cx + 1);
  } else if (pattern == "block") {
    set(cy, cx);
    set(cy, cx + 1);
    set(cy + 1, cx);
    set(cy + 1, cx + 1);
  } else if (pattern == "glider") {
    set(cy - 1, cx);
    set(cy, cx + 1);
    set(cy + 1, cx - 1);
    set(cy + 1, cx);
    set(cy + 1, cx + 1);
  } else {
    throw UsageError("unknown --pattern \"" + pattern +
                     "\" (blinker, block, glider, soup)");
  }
  return s;
}

ChannelMap choose_map(const RunOpts& o, int state_channels) {
  if (o.palette) return ChannelMap::palette();
  if (!o.render_channels.empty()) {
    ChannelMap map;
    map.channels.clear();
    for (int c : parse_dims(o.render_channels)) map.channels.push_back(c);
    return map;
  }
  if (state_channels >= 4) return ChannelMap::rgba();
  return ChannelMap::grayscale(0);
}

int do_run(const RunOpts& o, const CLI::App& sub) {
  apply_thread_cap(o.threads);

  const bool is_neural = o.model.rfind("nca", 0) == 0;
  std::optional<Checkpoint> ckpt;
  if (is_neural) {
    if (o.checkpoint.empty()) {
      throw UsageError("--checkpoint is required to run a neural model");
    }
    ckpt = load_checkpoint(o.checkpoint);
  }

  std::vector<int> dims;
  if (sub.count("--dims") > 0) {
    dims = parse_dims(o.dims);
  } else if (o.model == "eca") {
    dims = {o.width};
  } else if (o.model == "life") {
    dims = {32, 32};
  } else if (o.model == "lenia") {
    dims = lenia_default_spec().dims;
  } else if (ckpt) {
    dims = ckpt->spec.dims;
  }

  CaModel model = CaModel::eca(0);
  State s0(LatticeSpec({1}, 1, Boundary::Periodic));
  if (o.model == "eca") {
    if (dims.size() != 1) throw UsageError("eca runs on one dimension");
    model = CaModel::eca(o.rule);
    const LatticeSpec spec(dims, 1, Boundary::Periodic);
    s0 = o.random_init ? random_soup(spec, o.seed, 0.5f)
                       : new_state(spec, StateInit::SingleSeedCell);
  } else if (o.model == "life") {
    model = CaModel::life(LifeRule::conway());
    s0 = life_initial(dims, o.pattern, o.seed, o.density);
  } else if (o.model == "lenia") {
    model = CaModel::lenia(lenia_default_rule());
    s0 = new_state(LatticeSpec(dims, 1, Boundary::Periodic),
                   StateInit::Uniform01, o.seed);
  } else if (is_neural) {
    const int bank_pch =
        perception_channels(ckpt->bank, ckpt->spec.channels);
    const int input_channels = ckpt->params.perception_channels - bank_pch;
    if (input_channels > 0) {
      throw std::runtime_error(
          "this checkpoint expects per-step input fields, which run cannot "
          "supply");
    }
    model = CaModel::neural(ckpt->params, ckpt->bank, ckpt->spec.boundary);
    const LatticeSpec spec(dims, ckpt->spec.channels, ckpt->spec.boundary);
    const StateInit init = (o.model == "nca-growing" && !o.random_init)
                               ? StateInit::SingleSeedCell
                               : StateInit::Uniform01;
    s0 = new_state(spec, init, o.seed);
  } else {
    throw UsageError("unknown --model \"" + o.model +
                     "\" (eca, life, lenia, nca-growing, nca-diffusing, "
                     "nca-arc1d)");
  }

  if (o.print_config) {
    const json j = {
        {"command", "run"},         {"model", o.model},
        {"rule", o.rule},           {"width", o.width},
        {"dims", dims},             {"steps", o.steps},
        {"seed", o.seed},           {"pattern", o.pattern},
        {"density", printable(o.density)},
        {"random-init", o.random_init},
        {"palette", o.palette},     {"render", o.render},
        {"animate", o.animate},     {"save-state", o.save_state},
        {"checkpoint", o.checkpoint},
        {"threads", o.threads},
    };
    std::cout << j.dump() << "\n";
    return 0;
  }
  if (o.steps < 0) throw UsageError("--steps must be >= 0");

  const bool record_all =
      !o.animate.empty() || (!o.render.empty() && s0.spec.rank() == 1);
  const RolloutRecord rec = rollout(model, s0, {}, o.steps, record_all, o.seed);
  const ChannelMap map = choose_map(o, s0.spec.channels);

  auto full_trajectory = [&] {
    std::vector<State> frames;
    frames.reserve(rec.trajectory.size() + 1);
    frames.push_back(rec.initial_state);
    frames.insert(frames.end(), rec.trajectory.begin(), rec.trajectory.end());
    return frames;
  };

  json artifacts = json::array();
  if (!o.render.empty()) {
    ensure_parent(o.render);
    if (s0.spec.rank() == 1) {
      save_png(o.render, render_spacetime(full_trajectory(), map));
    } else {
      save_png(o.render, render_frame(rec.final_state, map));
    }
    artifacts.push_back(o.render);
  }
  if (!o.animate.empty()) {
    for (const fs::path& frame :
         render_animation(full_trajectory(), map, o.animate)) {
      artifacts.push_back(frame.string());
    }
  }
  if (!o.save_state.empty()) {
    ensure_parent(o.save_state);
    save_state(o.save_state, rec.final_state);
    artifacts.push_back(o.save_state);
  }

  const json summary = {{"model", o.model},
                        {"dims", dims},
                        {"steps", o.steps},
                        {"seed", o.seed},
                        {"cell-updates", rec.cell_updates},
                        {"artifacts", artifacts}};
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string model;
  std::string preset = "full";
  std::string dims;
  int channels = 0;
  int hidden = 0;
  int kernels = 0;
  int batch = 0;
  int steps = 0;
  int min_steps = 0;
  int max_steps = 0;
  int iters = 0;
  int pool = 0;
  int eval_every = 0;
  int alpha_channel = 0;
  double lr = 0.0;
  double fire_rate = 0.0;
  double stop_loss = 0.0;
  double stop_accuracy = 0.0;
  double alive_threshold = 0.0;
  bool alive = false;
  bool no_alive = false;
  std::string boundary;
  std::uint64_t seed = 0;
  std::string target;
  std::string data;
  std::string task = "1d_move_1";
  std::string out_dir = ".";
  std::string checkpoint_out;
  std::string metrics;
  bool eval_only = false;
  std::string checkpoint;
  int threads = 0;
  bool print_config = false;
};

NcaExperimentConfig preset_for(const std::string& model,
                               const std::string& preset) {
  if (preset != "full" && preset != "desk") {
    throw UsageError("--preset must be full or desk");
  }
  const bool desk = preset == "desk";
  if (model == "nca-growing") {
    return desk ? growing_desk_config() : growing_full_config();
  }
  if (model == "nca-diffusing") {
    return desk ? diffusing_desk_config() : diffusing_full_config();
  }
  if (model == "nca-arc1d") {
    return desk ? arc1d_desk_config() : arc1d_full_config();
  }
  throw UsageError("unknown --model \"" + model +
                   "\" (nca-growing, nca-diffusing, nca-arc1d)");
}

NcaExperimentConfig resolve_config(const TrainOpts& o, const CLI::App& sub) {
  NcaExperimentConfig cfg = preset_for(o.model, o.preset);
  if (sub.count("--dims")) cfg.grid = parse_dims(o.dims);
  if (sub.count("--channels")) cfg.channels = o.channels;
  if (sub.count("--hidden")) cfg.hidden = o.hidden;
  if (sub.count("--kernels")) cfg.kernel_count = o.kernels;
  if (sub.count("--batch")) cfg.batch_size = o.batch;
  if (sub.count("--steps")) cfg.num_steps = o.steps;
  if (sub.count("--min-steps")) cfg.min_steps = o.min_steps;
  if (sub.count("--max-steps")) cfg.max_steps = o.max_steps;
  if (sub.count("--iters")) cfg.iterations = o.iters;
  if (sub.count("--pool")) cfg.pool_capacity = o.pool;
  if (sub.count("--eval-every")) cfg.eval_every = o.eval_every;
  if (sub.count("--lr")) cfg.learning_rate = static_cast<float>(o.lr);
  if (sub.count("--fire-rate")) {
    cfg.fire_rate = static_cast<float>(o.fire_rate);
  }
  if (sub.count("--stop-loss")) {
    cfg.stop_loss = static_cast<float>(o.stop_loss);
  }
  if (sub.count("--stop-accuracy")) {
    cfg.stop_accuracy = static_cast<float>(o.stop_accuracy);
  }
  if (sub.count("--alive-threshold")) {
    cfg.alive_threshold = static_cast<float>(o.alive_threshold);
  }
  if (sub.count("--alpha-channel")) cfg.alpha_channel = o.alpha_channel;
  if (o.alive && o.no_alive) {
    throw UsageError("--alive and --no-alive conflict");
  }
  if (o.alive) cfg.alive_masking = true;
  if (o.no_alive) cfg.alive_masking = false;
  if (sub.count("--boundary")) {
    if (o.boundary == "periodic") {
      cfg.boundary = Boundary::Periodic;
    } else if (o.boundary == "zeropad") {
      cfg.boundary = Boundary::ZeroPad;
    } else {
      throw UsageError("--boundary must be periodic or zeropad");
    }
  }
  if (sub.count("--seed")) cfg.seed = o.seed;
  return cfg;
}

std::string resolve_target_name(const TrainOpts& o) {
  if (!o.target.empty()) return o.target;
  return o.model == "nca-growing" ? "disk" : "two-color";
}

// Synthetic names produce a grid-sized target; an image path defines the
// lattice dims itself.
State resolve_target(const TrainOpts& o, NcaExperimentConfig& cfg) {
  const std::string name = resolve_target_name(o);
  if (name == "disk" || name == "two-color") {
    if (cfg.grid.size() != 2 || cfg.grid[0] != cfg.grid[1]) {
      throw UsageError("synthetic targets need a square 2-D grid");
    }
    return name == "disk" ? synthetic_disk_target(cfg.grid[0])
                          : synthetic_two_color_target(cfg.grid[0]);
  }
  State target = load_target_image(name, cfg.boundary);
  cfg.grid = target.spec.dims;
  return target;
}

Arc1dTask pick_task(const TrainOpts& o) {
  if (o.data.empty()) {
    throw UsageError(
        "train --model nca-arc1d needs --data <directory> pointing at task "
        "files (gen-arc1d writes a compatible dataset)");
  }
  const std::vector<Arc1dTask> tasks = load_arc1d(o.data);
  for (const Arc1dTask& task : tasks) {
    if (task.name == o.task) return task;
  }
  std::string names;
  for (const Arc1dTask& task : tasks) {
    if (names.find(task.name) != std::string::npos) continue;
    if (!names.empty()) names += ", ";
    names += task.name;
  }
  throw std::runtime_error("no task named \"" + o.task + "\" under " + o.data +
                           (names.empty() ? " (directory holds no tasks)"
                                          : " (available: " + names + ")"));
}

json train_config_json(const TrainOpts& o, const NcaExperimentConfig& cfg,
                       const fs::path& ckpt_out, const fs::path& metrics) {
  return json{
      {"command", "train"},
      {"model", o.model},
      {"preset", o.preset},
      {"dims", cfg.grid},
      {"channels", cfg.channels},
      {"hidden", cfg.hidden},
      {"kernels", cfg.kernel_count},
      {"fire-rate", printable(cfg.fire_rate)},
      {"alive", cfg.alive_masking},
      {"alive-threshold", printable(cfg.alive_threshold)},
      {"alpha-channel", cfg.alpha_channel},
      {"boundary",
       cfg.boundary == Boundary::Periodic ? "periodic" : "zeropad"},
      {"batch", cfg.batch_size},
      {"steps", cfg.num_steps},
      {"min-steps", cfg.min_steps},
      {"max-steps", cfg.max_steps},
      {"lr", printable(cfg.learning_rate)},
      {"iters", cfg.iterations},
      {"pool", cfg.pool_capacity},
      {"seed", cfg.seed},
      {"eval-every", cfg.eval_every},
      {"stop-loss", printable(cfg.stop_loss)},
      {"stop-accuracy", printable(cfg.stop_accuracy)},
      {"target", resolve_target_name(o)},
      {"task", o.task},
      {"data", o.data},
      {"checkpoint-out", ckpt_out.string()},
      {"metrics", metrics.string()},
  };
}

void write_loss_curve(MetricsWriter& writer, const std::vector<float>& curve) {
  for (std::size_t i = 0; i < curve.size(); ++i) {
    writer.append({static_cast<std::int64_t>(i + 1), curve[i], 0.0, 0.0,
                   "train_loss"});
  }
}

void write_eval_points(MetricsWriter& writer,
                       const std::vector<EvalPoint>& points,
                       const std::string& tag) {
  std::int64_t last = -1;
  for (const EvalPoint& p : points) {
    if (p.iteration <= last) continue;
    writer.append({p.iteration, p.value, 0.0, 0.0, tag});
    last = p.iteration;
  }
}

int do_train(const TrainOpts& o, const CLI::App& sub) {
  apply_thread_cap(o.threads);
  NcaExperimentConfig cfg = resolve_config(o, sub);

  const fs::path out_dir = o.out_dir;
  const fs::path ckpt_out = o.checkpoint_out.empty()
                                ? out_dir / (o.model + ".ckpt")
                                : fs::path(o.checkpoint_out);
  const fs::path metrics_path = o.metrics.empty()
                                    ? out_dir / (o.model + "-metrics.jsonl")
                                    : fs::path(o.metrics);

  if (o.print_config) {
    std::cout << train_config_json(o, cfg, ckpt_out, metrics_path).dump()
              << "\n";
    return 0;
  }

  if (o.eval_only) {
    if (o.checkpoint.empty()) {
      throw UsageError("--eval-only needs --checkpoint <file>");
    }
    const Checkpoint ckpt = load_checkpoint(o.checkpoint);
    const CaModel model =
        CaModel::neural(ckpt.params, ckpt.bank, ckpt.spec.boundary);
    json out = {{"model", o.model}, {"checkpoint", o.checkpoint}};
    if (o.model == "nca-arc1d") {
      const Arc1dTask task = pick_task(o);
      const float acc =
          arc1d_accuracy(model, task.test_pairs, cfg.num_steps, cfg.seed);
      out["task"] = task.name;
      out["test-accuracy"] = acc;
    } else {
      cfg.grid = ckpt.spec.dims;
      const State target = resolve_target(o, cfg);
      const StateInit init = o.model == "nca-growing"
                                 ? StateInit::SingleSeedCell
                                 : StateInit::Uniform01;
      const State s0 = new_state(ckpt.spec, init, cfg.seed);
      const int steps =
          o.model == "nca-growing" ? cfg.max_steps : cfg.num_steps;
      const RolloutRecord rec = rollout(model, s0, {}, steps, false, cfg.seed);
      out["mse"] = loss_mse_rgba(rec.final_state, target).value;
    }
    std::cout << out.dump() << "\n";
    return 0;
  }

  ensure_parent(ckpt_out);
  ensure_parent(metrics_path);
  MetricsWriter metrics(metrics_path);

  const auto t0 = std::chrono::steady_clock::now();
  json summary = {{"model", o.model},
                  {"checkpoint", ckpt_out.string()},
                  {"metrics", metrics_path.string()}};
  NcaParams trained;
  LatticeSpec ckpt_spec({1}, 1, cfg.boundary);
  std::int64_t steps_per_iter = 0;

  if (o.model == "nca-arc1d") {
    const Arc1dTask task = pick_task(o);
    const Arc1dResult result = train_arc1d(task, cfg);
    write_loss_curve(metrics, result.loss_curve);
    write_eval_points(metrics, result.accuracy, "test_accuracy");
    trained = result.params;
    ckpt_spec = LatticeSpec({task.width}, cfg.channels, cfg.boundary);
    steps_per_iter = static_cast<std::int64_t>(cfg.batch_size) * task.width *
                     cfg.num_steps;
    summary["task"] = task.name;
    summary["iterations"] = result.iterations_run;
    summary["test-accuracy"] = result.test_accuracy;
    summary["reached-target"] = result.reached_target;
  } else {
    const State target = resolve_target(o, cfg);
    const TrainResult result = o.model == "nca-growing"
                                   ? train_growing(target, cfg)
                                   : train_diffusing(target, cfg);
    write_loss_curve(metrics, result.loss_curve);
    write_eval_points(metrics, result.evals, "eval_mse");
    trained = result.params;
    ckpt_spec = LatticeSpec(cfg.grid, cfg.channels, cfg.boundary);
    std::int64_t cells = 1;
    for (int d : cfg.grid) cells *= d;
    const int steps = o.model == "nca-growing"
                          ? (cfg.min_steps + cfg.max_steps) / 2
                          : cfg.num_steps;
    steps_per_iter = static_cast<std::int64_t>(cfg.batch_size) * cells * steps;
    summary["iterations"] = result.iterations_run;
    summary["final-eval-mse"] = result.final_eval;
    summary["reached-target"] = result.reached_target;
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  const std::int64_t iters = summary["iterations"].get<std::int64_t>();
  const double rate =
      wall > 0.0 ? static_cast<double>(steps_per_iter * iters) / wall : 0.0;
  double final_metric = summary.contains("test-accuracy")
                            ? summary["test-accuracy"].get<double>()
                            : summary["final-eval-mse"].get<double>();
  if (!std::isfinite(final_metric)) {  // evaluation disabled
    final_metric = 0.0;
    summary.erase("final-eval-mse");
  }
  metrics.append({iters, final_metric, wall, rate, "summary"});

  const Checkpoint ckpt{
      ckpt_spec,
      identity_sobel_bank(static_cast<int>(ckpt_spec.dims.size()),
                          cfg.kernel_count),
      trained, std::nullopt, cfg.seed};
  save_checkpoint(ckpt_out, ckpt);

  summary["wall-seconds"] = wall;
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOpts {
  std::string workload = "all";
  std::string dims;
  int steps = 0;
  int reps = 5;
  double tolerance = 0.0;
  std::string out;
  int threads = 0;
  bool print_config = false;
};

int do_bench(const BenchOpts& o, const CLI::App& sub) {
  apply_thread_cap(o.threads);
  const std::vector<std::string> names =
      o.workload == "all"
          ? std::vector<std::string>{"eca", "life", "lenia", "nca-forward"}
          : std::vector<std::string>{o.workload};
  const std::vector<int> dims = o.dims.empty() ? std::vector<int>{}
                                               : parse_dims(o.dims);
  if (o.print_config) {
    const json j = {{"command", "bench"}, {"workload", o.workload},
                    {"dims", dims},       {"steps", o.steps},
                    {"reps", o.reps},     {"out", o.out},
                    {"threads", o.threads}};
    std::cout << j.dump() << "\n";
    return 0;
  }
  if (o.reps < 1) throw UsageError("--reps must be >= 1");

  std::ofstream out_file;
  if (!o.out.empty()) {
    ensure_parent(o.out);
    out_file.open(o.out, std::ios::app);
    if (!out_file) {
      throw std::runtime_error("cannot open " + o.out + " for appending");
    }
  }

  for (const std::string& name : names) {
    BenchWorkload workload = [&] {
      try {
        return make_bench_workload(name, dims, o.steps);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }();
    if (sub.count("--tolerance")) {
      workload.tolerance = static_cast<float>(o.tolerance);
    }
    const BenchReport report = run_benchmark(workload, o.reps);
    const std::string line = bench_report_json(report);
    std::cout << line << "\n";
    if (out_file.is_open()) {
      out_file << line << "\n";
      out_file.flush();
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gen-arc1d
// ---------------------------------------------------------------------------

struct GenOpts {
  std::string out;
  std::string families = "1d_move_1,1d_move_3,1d_denoise";
  int count = 3;
  int width = 24;
  int train = 5;
  int test = 3;
  std::uint64_t seed = 7;
};

Arc1dFamily family_from(const std::string& name) {
  if (name == "1d_move_1") return Arc1dFamily::MoveRight1;
  if (name == "1d_move_3") return Arc1dFamily::MoveRight3;
  if (name == "1d_denoise") return Arc1dFamily::Denoise;
  throw UsageError("unknown task family \"" + name +
                   "\" (1d_move_1, 1d_move_3, 1d_denoise)");
}

json pair_json(const Arc1dPair& pair) {
  return json{{"input", json::array({pair.input})},
              {"output", json::array({pair.output})}};
}

int do_gen_arc1d(const GenOpts& o) {
  if (o.count < 1 || o.width < 12 || o.train < 1 || o.test < 1) {
    throw UsageError("gen-arc1d needs positive --count/--train/--test and "
                     "--width >= 12");
  }
  const std::vector<std::string> families = split_csv(o.families);
  if (families.empty()) throw UsageError("--families is empty");
  fs::create_directories(o.out);

  int written = 0;
  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    const Arc1dFamily family = family_from(families[fi]);
    for (int i = 0; i < o.count; ++i) {
      const Arc1dTask task = generate_arc1d_task(
          family, o.width, o.train, o.test,
          rng::derive(rng::derive(o.seed, fi), static_cast<std::uint64_t>(i)));
      json j;
      j["train"] = json::array();
      for (const Arc1dPair& p : task.train_pairs) {
        j["train"].push_back(pair_json(p));
      }
      j["test"] = json::array();
      for (const Arc1dPair& p : task.test_pairs) {
        j["test"].push_back(pair_json(p));
      }
      const fs::path file =
          fs::path(o.out) / (families[fi] + "_" + std::to_string(i) + ".json");
      std::ofstream stream(file, std::ios::trunc);
      if (!stream) {
        throw std::runtime_error("cannot write " + file.string());
      }
      stream << j.dump(2) << "\n";
      ++written;
    }
  }
  std::cout << "wrote " << written << " task files to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

void add_common(CLI::App* sub, int& threads, bool& print_config) {
  sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  sub->add_option("--threads", threads,
                  "cap engine parallelism (env CA_FORGE_THREADS as fallback)");
  sub->add_flag("--print-config", print_config,
                "print the resolved configuration as JSON and exit");
  sub->add_option("--config",
                  "JSON file of defaults; keys mirror long flag names")
      ->type_name("FILE");
}

int dispatch(std::vector<std::string> args) {
  CLI::App app{
      "cellular-automata engine: classic rules, trainable neural rules, "
      "renderers, and a self-validating benchmark"};
  app.name("caforge");
  app.require_subcommand(1);

  RunOpts run_opts;
  CLI::App* run = app.add_subcommand(
      "run", "Roll out a model and write images / state dumps");
  add_common(run, run_opts.threads, run_opts.print_config);
  run->add_option("--model", run_opts.model,
                  "eca | life | lenia | nca-growing | nca-diffusing | "
                  "nca-arc1d")
      ->required();
  run->add_option("--rule", run_opts.rule, "elementary rule number (0..255)");
  run->add_option("--width", run_opts.width, "1-D lattice width");
  run->add_option("--dims", run_opts.dims, "lattice dims, e.g. 64 or 72,72");
  run->add_option("--steps", run_opts.steps, "number of update steps");
  run->add_option("--seed", run_opts.seed, "rng seed");
  run->add_option("--pattern", run_opts.pattern,
                  "life start: blinker | block | glider | soup");
  run->add_option("--density", run_opts.density, "soup fill density");
  run->add_flag("--random-init", run_opts.random_init,
                "start from random state instead of the model default");
  run->add_flag("--palette", run_opts.palette,
                "render with the 10-color argmax palette");
  run->add_option("--render-channels", run_opts.render_channels,
                  "state channels mapped to RGBA, e.g. 0,1,2,3");
  run->add_option("--render", run_opts.render,
                  "PNG path (1-D: space-time diagram; 2-D: final frame)");
  run->add_option("--animate", run_opts.animate,
                  "PNG sequence prefix, one frame per state");
  run->add_option("--save-state", run_opts.save_state,
                  "binary dump of the final state");
  run->add_option("--checkpoint", run_opts.checkpoint,
                  "trained model checkpoint (required for nca-* models)");

  TrainOpts train_opts;
  CLI::App* train = app.add_subcommand(
      "train", "Train or evaluate a neural CA experiment");
  add_common(train, train_opts.threads, train_opts.print_config);
  train
      ->add_option("--model", train_opts.model,
                   "nca-growing | nca-diffusing | nca-arc1d")
      ->required();
  train->add_option("--preset", train_opts.preset,
                    "full (published scale) | desk (small, single-core)");
  train->add_option("--dims", train_opts.dims, "training lattice dims");
  train->add_option("--channels", train_opts.channels, "state channels");
  train->add_option("--hidden", train_opts.hidden, "hidden layer width");
  train->add_option("--kernels", train_opts.kernels, "perception kernels");
  train->add_option("--batch", train_opts.batch, "batch size");
  train->add_option("--steps", train_opts.steps, "rollout steps per sample");
  train->add_option("--min-steps", train_opts.min_steps,
                    "shortest growing rollout");
  train->add_option("--max-steps", train_opts.max_steps,
                    "longest growing rollout");
  train->add_option("--iters", train_opts.iters, "training iterations");
  train->add_option("--pool", train_opts.pool, "sample pool capacity");
  train->add_option("--eval-every", train_opts.eval_every,
                    "iterations between evaluations (0 disables)");
  train->add_option("--lr", train_opts.lr, "Adam learning rate");
  train->add_option("--fire-rate", train_opts.fire_rate,
                    "per-cell update probability");
  train->add_option("--stop-loss", train_opts.stop_loss,
                    "early-stop once eval MSE drops below this");
  train->add_option("--stop-accuracy", train_opts.stop_accuracy,
                    "early-stop once test accuracy reaches this");
  train->add_option("--alive-threshold", train_opts.alive_threshold,
                    "alpha threshold for alive masking");
  train->add_option("--alpha-channel", train_opts.alpha_channel,
                    "channel treated as alpha");
  train->add_flag("--alive", train_opts.alive, "enable alive masking");
  train->add_flag("--no-alive", train_opts.no_alive, "disable alive masking");
  train->add_option("--boundary", train_opts.boundary, "periodic | zeropad");
  train->add_option("--seed", train_opts.seed, "experiment seed");
  train->add_option("--target", train_opts.target,
                    "disk | two-color | path to an RGBA PNG target");
  train->add_option("--data", train_opts.data,
                    "directory of 1-D task files (nca-arc1d)");
  train->add_option("--task", train_opts.task, "task family name to train on");
  train->add_option("--out-dir", train_opts.out_dir,
                    "directory for default artifact paths");
  train->add_option("--checkpoint-out", train_opts.checkpoint_out,
                    "checkpoint output path");
  train->add_option("--metrics", train_opts.metrics,
                    "metrics JSONL output path");
  train->add_flag("--eval-only", train_opts.eval_only,
                  "evaluate --checkpoint instead of training");
  train->add_option("--checkpoint", train_opts.checkpoint,
                    "checkpoint to evaluate with --eval-only");

  BenchOpts bench_opts;
  CLI::App* bench = app.add_subcommand(
      "bench", "Time the engine against the naive reference");
  add_common(bench, bench_opts.threads, bench_opts.print_config);
  bench->add_option("--workload", bench_opts.workload,
                    "eca | life | lenia | nca-forward | all");
  bench->add_option("--dims", bench_opts.dims, "override workload dims");
  bench->add_option("--steps", bench_opts.steps, "override workload steps");
  bench->add_option("--reps", bench_opts.reps, "timed repetitions (median)");
  bench->add_option("--tolerance", bench_opts.tolerance,
                    "override the equivalence tolerance (0 = bit-exact)");
  bench->add_option("--out", bench_opts.out, "append report lines here");

  GenOpts gen_opts;
  CLI::App* gen = app.add_subcommand(
      "gen-arc1d", "Generate a directory of 1-D row-task files");
  gen->option_defaults()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);
  gen->add_option("--out", gen_opts.out, "output directory")->required();
  gen->add_option("--families", gen_opts.families,
                  "comma-separated families to generate");
  gen->add_option("--count", gen_opts.count, "instances per family");
  gen->add_option("--width", gen_opts.width, "row width");
  gen->add_option("--train", gen_opts.train, "train pairs per instance");
  gen->add_option("--test", gen_opts.test, "test pairs per instance");
  gen->add_option("--seed", gen_opts.seed, "generator seed");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help / --version
      std::cout << app.help();
      return 0;
    }
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  if (run->parsed()) return do_run(run_opts, *run);
  if (train->parsed()) return do_train(train_opts, *train);
  if (bench->parsed()) return do_bench(bench_opts, *bench);
  if (gen->parsed()) return do_gen_arc1d(gen_opts);
  return 1;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  try {
    return dispatch(expand_config(std::move(args)));
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const EquivalenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace caforge::cli
