#include "caforge/training.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "caforge/rng.hpp"

namespace caforge {

namespace {

using MatrixRf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapRf = Eigen::Map<const MatrixRf>;
using MapRf = Eigen::Map<MatrixRf>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXf>;

// Sub-stream tags so every random choice in a training run hangs off the one
// master seed without collisions.
constexpr std::uint64_t kTagParams = 1;
constexpr std::uint64_t kTagPoolSample = 2;
constexpr std::uint64_t kTagStepCount = 3;
constexpr std::uint64_t kTagRollout = 4;
constexpr std::uint64_t kTagEval = 5;
constexpr std::uint64_t kTagNoise = 6;
constexpr std::uint64_t kTagPairPick = 7;
constexpr std::uint64_t kTagFinalEval = 8;

}  // namespace

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

LossValue loss_mse_rgba(const State& prediction, const State& target) {
  const LatticeSpec& ps = prediction.spec;
  const LatticeSpec& ts = target.spec;
  if (ts.dims != ps.dims) {
    throw std::invalid_argument("mse loss: target spatial dims differ");
  }
  if (ts.channels <= 0 || ts.channels > ps.channels) {
    throw std::invalid_argument(
        "mse loss: target channels must be in [1, state channels]");
  }
  const std::int64_t cells = ps.cell_count();
  const int pc = ps.channels;
  const int tc = ts.channels;
  const double n = static_cast<double>(cells) * tc;

  LossValue out;
  out.grad.assign(prediction.values.size(), 0.0f);
  double sum = 0.0;
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    for (int c = 0; c < tc; ++c) {
      const double diff =
          static_cast<double>(prediction.values[cell * pc + c]) -
          static_cast<double>(target.values[cell * tc + c]);
      sum += diff * diff;
      out.grad[cell * pc + c] = static_cast<float>(2.0 * diff / n);
    }
  }
  out.value = static_cast<float>(sum / n);
  return out;
}

LossValue loss_pixel_ce(const State& prediction,
                        std::span<const int> target_colors) {
  const LatticeSpec& spec = prediction.spec;
  if (spec.rank() != 1) {
    throw std::invalid_argument("pixel ce loss: state must be 1-D");
  }
  if (spec.channels < kColorCount) {
    throw std::invalid_argument(
        "pixel ce loss: state needs at least ten logit channels");
  }
  const std::int64_t cells = spec.cell_count();
  if (static_cast<std::int64_t>(target_colors.size()) != cells) {
    throw std::invalid_argument(
        "pixel ce loss: one target color per cell required");
  }
  const int pc = spec.channels;

  LossValue out;
  out.grad.assign(prediction.values.size(), 0.0f);
  double sum = 0.0;
  for (std::int64_t cell = 0; cell < cells; ++cell) {
    const int y = target_colors[cell];
    if (y < 0 || y >= kColorCount) {
      throw std::invalid_argument("pixel ce loss: color outside 0..9");
    }
    const float* logits = prediction.values.data() + cell * pc;
    double mx = logits[0];
    for (int k = 1; k < kColorCount; ++k) {
      mx = std::max(mx, static_cast<double>(logits[k]));
    }
    double denom = 0.0;
    for (int k = 0; k < kColorCount; ++k) {
      denom += std::exp(static_cast<double>(logits[k]) - mx);
    }
    sum += std::log(denom) - (static_cast<double>(logits[y]) - mx);
    for (int k = 0; k < kColorCount; ++k) {
      const double p = std::exp(static_cast<double>(logits[k]) - mx) / denom;
      out.grad[cell * pc + k] =
          static_cast<float>((p - (k == y ? 1.0 : 0.0)) / cells);
    }
  }
  out.value = static_cast<float>(sum / cells);
  return out;
}

// ---------------------------------------------------------------------------
// Gradient buffers
// ---------------------------------------------------------------------------

NcaGrads NcaGrads::zeros_like(const NcaParams& params) {
  NcaGrads g;
  g.w1.assign(params.w1.size(), 0.0f);
  g.b1.assign(params.b1.size(), 0.0f);
  g.w2.assign(params.w2.size(), 0.0f);
  g.b2.assign(params.b2.size(), 0.0f);
  return g;
}

std::vector<std::vector<float>*> NcaGrads::tensors() {
  return {&w1, &b1, &w2, &b2};
}

std::vector<const std::vector<float>*> NcaGrads::tensors() const {
  return {&w1, &b1, &w2, &b2};
}

void NcaGrads::accumulate(const NcaGrads& other) {
  auto dst = tensors();
  auto src = other.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t) {
    if (dst[t]->size() != src[t]->size()) {
      throw std::invalid_argument("gradient accumulate: shape mismatch");
    }
    float* d = dst[t]->data();
    const float* s = src[t]->data();
    for (std::size_t i = 0; i < dst[t]->size(); ++i) d[i] += s[i];
  }
}

void NcaGrads::scale(float factor) {
  for (auto* t : tensors()) {
    for (float& v : *t) v *= factor;
  }
}

double NcaGrads::global_l2_norm() const {
  double sum = 0.0;
  for (const auto* t : tensors()) {
    for (float v : *t) sum += static_cast<double>(v) * v;
  }
  return std::sqrt(sum);
}

bool NcaGrads::all_finite() const {
  for (const auto* t : tensors()) {
    for (float v : *t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Backpropagation through time
// ---------------------------------------------------------------------------

namespace {

// Kernel flipped along every axis: the state adjoint of a correlation is the
// correlation with this kernel. Odd extents keep offsets symmetric, so a
// full flip is a plain reversal of the row-major value array.
Kernel flip_kernel(const Kernel& k) {
  Kernel out = k;
  std::reverse(out.values.begin(), out.values.end());
  return out;
}

}  // namespace

BackpropResult backprop_rollout(const CaModel& model,
                                const RolloutRecord& record,
                                std::span<const float> final_state_grad,
                                std::span<const InputField> inputs) {
  if (!model.is_neural()) {
    throw std::invalid_argument(
        "backward: only neural models have trainable parameters");
  }
  const NcaParams& p = model.nca();
  const LatticeSpec& spec = record.initial_state.spec;
  model.validate_for(spec);

  const std::size_t steps = record.step_seeds.size();
  if (record.trajectory.size() != steps) {
    throw std::invalid_argument(
        "backward: rollout must be recorded with its full trajectory");
  }
  if (final_state_grad.size() != record.final_state.values.size()) {
    throw std::invalid_argument("backward: loss gradient size mismatch");
  }
  if (model.input_channels > 0) {
    if (inputs.size() != steps) {
      throw std::invalid_argument(
          "backward: one input field per recorded step required");
    }
  } else if (!inputs.empty()) {
    throw std::invalid_argument(
        "backward: inputs given to a model that declares none");
  }
  if (model.mask &&
      static_cast<std::int64_t>(model.mask->updatable.size()) !=
          spec.cell_count()) {
    throw std::invalid_argument("backward: cell mask size mismatch");
  }

  const std::int64_t cells = spec.cell_count();
  const int ch = spec.channels;
  const int pch = p.perception_channels;
  const int hidden = p.hidden;
  const int kcount = static_cast<int>(model.bank.kernels.size());
  const int bank_pch = perception_channels(model.bank, ch);

  Tape tape;
  tape.record = &record;
  tape.step_seeds = record.step_seeds;
  tape.grads = NcaGrads::zeros_like(p);

  BackpropResult result;
  result.param_grads = NcaGrads::zeros_like(p);
  result.state0_grad.assign(final_state_grad.begin(), final_state_grad.end());
  if (steps == 0) {
    return result;
  }

  if (model.bank.mode != KernelMode::DepthwisePerChannel) {
    throw std::invalid_argument(
        "backward: gradients support per-channel kernel banks only");
  }

  // Perception replay caches: same path the forward pass used, plus one
  // flipped-kernel cache per bank kernel for the state adjoint.
  const bool use_fft = neural_perceive_uses_fft(model);
  std::optional<FftConvCache> fft_fwd;
  std::optional<DirectConvCache> direct_fwd;
  if (use_fft) {
    fft_fwd.emplace(model.bank, spec.dims);
  } else {
    direct_fwd.emplace(model.bank, spec.dims, model.boundary);
  }
  std::vector<DirectConvCache> adjoint_caches;
  adjoint_caches.reserve(kcount);
  for (int j = 0; j < kcount; ++j) {
    KernelBank one;
    one.kernels = {flip_kernel(model.bank.kernels[j])};
    one.mode = KernelMode::DepthwisePerChannel;
    adjoint_caches.emplace_back(one, spec.dims, model.boundary);
  }

  // Parameter maps and accumulators.
  ConstMapRf W1(p.w1.data(), pch, hidden);
  ConstMapRf W2(p.w2.data(), hidden, ch);
  MatrixRf gW1 = MatrixRf::Zero(pch, hidden);
  MatrixRf gW2 = MatrixRf::Zero(hidden, ch);
  Eigen::RowVectorXf gb1 = Eigen::RowVectorXf::Zero(hidden);
  Eigen::RowVectorXf gb2 = Eigen::RowVectorXf::Zero(ch);

  // Reused per-step buffers.
  MatrixRf P(cells, pch), H(cells, hidden), D(cells, ch);
  MatrixRf dDelta(cells, ch), dZ1(cells, hidden), dP(cells, pch);
  std::vector<float> d_cur(final_state_grad.begin(), final_state_grad.end());
  std::vector<float> d_prev(d_cur.size());
  std::vector<float> resp(static_cast<std::size_t>(cells) * ch);
  State o_raw(spec);
  State dp_state(spec);
  DropoutMask mask;
  std::vector<std::uint8_t> alive_pre, alive_post;

  for (std::int64_t t = static_cast<std::int64_t>(steps) - 1; t >= 0; --t) {
    const State& s_pre =
        (t == 0) ? record.initial_state : record.trajectory[t - 1];

    // --- recompute the forward quantities of step t ---
    if (use_fft) {
      fft_fwd->apply(s_pre, P.data(), pch);
    } else {
      direct_fwd->apply(s_pre, P.data(), pch);
    }
    if (model.input_channels > 0) {
      const int ic = model.input_channels;
      const float* iv = inputs[t].values.data();
      if (static_cast<std::int64_t>(inputs[t].values.size()) !=
          cells * static_cast<std::int64_t>(ic)) {
        throw std::invalid_argument("backward: input field size mismatch");
      }
      for (std::int64_t cell = 0; cell < cells; ++cell) {
        std::memcpy(P.data() + cell * pch + bank_pch, iv + cell * ic,
                    sizeof(float) * ic);
      }
    }
    H.noalias() = P * W1;
    H.rowwise() += ConstRowMap(p.b1.data(), hidden);
    H = H.cwiseMax(0.0f);
    fill_dropout_mask(mask, cells, p.fire_rate, record.step_seeds[t]);

    if (p.alive_masking) {
      D.noalias() = H * W2;
      D.rowwise() += ConstRowMap(p.b2.data(), ch);
      const float* s = s_pre.values.data();
      float* o = o_raw.values.data();
      for (std::int64_t cell = 0; cell < cells; ++cell) {
        const float* sr = s + cell * ch;
        float* orow = o + cell * ch;
        if (mask.fire[cell]) {
          const float* dr = D.data() + cell * ch;
          for (int c = 0; c < ch; ++c) {
            orow[c] = p.residual ? sr[c] + dr[c] : dr[c];
          }
        } else {
          std::memcpy(orow, sr, sizeof(float) * ch);
        }
      }
      compute_alive(s_pre, p.alpha_channel, p.alive_threshold, alive_pre);
      compute_alive(o_raw, p.alpha_channel, p.alive_threshold, alive_post);
    }

    // --- adjoint sweep for step t ---
    std::fill(d_prev.begin(), d_prev.end(), 0.0f);

    // Cells outside the update mask kept their previous state: their
    // adjoint bypasses the step entirely.
    if (model.mask) {
      const std::uint8_t* up = model.mask->updatable.data();
      for (std::int64_t cell = 0; cell < cells; ++cell) {
        if (!up[cell]) {
          for (int c = 0; c < ch; ++c) {
            d_prev[cell * ch + c] += d_cur[cell * ch + c];
            d_cur[cell * ch + c] = 0.0f;
          }
        }
      }
    }

    // Alive gate: cells zeroed in the forward pass pass no gradient.
    if (p.alive_masking) {
      for (std::int64_t cell = 0; cell < cells; ++cell) {
        if (!(alive_pre[cell] && alive_post[cell])) {
          std::fill_n(d_cur.data() + cell * ch, ch, 0.0f);
        }
      }
    }

    // Dropout/residual: firing cells feed the network delta; the previous
    // state passes through for every cell under the residual update and for
    // silent cells otherwise.
    for (std::int64_t cell = 0; cell < cells; ++cell) {
      const float* d = d_cur.data() + cell * ch;
      float* dd = dDelta.data() + cell * ch;
      float* dp = d_prev.data() + cell * ch;
      if (mask.fire[cell]) {
        std::memcpy(dd, d, sizeof(float) * ch);
        if (p.residual) {
          for (int c = 0; c < ch; ++c) dp[c] += d[c];
        }
      } else {
        std::fill_n(dd, ch, 0.0f);
        for (int c = 0; c < ch; ++c) dp[c] += d[c];
      }
    }

    // Dense layers: transpose products, relu gated by the forward sign.
    gb2 += dDelta.colwise().sum();
    gW2.noalias() += H.transpose() * dDelta;
    dZ1.noalias() = dDelta * W2.transpose();
    dZ1.array() *= (H.array() > 0.0f).cast<float>();
    gb1 += dZ1.colwise().sum();
    gW1.noalias() += P.transpose() * dZ1;
    dP.noalias() = dZ1 * W1.transpose();

    // Depthwise convolution adjoint: correlate each kernel's perception
    // adjoint with the flipped kernel and fold into the state adjoint.
    // Input columns of dP carry no state gradient.
    for (int j = 0; j < kcount; ++j) {
      float* dpv = dp_state.values.data();
      for (std::int64_t cell = 0; cell < cells; ++cell) {
        for (int c = 0; c < ch; ++c) {
          dpv[cell * ch + c] = dP(cell, c * kcount + j);
        }
      }
      adjoint_caches[j].apply(dp_state, resp.data(), ch);
      for (std::size_t i = 0; i < resp.size(); ++i) d_prev[i] += resp[i];
    }

    std::swap(d_cur, d_prev);
  }

  std::memcpy(tape.grads.w1.data(), gW1.data(), sizeof(float) * gW1.size());
  std::memcpy(tape.grads.b1.data(), gb1.data(), sizeof(float) * gb1.size());
  std::memcpy(tape.grads.w2.data(), gW2.data(), sizeof(float) * gW2.size());
  std::memcpy(tape.grads.b2.data(), gb2.data(), sizeof(float) * gb2.size());

  result.param_grads = std::move(tape.grads);
  result.state0_grad = std::move(d_cur);
  return result;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState AdamState::for_params(const NcaParams& params, float learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m = NcaGrads::zeros_like(params);
  s.v = NcaGrads::zeros_like(params);
  return s;
}

void adam_step(NcaParams& params, const NcaGrads& grads, AdamState& opt,
               bool normalize_grads) {
  auto pt = params.tensors();
  auto gt = grads.tensors();
  auto mt = opt.m.tensors();
  auto vt = opt.v.tensors();
  for (std::size_t t = 0; t < pt.size(); ++t) {
    if (gt[t]->size() != pt[t]->size() || mt[t]->size() != pt[t]->size() ||
        vt[t]->size() != pt[t]->size()) {
      throw std::invalid_argument(
          "adam: gradient/moment shapes do not match the parameters");
    }
  }
  if (!grads.all_finite()) {
    throw std::invalid_argument("adam: non-finite gradient");
  }

  double scale = 1.0;
  if (normalize_grads) {
    const double norm = grads.global_l2_norm();
    if (norm >= 1e-8) scale = 1.0 / norm;
  }

  opt.step_count += 1;
  const double b1 = opt.beta1;
  const double b2 = opt.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(opt.step_count));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(opt.step_count));
  const double lr = opt.learning_rate;
  const double eps = opt.epsilon;

  for (std::size_t t = 0; t < pt.size(); ++t) {
    float* pv = pt[t]->data();
    const float* gv = gt[t]->data();
    float* mv = mt[t]->data();
    float* vv = vt[t]->data();
    const std::size_t n = pt[t]->size();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = static_cast<double>(gv[i]) * scale;
      const double m = b1 * mv[i] + (1.0 - b1) * g;
      const double v = b2 * vv[i] + (1.0 - b2) * g * g;
      mv[i] = static_cast<float>(m);
      vv[i] = static_cast<float>(v);
      const double mhat = m / bias1;
      const double vhat = v / bias2;
      pv[i] = static_cast<float>(pv[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Sample pool
// ---------------------------------------------------------------------------

namespace {
std::atomic<std::int64_t> g_pool_constructions{0};
}  // namespace

SamplePool::SamplePool(int capacity, const State& initial_entry) {
  if (capacity <= 0) {
    throw std::invalid_argument("sample pool: capacity must be positive");
  }
  initial_entry.spec.validate();
  entries_.assign(static_cast<std::size_t>(capacity), initial_entry);
  g_pool_constructions.fetch_add(1, std::memory_order_relaxed);
}

const State& SamplePool::entry(int index) const {
  if (index < 0 || index >= size()) {
    throw std::invalid_argument("sample pool: entry index out of range");
  }
  return entries_[static_cast<std::size_t>(index)];
}

void SamplePool::set_entry(int index, const State& state) {
  if (index < 0 || index >= size()) {
    throw std::invalid_argument("sample pool: entry index out of range");
  }
  if (!state.spec.same_shape(entries_[0].spec)) {
    throw std::invalid_argument(
        "sample pool: writeback state shape does not match the pool");
  }
  entries_[static_cast<std::size_t>(index)] = state;
}

std::int64_t SamplePool::constructed_count() {
  return g_pool_constructions.load(std::memory_order_relaxed);
}

PoolSample pool_sample(const SamplePool& pool, int batch, std::uint64_t seed) {
  if (batch <= 0) {
    throw std::invalid_argument("pool sample: batch must be positive");
  }
  if (batch > pool.size()) {
    throw std::invalid_argument("pool sample: batch exceeds pool size");
  }
  std::vector<int> idx(static_cast<std::size_t>(pool.size()));
  std::iota(idx.begin(), idx.end(), 0);
  rng::Stream stream(seed);
  PoolSample out;
  out.indices.reserve(batch);
  out.states.reserve(batch);
  // Partial Fisher-Yates: the first `batch` slots end up a uniform draw
  // without replacement.
  for (int i = 0; i < batch; ++i) {
    const std::uint64_t span = static_cast<std::uint64_t>(pool.size() - i);
    const int j = i + static_cast<int>(stream.next_below(span));
    std::swap(idx[i], idx[j]);
    out.indices.push_back(idx[i]);
    out.states.push_back(pool.entry(idx[i]));
  }
  return out;
}

void pool_update(SamplePool& pool, std::span<const int> indices,
                 std::span<const State> new_states) {
  if (indices.size() != new_states.size()) {
    throw std::invalid_argument(
        "pool update: indices and states differ in length");
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    pool.set_entry(indices[i], new_states[i]);
  }
}

int replace_worst_with(std::vector<State>& batch_states,
                       std::span<const float> losses,
                       const State& replacement) {
  if (batch_states.empty() || losses.size() != batch_states.size()) {
    throw std::invalid_argument(
        "replace worst: losses must match the batch size");
  }
  std::size_t worst = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] > losses[worst]) worst = i;
  }
  batch_states[worst] = replacement;
  return static_cast<int>(worst);
}

// ---------------------------------------------------------------------------
// Experiment configs
// ---------------------------------------------------------------------------

NcaExperimentConfig growing_full_config() {
  NcaExperimentConfig cfg;
  cfg.grid = {72, 72};
  cfg.channels = 16;
  cfg.hidden = 128;
  cfg.kernel_count = 3;
  cfg.fire_rate = 0.5f;
  cfg.alive_masking = true;
  cfg.boundary = Boundary::ZeroPad;
  cfg.batch_size = 8;
  cfg.min_steps = 64;
  cfg.max_steps = 96;
  cfg.learning_rate = 1e-3f;
  cfg.iterations = 8000;
  cfg.pool_capacity = 1024;
  cfg.eval_every = 100;
  return cfg;
}

NcaExperimentConfig growing_desk_config() {
  NcaExperimentConfig cfg = growing_full_config();
  cfg.grid = {32, 32};
  cfg.channels = 8;
  cfg.hidden = 32;
  cfg.batch_size = 4;
  cfg.iterations = 2000;
  cfg.eval_every = 25;
  cfg.stop_loss = 0.008f;
  return cfg;
}

NcaExperimentConfig diffusing_full_config() {
  NcaExperimentConfig cfg;
  cfg.grid = {72, 72};
  cfg.channels = 64;
  cfg.hidden = 256;
  cfg.kernel_count = 3;
  cfg.fire_rate = 0.5f;
  cfg.alive_masking = false;
  cfg.boundary = Boundary::ZeroPad;
  cfg.batch_size = 8;
  cfg.num_steps = 64;
  cfg.learning_rate = 1e-3f;
  cfg.iterations = 8000;
  cfg.pool_capacity = 0;  // this experiment never builds a pool
  cfg.eval_every = 100;
  return cfg;
}

NcaExperimentConfig diffusing_desk_config() {
  NcaExperimentConfig cfg = diffusing_full_config();
  cfg.grid = {24, 24};
  cfg.channels = 12;
  cfg.hidden = 48;
  cfg.batch_size = 4;
  cfg.iterations = 2000;
  cfg.eval_every = 25;
  cfg.stop_loss = 0.015f;
  return cfg;
}

NcaExperimentConfig arc1d_full_config() {
  NcaExperimentConfig cfg;
  cfg.grid = {96};
  cfg.channels = 64;
  cfg.hidden = 256;
  cfg.kernel_count = 2;
  cfg.fire_rate = 0.5f;
  cfg.alive_masking = false;
  cfg.boundary = Boundary::ZeroPad;
  cfg.batch_size = 8;
  cfg.num_steps = 64;
  cfg.learning_rate = 1e-3f;
  cfg.iterations = 2000;
  cfg.pool_capacity = 0;
  cfg.eval_every = 50;
  cfg.stop_accuracy = 1.0f;
  return cfg;
}

NcaExperimentConfig arc1d_desk_config() {
  NcaExperimentConfig cfg = arc1d_full_config();
  cfg.grid = {24};
  cfg.channels = 16;
  cfg.hidden = 64;
  cfg.iterations = 2000;
  cfg.eval_every = 25;
  return cfg;
}

NcaParams init_experiment_params(const NcaExperimentConfig& cfg) {
  NcaParams p = init_nca_params(rng::derive(cfg.seed, kTagParams),
                                cfg.channels, cfg.kernel_count, cfg.hidden);
  p.fire_rate = cfg.fire_rate;
  p.alive_masking = cfg.alive_masking;
  p.alive_threshold = cfg.alive_threshold;
  p.alpha_channel = cfg.alpha_channel;
  return p;
}

CaModel make_experiment_model(const NcaExperimentConfig& cfg,
                              NcaParams params) {
  const int rank = static_cast<int>(cfg.grid.size());
  KernelBank bank = identity_sobel_bank(rank, cfg.kernel_count);
  return CaModel::neural(std::move(params), std::move(bank), cfg.boundary);
}

// ---------------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------------

namespace {

float eval_rollout_mse(const CaModel& model, const State& start,
                       const State& target, int steps, std::uint64_t seed) {
  RolloutRecord rec = rollout(model, start, {}, steps, false, seed);
  // Loss only; the gradient buffer is small next to the rollout itself.
  return loss_mse_rgba(rec.final_state, target).value;
}

void check_target_for(const NcaExperimentConfig& cfg, const State& target) {
  if (target.spec.dims != cfg.grid) {
    throw std::invalid_argument(
        "training: target spatial dims do not match the configured grid");
  }
  if (target.spec.channels <= 0 || target.spec.channels > cfg.channels) {
    throw std::invalid_argument(
        "training: target channels exceed the model's state channels");
  }
}

}  // namespace

TrainResult train_growing(const State& target, const NcaExperimentConfig& cfg) {
  check_target_for(cfg, target);
  const LatticeSpec spec(cfg.grid, cfg.channels, cfg.boundary);
  const State seed_state = new_state(spec, StateInit::SingleSeedCell, 0);

  CaModel model = make_experiment_model(cfg, init_experiment_params(cfg));
  model.validate_for(spec);
  AdamState opt = AdamState::for_params(model.nca(), cfg.learning_rate);
  SamplePool pool(cfg.pool_capacity, seed_state);

  rng::Stream sample_seeds(rng::derive(cfg.seed, kTagPoolSample));
  rng::Stream step_draws(rng::derive(cfg.seed, kTagStepCount));
  rng::Stream rollout_seeds(rng::derive(cfg.seed, kTagRollout));
  rng::Stream eval_seeds(rng::derive(cfg.seed, kTagEval));

  TrainResult res;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    PoolSample batch = pool_sample(pool, cfg.batch_size,
                                   sample_seeds.next_u64());
    std::vector<float> pre_losses;
    pre_losses.reserve(batch.states.size());
    for (const State& s : batch.states) {
      pre_losses.push_back(loss_mse_rgba(s, target).value);
    }
    replace_worst_with(batch.states, pre_losses, seed_state);

    const int steps =
        cfg.min_steps + static_cast<int>(step_draws.next_below(
                            static_cast<std::uint64_t>(cfg.max_steps -
                                                       cfg.min_steps + 1)));

    NcaGrads acc = NcaGrads::zeros_like(model.nca());
    double loss_sum = 0.0;
    std::vector<State> finals;
    finals.reserve(batch.states.size());
    for (const State& start : batch.states) {
      RolloutRecord rec =
          rollout(model, start, {}, steps, true, rollout_seeds.next_u64());
      LossValue lv = loss_mse_rgba(rec.final_state, target);
      BackpropResult bp = backprop_rollout(model, rec, lv.grad);
      acc.accumulate(bp.param_grads);
      loss_sum += lv.value;
      finals.push_back(std::move(rec.final_state));
    }
    acc.scale(1.0f / static_cast<float>(cfg.batch_size));
    adam_step(model.nca(), acc, opt, true);
    pool_update(pool, batch.indices, finals);

    res.loss_curve.push_back(
        static_cast<float>(loss_sum / cfg.batch_size));
    res.iterations_run = iter + 1;

    const bool last = iter + 1 == cfg.iterations;
    if (cfg.eval_every > 0 && ((iter + 1) % cfg.eval_every == 0 || last)) {
      const float ev = eval_rollout_mse(model, seed_state, target,
                                        cfg.max_steps, eval_seeds.next_u64());
      res.evals.push_back({iter + 1, ev});
      res.final_eval = ev;
      if (cfg.stop_loss > 0.0f && ev < cfg.stop_loss) {
        res.reached_target = true;
        break;
      }
    }
  }
  res.params = model.nca();
  return res;
}

TrainResult train_diffusing(const State& target,
                            const NcaExperimentConfig& cfg) {
  check_target_for(cfg, target);
  const LatticeSpec spec(cfg.grid, cfg.channels, cfg.boundary);

  CaModel model = make_experiment_model(cfg, init_experiment_params(cfg));
  model.validate_for(spec);
  AdamState opt = AdamState::for_params(model.nca(), cfg.learning_rate);

  rng::Stream noise_seeds(rng::derive(cfg.seed, kTagNoise));
  rng::Stream rollout_seeds(rng::derive(cfg.seed, kTagRollout));
  rng::Stream eval_seeds(rng::derive(cfg.seed, kTagEval));

  TrainResult res;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    NcaGrads acc = NcaGrads::zeros_like(model.nca());
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      // Fresh uniform noise in every channel, every iteration: this
      // experiment trains a denoising attractor, not a growth process, and
      // deliberately keeps no pool of intermediate states.
      const State start =
          new_state(spec, StateInit::Uniform01, noise_seeds.next_u64());
      RolloutRecord rec = rollout(model, start, {}, cfg.num_steps, true,
                                  rollout_seeds.next_u64());
      LossValue lv = loss_mse_rgba(rec.final_state, target);
      BackpropResult bp = backprop_rollout(model, rec, lv.grad);
      acc.accumulate(bp.param_grads);
      loss_sum += lv.value;
    }
    acc.scale(1.0f / static_cast<float>(cfg.batch_size));
    adam_step(model.nca(), acc, opt, true);

    res.loss_curve.push_back(
        static_cast<float>(loss_sum / cfg.batch_size));
    res.iterations_run = iter + 1;

    const bool last = iter + 1 == cfg.iterations;
    if (cfg.eval_every > 0 && ((iter + 1) % cfg.eval_every == 0 || last)) {
      const State probe =
          new_state(spec, StateInit::Uniform01, eval_seeds.next_u64());
      const float ev = eval_rollout_mse(model, probe, target, cfg.num_steps,
                                        eval_seeds.next_u64());
      res.evals.push_back({iter + 1, ev});
      res.final_eval = ev;
      if (cfg.stop_loss > 0.0f && ev < cfg.stop_loss) {
        res.reached_target = true;
        break;
      }
    }
  }
  res.params = model.nca();
  return res;
}

// ---------------------------------------------------------------------------
// 1-D colored-row tasks
// ---------------------------------------------------------------------------

void Arc1dTask::validate() const {
  if (width <= 0) {
    throw std::invalid_argument("row task: width must be positive");
  }
  if (train_pairs.empty() || test_pairs.empty()) {
    throw std::invalid_argument(
        "row task: needs at least one train and one test pair");
  }
  auto check_rows = [&](const std::vector<Arc1dPair>& pairs) {
    for (const Arc1dPair& pr : pairs) {
      if (static_cast<int>(pr.input.size()) != width ||
          static_cast<int>(pr.output.size()) != width) {
        throw std::invalid_argument("row task: row width mismatch");
      }
      for (int c : pr.input) {
        if (c < 0 || c >= kColorCount) {
          throw std::invalid_argument("row task: color outside 0..9");
        }
      }
      for (int c : pr.output) {
        if (c < 0 || c >= kColorCount) {
          throw std::invalid_argument("row task: color outside 0..9");
        }
      }
    }
  };
  check_rows(train_pairs);
  check_rows(test_pairs);
}

namespace {

Arc1dPair generate_arc1d_pair(Arc1dFamily family, int width,
                              rng::Stream& stream) {
  const int shift = family == Arc1dFamily::MoveRight1   ? 1
                    : family == Arc1dFamily::MoveRight3 ? 3
                                                        : 0;
  const int len = 3 + static_cast<int>(stream.next_below(4));  // 3..6
  const int color = 1 + static_cast<int>(stream.next_below(9));  // 1..9

  Arc1dPair pair;
  pair.input.assign(width, 0);
  pair.output.assign(width, 0);

  if (family == Arc1dFamily::Denoise) {
    const int start = static_cast<int>(stream.next_below(width - len + 1));
    for (int i = 0; i < len; ++i) {
      pair.input[start + i] = color;
      pair.output[start + i] = color;
    }
    // Same-color specks away from the block (and from each other): the rule
    // to learn is "isolated pixels die, the block survives".
    std::vector<int> candidates;
    for (int i = 0; i < width; ++i) {
      if (i < start - 1 || i > start + len) candidates.push_back(i);
    }
    const int want = 2 + static_cast<int>(stream.next_below(2));  // 2..3
    for (int k = 0; k < want && !candidates.empty(); ++k) {
      const std::size_t pick = static_cast<std::size_t>(
          stream.next_below(candidates.size()));
      const int pos = candidates[pick];
      pair.input[pos] = color;
      std::erase_if(candidates,
                    [pos](int c) { return std::abs(c - pos) <= 1; });
    }
  } else {
    const int start =
        static_cast<int>(stream.next_below(width - len - shift + 1));
    for (int i = 0; i < len; ++i) {
      pair.input[start + i] = color;
      pair.output[start + shift + i] = color;
    }
  }
  return pair;
}

const char* arc1d_family_name(Arc1dFamily family) {
  switch (family) {
    case Arc1dFamily::MoveRight1:
      return "move_right_1";
    case Arc1dFamily::MoveRight3:
      return "move_right_3";
    case Arc1dFamily::Denoise:
      return "denoise";
  }
  return "unknown";
}

}  // namespace

Arc1dTask generate_arc1d_task(Arc1dFamily family, int width, int train_count,
                              int test_count, std::uint64_t seed) {
  if (width < 12) {
    throw std::invalid_argument(
        "row task generator: width must be at least 12");
  }
  if (train_count <= 0 || test_count <= 0) {
    throw std::invalid_argument(
        "row task generator: pair counts must be positive");
  }
  Arc1dTask task;
  task.name = arc1d_family_name(family);
  task.width = width;
  rng::Stream stream(seed);
  task.train_pairs.reserve(train_count);
  task.test_pairs.reserve(test_count);
  for (int i = 0; i < train_count; ++i) {
    task.train_pairs.push_back(generate_arc1d_pair(family, width, stream));
  }
  for (int i = 0; i < test_count; ++i) {
    task.test_pairs.push_back(generate_arc1d_pair(family, width, stream));
  }
  task.validate();
  return task;
}

State encode_arc1d_row(std::span<const int> colors, int channels,
                       Boundary boundary) {
  if (colors.empty()) {
    throw std::invalid_argument("row encode: empty row");
  }
  if (channels < kColorCount) {
    throw std::invalid_argument(
        "row encode: need at least ten channels for the color one-hot");
  }
  const LatticeSpec spec({static_cast<int>(colors.size())}, channels,
                         boundary);
  State st = new_state(spec, StateInit::Zeros, 0);
  for (std::size_t i = 0; i < colors.size(); ++i) {
    const int c = colors[i];
    if (c < 0 || c >= kColorCount) {
      throw std::invalid_argument("row encode: color outside 0..9");
    }
    st.values[i * channels + c] = 1.0f;
  }
  return st;
}

namespace {

int argmax_color(const float* logits) {
  int best = 0;
  for (int k = 1; k < kColorCount; ++k) {
    if (logits[k] > logits[best]) best = k;
  }
  return best;
}

}  // namespace

float arc1d_accuracy(const CaModel& model, std::span<const Arc1dPair> pairs,
                     int num_steps, std::uint64_t seed) {
  if (pairs.empty()) return 0.0f;
  const NcaParams& p = model.nca();
  rng::Stream stream(seed);
  int solved = 0;
  for (const Arc1dPair& pair : pairs) {
    const State start =
        encode_arc1d_row(pair.input, p.channels, model.boundary);
    RolloutRecord rec =
        rollout(model, start, {}, num_steps, false, stream.next_u64());
    bool ok = true;
    const int ch = p.channels;
    for (std::size_t i = 0; i < pair.output.size() && ok; ++i) {
      ok = argmax_color(rec.final_state.values.data() + i * ch) ==
           pair.output[i];
    }
    solved += ok ? 1 : 0;
  }
  return static_cast<float>(solved) / static_cast<float>(pairs.size());
}

Arc1dResult train_arc1d(const Arc1dTask& task, const NcaExperimentConfig& cfg) {
  task.validate();
  if (cfg.channels < kColorCount) {
    throw std::invalid_argument(
        "training: row tasks need at least ten state channels");
  }

  NcaExperimentConfig run_cfg = cfg;
  run_cfg.grid = {task.width};

  CaModel model =
      make_experiment_model(run_cfg, init_experiment_params(run_cfg));
  const LatticeSpec spec(run_cfg.grid, run_cfg.channels, run_cfg.boundary);
  model.validate_for(spec);
  AdamState opt = AdamState::for_params(model.nca(), cfg.learning_rate);

  std::vector<State> encoded;
  encoded.reserve(task.train_pairs.size());
  for (const Arc1dPair& pair : task.train_pairs) {
    encoded.push_back(
        encode_arc1d_row(pair.input, cfg.channels, run_cfg.boundary));
  }

  rng::Stream pair_picks(rng::derive(cfg.seed, kTagPairPick));
  rng::Stream rollout_seeds(rng::derive(cfg.seed, kTagRollout));
  rng::Stream eval_seeds(rng::derive(cfg.seed, kTagEval));

  Arc1dResult res;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    NcaGrads acc = NcaGrads::zeros_like(model.nca());
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t pick = static_cast<std::size_t>(
          pair_picks.next_below(task.train_pairs.size()));
      RolloutRecord rec = rollout(model, encoded[pick], {}, cfg.num_steps,
                                  true, rollout_seeds.next_u64());
      LossValue lv =
          loss_pixel_ce(rec.final_state, task.train_pairs[pick].output);
      BackpropResult bp = backprop_rollout(model, rec, lv.grad);
      acc.accumulate(bp.param_grads);
      loss_sum += lv.value;
    }
    acc.scale(1.0f / static_cast<float>(cfg.batch_size));
    adam_step(model.nca(), acc, opt, true);

    res.loss_curve.push_back(
        static_cast<float>(loss_sum / cfg.batch_size));
    res.iterations_run = iter + 1;

    const bool last = iter + 1 == cfg.iterations;
    if (cfg.eval_every > 0 && ((iter + 1) % cfg.eval_every == 0 || last)) {
      const float acc_test = arc1d_accuracy(model, task.test_pairs,
                                            cfg.num_steps,
                                            eval_seeds.next_u64());
      res.accuracy.push_back({iter + 1, acc_test});
      if (acc_test >= cfg.stop_accuracy) {
        res.reached_target = true;
        break;
      }
    }
  }
  res.test_accuracy = arc1d_accuracy(
      model, task.test_pairs, cfg.num_steps,
      rng::derive(cfg.seed, kTagFinalEval));
  res.params = model.nca();
  return res;
}

}  // namespace caforge
