#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "caforge/engine.hpp"

namespace caforge {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Scalar loss plus its gradient with respect to every value of the state the
// loss was evaluated on (zero on channels the loss does not read).
struct LossValue {
  float value = 0.0f;
  std::vector<float> grad;
};

// Mean squared error over the target's channels (the target may carry fewer
// channels than the state; trailing state channels are ignored and receive
// zero gradient). grad = 2 * (pred - target) / N with N = cells * channels
// compared.
LossValue loss_mse_rgba(const State& prediction, const State& target);

// Per-cell softmax cross-entropy on a 1-D state whose first ten channels are
// class logits. target_colors holds one class id (0..9) per cell; the loss is
// the mean over cells, grad = (softmax - onehot) / cell_count on the logit
// channels.
LossValue loss_pixel_ce(const State& prediction,
                        std::span<const int> target_colors);

inline constexpr int kColorCount = 10;

// ---------------------------------------------------------------------------
// Gradients through rollouts
// ---------------------------------------------------------------------------

// Gradient buffers shaped exactly like the four tensors of NcaParams.
struct NcaGrads {
  std::vector<float> w1, b1, w2, b2;

  static NcaGrads zeros_like(const NcaParams& params);

  std::vector<std::vector<float>*> tensors();
  std::vector<const std::vector<float>*> tensors() const;

  void accumulate(const NcaGrads& other);  // this += other
  void scale(float factor);
  double global_l2_norm() const;
  bool all_finite() const;
};

// Reverse-sweep workspace: the recorded states and per-step seeds of one
// rollout plus gradient accumulators. The record must outlive the tape.
struct Tape {
  const RolloutRecord* record = nullptr;
  std::vector<std::uint64_t> step_seeds;
  NcaGrads grads;
};

struct BackpropResult {
  NcaGrads param_grads;
  std::vector<float> state0_grad;  // same layout as state.values
};

// Backpropagation through time over a recorded rollout of a neural model.
// Each step's backward pass recomputes the forward quantities (perception,
// activations, alive pattern) from the stored pre-step state and replays the
// dropout mask from the stored step seed. `final_state_grad` is dLoss/dFinal,
// laid out like final_state.values. `inputs` must match what the rollout was
// driven with (empty for models without input channels).
//
// Throws std::invalid_argument if the record lacks its trajectory or seeds,
// or if the model is not neural.
BackpropResult backprop_rollout(const CaModel& model,
                                const RolloutRecord& record,
                                std::span<const float> final_state_grad,
                                std::span<const InputField> inputs = {});

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamState {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  float learning_rate = 1e-3f;
  std::int64_t step_count = 0;
  NcaGrads m, v;  // first/second moment buffers, shape-matching the params

  static AdamState for_params(const NcaParams& params,
                              float learning_rate = 1e-3f);
};

// One Adam update, in place. When normalize_grads is set the gradient is
// first scaled to unit global L2 norm (skipped when the norm is below 1e-8).
// Throws std::invalid_argument on non-finite gradients or shape mismatch.
void adam_step(NcaParams& params, const NcaGrads& grads, AdamState& opt,
               bool normalize_grads = true);

// ---------------------------------------------------------------------------
// Sample pool
// ---------------------------------------------------------------------------

// Fixed-capacity pool of training states. Construction is counted globally so
// tests can assert that a training routine does (or does not) build one.
class SamplePool {
 public:
  SamplePool(int capacity, const State& initial_entry);

  int size() const { return static_cast<int>(entries_.size()); }
  const State& entry(int index) const;
  void set_entry(int index, const State& state);

  static std::int64_t constructed_count();

 private:
  std::vector<State> entries_;
};

struct PoolSample {
  std::vector<int> indices;
  std::vector<State> states;
};

// Uniform sample of `batch` distinct entries (no replacement within the
// batch), deterministic in `seed`. Throws if batch exceeds the pool size.
PoolSample pool_sample(const SamplePool& pool, int batch, std::uint64_t seed);

// Writes rollout outputs back at the sampled indices.
void pool_update(SamplePool& pool, std::span<const int> indices,
                 std::span<const State> new_states);

// Replaces the batch entry with the highest loss by `replacement` (the
// stability convention applied before training on a sampled batch). Returns
// the replaced position.
int replace_worst_with(std::vector<State>& batch_states,
                       std::span<const float> losses,
                       const State& replacement);

// ---------------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------------

struct NcaExperimentConfig {
  std::vector<int> grid;  // spatial dims of the training lattice
  int channels = 16;
  int hidden = 128;
  int kernel_count = 3;  // identity + axis gradients, see identity_sobel_bank
  float fire_rate = 0.5f;
  bool alive_masking = false;
  int alpha_channel = 3;
  float alive_threshold = 0.1f;
  Boundary boundary = Boundary::ZeroPad;

  int batch_size = 8;
  int num_steps = 64;   // fixed-length rollouts (diffusing, 1D tasks)
  int min_steps = 64;   // growing rollouts draw a length
  int max_steps = 96;   //   uniformly from [min_steps, max_steps]
  float learning_rate = 1e-3f;
  int iterations = 2000;
  int pool_capacity = 1024;
  std::uint64_t seed = 0;

  int eval_every = 25;          // 0 disables periodic evaluation
  float stop_loss = -1.0f;      // early stop once eval MSE drops below this
  float stop_accuracy = 1.0f;   // early stop once eval accuracy reaches this
};

// Published-scale presets and reduced single-core presets.
NcaExperimentConfig growing_full_config();
NcaExperimentConfig growing_desk_config();
NcaExperimentConfig diffusing_full_config();
NcaExperimentConfig diffusing_desk_config();
NcaExperimentConfig arc1d_full_config();
NcaExperimentConfig arc1d_desk_config();

// The model a config describes, wrapped around the given parameters.
CaModel make_experiment_model(const NcaExperimentConfig& cfg,
                              NcaParams params);
// Fresh parameters for a config (w2/b2 zero: the initial rule is identity).
NcaParams init_experiment_params(const NcaExperimentConfig& cfg);

struct EvalPoint {
  int iteration = 0;
  float value = 0.0f;
};

struct TrainResult {
  NcaParams params;
  std::vector<float> loss_curve;  // mean batch loss per iteration
  std::vector<EvalPoint> evals;   // periodic evaluation metric
  int iterations_run = 0;
  bool reached_target = false;
  float final_eval = std::numeric_limits<float>::quiet_NaN();
};

// Pool-based growth training: sample a batch from the pool, replace the
// worst entry by the single-seed state, roll out a uniformly drawn number of
// steps in [min_steps, max_steps], take the MSE against the target on its
// channels, backpropagate, Adam-update, and write the final states back.
// Evaluation rolls a fresh seed state for max_steps and measures MSE.
TrainResult train_growing(const State& target, const NcaExperimentConfig& cfg);

// Denoising training: every batch element starts from fresh uniform noise in
// all channels (no pool is constructed), rolls exactly num_steps, and is
// pulled toward the target by MSE. Evaluation denoises held-out noise.
TrainResult train_diffusing(const State& target,
                            const NcaExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// 1-D colored-row tasks
// ---------------------------------------------------------------------------

struct Arc1dPair {
  std::vector<int> input;   // colors 0..9
  std::vector<int> output;  // same width
};

struct Arc1dTask {
  std::string name;
  int width = 0;
  std::vector<Arc1dPair> train_pairs;
  std::vector<Arc1dPair> test_pairs;

  void validate() const;  // throws std::invalid_argument when malformed
};

enum class Arc1dFamily { MoveRight1, MoveRight3, Denoise };

// Procedurally generated task instances: a colored block on a width-`width`
// row is shifted right (move families) or isolated same-color specks are
// erased (denoise). Deterministic in `seed`.
Arc1dTask generate_arc1d_task(Arc1dFamily family, int width, int train_count,
                              int test_count, std::uint64_t seed);

// One-hot color encoding into the first ten channels; remaining channels 0.
State encode_arc1d_row(std::span<const int> colors, int channels,
                       Boundary boundary);

struct Arc1dResult {
  NcaParams params;
  std::vector<float> loss_curve;
  std::vector<EvalPoint> accuracy;  // test accuracy at eval points
  float test_accuracy = 0.0f;
  int iterations_run = 0;
  bool reached_target = false;
};

// Supervised training on the task's train pairs (one-hot input rows, fixed
// num_steps rollout, per-cell softmax cross-entropy on the first ten
// channels), evaluated on the test pairs: a pair is solved iff the argmax
// color of every cell matches the target row.
Arc1dResult train_arc1d(const Arc1dTask& task, const NcaExperimentConfig& cfg);

// Fraction of pairs solved by the model under a fixed-step rollout.
float arc1d_accuracy(const CaModel& model, std::span<const Arc1dPair> pairs,
                     int num_steps, std::uint64_t seed);

}  // namespace caforge
