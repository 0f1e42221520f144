#include <array>
#include <stdexcept>
#include <vector>

#include "caforge/engine.hpp"
#include "caforge/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace caforge;
using testutil::check_near;

namespace {

CaModel small_neural_model(Boundary b, float fire_rate) {
  NcaParams p = init_nca_params(123, 4, 3, 12);
  rng::Stream rs(321);
  for (float& v : p.w2) v = rs.next_uniform(-0.2f, 0.2f);
  p.fire_rate = fire_rate;
  return CaModel::neural(std::move(p), identity_sobel_bank(2, 3), b);
}

}  // namespace

TEST_CASE("a rollout is the iterated step") {
  LatticeSpec spec({16}, 1, Boundary::Periodic);
  State s(spec);
  s.values[8] = 1.0f;
  const CaModel model = CaModel::eca(90);

  const RolloutRecord rec = rollout(model, s, {}, 8, true, 0);
  State want = s;
  for (int t = 0; t < 8; ++t) {
    want = eca_step(want, EcaRule(90), Boundary::Periodic);
    REQUIRE(rec.trajectory[t].values == want.values);
  }
  CHECK(rec.final_state.values == want.values);
  CHECK(rec.trajectory.size() == 8);
  CHECK(rec.trajectory.back().values == rec.final_state.values);
  CHECK(rec.step_seeds.size() == 8);
  CHECK(rec.cell_updates == 16 * 8);
  CHECK(rec.initial_state.values == s.values);
}

TEST_CASE("a zero-step rollout returns the initial state") {
  State s(LatticeSpec({8}, 1, Boundary::Periodic));
  const RolloutRecord rec = rollout(CaModel::eca(30), s, {}, 0, true, 5);
  CHECK(rec.final_state.values == s.values);
  CHECK(rec.trajectory.empty());
}

TEST_CASE("stepping a model matches the bare rule") {
  LatticeSpec spec({5, 5}, 1, Boundary::Periodic);
  State s(spec);
  for (int x = 1; x <= 3; ++x) s.values[2 * 5 + x] = 1.0f;
  const State via_model = step(CaModel::life(LifeRule::conway()), s);
  const State direct = life_step(s, LifeRule::conway(), Boundary::Periodic);
  CHECK(via_model.values == direct.values);
}

TEST_CASE("identical seeds give bit-identical stochastic rollouts") {
  const CaModel model = small_neural_model(Boundary::Periodic, 0.5f);
  State s = new_state(LatticeSpec({6, 6}, 4, Boundary::Periodic),
                      StateInit::Uniform01, 4);
  const RolloutRecord a = rollout(model, s, {}, 6, true, 777);
  const RolloutRecord b = rollout(model, s, {}, 6, true, 777);
  CHECK(a.final_state.values == b.final_state.values);
  for (int t = 0; t < 6; ++t)
    CHECK(a.trajectory[t].values == b.trajectory[t].values);
  const RolloutRecord c = rollout(model, s, {}, 6, true, 778);
  CHECK(a.final_state.values != c.final_state.values);
}

TEST_CASE("chained rollouts with continuing seeds reproduce one long run") {
  const CaModel model = small_neural_model(Boundary::Periodic, 0.5f);
  State s = new_state(LatticeSpec({5, 7}, 4, Boundary::Periodic),
                      StateInit::Uniform01, 10);
  const RolloutRecord whole = rollout(model, s, {}, 9, false, 42);
  const RolloutRecord head = rollout(model, s, {}, 4, false, 42);
  const RolloutRecord tail =
      rollout(model, head.final_state, {}, 5, false, 42, /*first_step=*/4);
  CHECK(tail.final_state.values == whole.final_state.values);
}

TEST_CASE("per-step seeds are a counter derivation of the master seed") {
  State s(LatticeSpec({4}, 1, Boundary::Periodic));
  const RolloutRecord rec = rollout(CaModel::eca(110), s, {}, 3, false, 99);
  REQUIRE(rec.step_seeds.size() == 3);
  for (int t = 0; t < 3; ++t)
    CHECK(rec.step_seeds[t] == step_seed_for(99, t));
}

TEST_CASE("external input is concatenated onto the perception field") {
  // One state channel, identity kernel, one input channel; the network is
  // wired to add max(input, 0) to the state.
  NcaParams p;
  p.perception_channels = 2;
  p.hidden = 1;
  p.channels = 1;
  p.w1 = {0.0f, 1.0f};  // hidden reads only the input column
  p.b1 = {0.0f};
  p.w2 = {1.0f};
  p.b2 = {0.0f};
  p.fire_rate = 1.0f;

  KernelBank bank;
  bank.kernels.push_back(Kernel{{1, 1}, {1.0f}});
  const CaModel model =
      CaModel::neural(p, bank, Boundary::Periodic, /*input_channels=*/1);

  LatticeSpec spec({2, 2}, 1, Boundary::Periodic);
  State s(spec);
  InputField input;
  input.spec = LatticeSpec({2, 2}, 1, Boundary::Periodic);
  input.values = {0.5f, -0.25f, 1.0f, 0.0f};

  const State next = step(model, s, &input, 0);
  CHECK(next.values[0] == 0.5f);
  CHECK(next.values[1] == 0.0f);  // relu clips the negative drive
  CHECK(next.values[2] == 1.0f);
  CHECK(next.values[3] == 0.0f);
}

TEST_CASE("input presence must match the model declaration") {
  const CaModel plain = CaModel::eca(90);
  State s(LatticeSpec({8}, 1, Boundary::Periodic));
  InputField input;
  input.spec = LatticeSpec({8}, 1, Boundary::Periodic);
  input.values.assign(8, 0.0f);
  CHECK_THROWS_AS(step(plain, s, &input), std::invalid_argument);

  NcaParams p = init_nca_params(1, 1, 2, 4, 1);
  const CaModel needy = CaModel::neural(p, identity_sobel_bank(1, 2),
                                        Boundary::Periodic, 1);
  State s1(LatticeSpec({8}, 1, Boundary::Periodic));
  CHECK_THROWS_AS(step(needy, s1), std::invalid_argument);

  InputField wrong;
  wrong.spec = LatticeSpec({9}, 1, Boundary::Periodic);
  wrong.values.assign(9, 0.0f);
  CHECK_THROWS_AS(step(needy, s1, &wrong), std::invalid_argument);
}

TEST_CASE("rollout validates the inputs sequence length") {
  NcaParams p = init_nca_params(1, 1, 2, 4, 1);
  const CaModel model = CaModel::neural(p, identity_sobel_bank(1, 2),
                                        Boundary::Periodic, 1);
  State s(LatticeSpec({4}, 1, Boundary::Periodic));
  InputField f;
  f.spec = LatticeSpec({4}, 1, Boundary::Periodic);
  f.values.assign(4, 0.0f);
  const std::vector<InputField> too_short(2, f);
  CHECK_THROWS_AS(rollout(model, s, too_short, 3, false, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(rollout(model, s, {}, 3, false, 0), std::invalid_argument);
  const std::vector<InputField> right(3, f);
  CHECK_NOTHROW(rollout(model, s, right, 3, false, 0));
}

TEST_CASE("masked cells never change") {
  CaModel model = CaModel::life(LifeRule::conway());
  LatticeSpec spec({5, 5}, 1, Boundary::Periodic);
  State s(spec);
  for (int x = 1; x <= 3; ++x) s.values[2 * 5 + x] = 1.0f;
  CellMask mask = CellMask::all(25, true);
  mask.updatable[1 * 5 + 2] = 0;  // freeze the cell above the bar's center
  model.mask = mask;
  const State next = step(model, s);
  CHECK(next.values[1 * 5 + 2] == 0.0f);  // would have been born
  CHECK(next.values[3 * 5 + 2] == 1.0f);  // the unfrozen twin is born
}

TEST_CASE("models reject grids they cannot run on") {
  State square(LatticeSpec({4, 4}, 1, Boundary::Periodic));
  CHECK_THROWS_AS(step(CaModel::eca(90), square), std::invalid_argument);

  State line(LatticeSpec({8}, 1, Boundary::Periodic));
  CHECK_THROWS_AS(step(CaModel::life(LifeRule::conway()), line),
                  std::invalid_argument);

  State wrong_boundary(LatticeSpec({8}, 1, Boundary::ZeroPad));
  CHECK_THROWS_AS(step(CaModel::eca(90), wrong_boundary),
                  std::invalid_argument);

  const CaModel neural = small_neural_model(Boundary::Periodic, 1.0f);
  State two_ch(LatticeSpec({4, 4}, 2, Boundary::Periodic));
  CHECK_THROWS_AS(step(neural, two_ch), std::invalid_argument);
}

TEST_CASE("spectral and direct neural perception agree in the engine") {
  State s = new_state(LatticeSpec({6, 6}, 4, Boundary::Periodic),
                      StateInit::Uniform01, 200);
  CaModel direct = small_neural_model(Boundary::Periodic, 1.0f);
  direct.perceive_path = PerceivePath::Direct;
  CaModel spectral = direct;
  spectral.perceive_path = PerceivePath::Fft;
  const State a = step(direct, s, nullptr, 3);
  const State b = step(spectral, s, nullptr, 3);
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i)
    check_near(b.values[i], a.values[i], 1e-4);
}

TEST_CASE("the reported throughput accounting is consistent") {
  State s = new_state(LatticeSpec({32, 32}, 1, Boundary::Periodic),
                      StateInit::Uniform01, 1);
  for (float& v : s.values) v = v < 0.5f ? 0.0f : 1.0f;
  const RolloutRecord rec =
      rollout(CaModel::life(LifeRule::conway()), s, {}, 10, false, 0);
  CHECK(rec.cell_updates == 32 * 32 * 10);
  CHECK(rec.wall_seconds >= 0.0);
  if (rec.wall_seconds > 0.0)
    CHECK(rec.cell_updates_per_second() ==
          doctest::Approx(rec.cell_updates / rec.wall_seconds));
}
