#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "samsgl/train.hpp"
#include "support.hpp"

using namespace samsgl;
using engine::Tensor;
using T = Tensor<double>;
using samsgl::testing::random_values;

namespace {

data::Dataset small_dataset(std::size_t nodes = 4, std::size_t steps = 300, std::uint64_t seed = 3) {
  data::SynthSpec spec;
  spec.nodes = nodes;
  spec.steps = steps;
  spec.max_delay = 3;
  spec.noise = 0.05;
  return data::normalize(data::synth_delayed_diffusion(spec, seed).dataset);
}

blocks::ModelConfig tiny_model(std::size_t nodes = 4) {
  blocks::ModelConfig c;
  c.nodes = nodes;
  c.history = 6;
  c.horizon = 3;
  c.hidden = 4;
  c.blocks = 1;
  c.fc_width = 16;
  c.embed_dim = 4;
  c.local_hidden = 4;
  c.seed = 5;
  return c;
}

std::vector<std::vector<double>> snapshot(const blocks::ParamStore<double>& store) {
  std::vector<std::vector<double>> out;
  for (const auto& e : store.entries()) out.emplace_back(e.second.values().begin(), e.second.values().end());
  return out;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("mae and rmse: examples, loop oracle and Jensen") {
  CHECK(train::mae({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(train::mae({0, 0}, {1, -1}) == 1.0);
  CHECK(train::rmse({4, 5}, {4, 5}) == 0.0);
  CHECK(train::rmse({1, 2, 3}, {3.5, 4.5, 5.5}) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK_THROWS_AS(train::mae({1, 2}, {1}), DimensionError);
  CHECK_THROWS_AS(train::rmse({}, {}), DimensionError);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_values(37, rng, -3, 3);
    auto b = random_values(37, rng, -3, 3);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    CHECK(train::mae(a, b) == doctest::Approx(s / 37.0).epsilon(1e-12));
    CHECK(train::rmse(a, b) >= train::mae(a, b));
  }
}

TEST_CASE("adam: first step, zero gradients, bowl convergence, non-finite guard") {
  SUBCASE("first step with unit gradient moves by lr") {
    auto p = T::parameter({1}, {0.0});
    engine::backward(engine::sum(p));
    train::OptimState st;
    train::adam_step<double>({{"p", p}}, st, 0.1);
    CHECK(st.step == 1);
    CHECK(p.values()[0] == doctest::Approx(-0.1).epsilon(1e-7));
  }
  SUBCASE("zero gradients leave parameters unchanged") {
    auto p = T::parameter({3}, {1, 2, 3});
    train::OptimState st;
    train::adam_step<double>({{"p", p}}, st, 0.1);
    CHECK(st.step == 1);
    CHECK(std::vector<double>(p.values().begin(), p.values().end()) == std::vector<double>{1, 2, 3});
  }
  SUBCASE("quadratic bowl converges below 1e-6 within 500 steps") {
    auto p = T::parameter({4}, {2, -1, 0.5, 3});
    auto centre = T::constant({4}, {0.3, 0.7, -1.2, 1.0});
    train::OptimState st;
    double loss = 0.0;
    std::size_t steps = 0;
    for (; steps < 500; ++steps) {
      p.zero_grad();
      auto f = engine::sum(engine::square(engine::sub(p, centre)));
      loss = f.item();
      if (loss < 1e-6) break;
      engine::backward(f);
      train::adam_step<double>({{"p", p}}, st, 0.05);
    }
    CHECK(loss < 1e-6);
  }
  SUBCASE("non-finite gradient aborts the step without mutation") {
    auto p = T::parameter({2}, {1, 2});
    auto q = T::parameter({1}, {std::numeric_limits<double>::infinity()});
    engine::backward(engine::sum(engine::mul(p, engine::concat_last(std::vector<T>{q, q}))));
    train::OptimState st;
    CHECK_THROWS_AS(train::adam_step<double>({{"p", p}, {"q", q}}, st, 0.1), NumericError);
    CHECK(st.step == 0);
    CHECK(p.values()[0] == 1.0);
    CHECK(p.values()[1] == 2.0);
  }
}

TEST_CASE("gradient clipping by global norm") {
  auto a = T::parameter({1}, {0.0});
  auto b = T::parameter({1}, {0.0});
  engine::backward(engine::add(engine::scale(engine::sum(a), 3.0), engine::scale(engine::sum(b), 4.0)));
  CHECK(train::clip_grad_norm<double>({{"a", a}, {"b", b}}, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
  CHECK(train::clip_grad_norm<double>({{"a", a}, {"b", b}}, 10.0) == doctest::Approx(1.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
}

TEST_CASE("learning-rate schedule") {
  train::Schedule s;
  CHECK(train::lr_at(0, s) == 0.005);
  CHECK(train::lr_at(49, s) == 0.005);
  CHECK(train::lr_at(50, s) == doctest::Approx(0.00025).epsilon(1e-15));
  CHECK(train::lr_at(75, s) == doctest::Approx(0.0000125).epsilon(1e-15));
  s.milestones = {1, 2, 3, 4, 5, 6};
  CHECK(train::lr_at(10, s) == 1e-8);
  double prev = train::lr_at(0, s);
  for (std::size_t e = 1; e < 20; ++e) {
    const double lr = train::lr_at(e, s);
    CHECK(lr <= prev);
    CHECK(lr >= s.floor);
    prev = lr;
  }
}

TEST_CASE("evaluation identities") {
  auto ds = small_dataset(5, 200);
  const std::size_t L = 6, H = 4;
  const auto persist = train::persistence_predictor(5, L, H, 1);

  SUBCASE("exact predictions score zero") {
    auto m = train::evaluate_predictor(ds, data::Split::test, L, H, [](const data::Batch& b) { return b.target; });
    CHECK(m.mae == 0.0);
    CHECK(m.rmse == 0.0);
    CHECK(m.horizon_mae == std::vector<double>(H, 0.0));
  }
  SUBCASE("per-horizon mean equals overall mae; batch size does not matter") {
    auto m = train::evaluate_predictor(ds, data::Split::test, L, H, persist, 64);
    double mean = 0.0;
    for (double v : m.horizon_mae) mean += v;
    CHECK(std::abs(mean / H - m.mae) <= 1e-10);
    for (std::size_t bs : {1, 3, 1000}) {
      auto other = train::evaluate_predictor(ds, data::Split::test, L, H, persist, bs);
      CHECK(std::abs(other.mae - m.mae) <= 1e-10);
      CHECK(std::abs(other.rmse - m.rmse) <= 1e-10);
      for (std::size_t h = 0; h < H; ++h) CHECK(std::abs(other.horizon_mae[h] - m.horizon_mae[h]) <= 1e-10);
    }
  }
  SUBCASE("metrics are in original units and invariant to node order") {
    auto m = train::evaluate_predictor(ds, data::Split::test, L, H, persist);
    std::vector<train::DumpRow> rows;
    train::evaluate_predictor(ds, data::Split::test, L, H, persist, 64, &rows);
    CHECK(rows.size() == m.windows * 5 * H);
    double s = 0.0;
    for (const auto& r : rows) s += std::abs(r.predicted - r.actual);
    CHECK(s / static_cast<double>(rows.size()) == doctest::Approx(m.mae).epsilon(1e-12));
    const auto first = rows.front();
    CHECK(first.actual == doctest::Approx(ds.denormalize(ds.at(first.origin + L, first.node, 0), 0)).epsilon(1e-12));

    auto flipped = ds;
    for (std::size_t t = 0; t < ds.steps; ++t)
      for (std::size_t n = 0; n < 5; ++n) flipped.values[t * 5 + n] = ds.values[t * 5 + (4 - n)];
    auto mf = train::evaluate_predictor(flipped, data::Split::test, L, H, persist);
    CHECK(mf.mae == doctest::Approx(m.mae).epsilon(1e-12));
    CHECK(mf.rmse == doctest::Approx(m.rmse).epsilon(1e-12));
  }
  SUBCASE("unnormalized datasets and wrong prediction sizes are rejected") {
    auto raw = ds;
    raw.stats.reset();
    CHECK_THROWS_AS(train::evaluate_predictor(raw, data::Split::test, L, H, persist), UsageError);
    CHECK_THROWS_AS(train::evaluate_predictor(ds, data::Split::test, L, H,
                                              [](const data::Batch&) { return std::vector<double>(3); }),
                    DimensionError);
  }
}

TEST_CASE("model evaluation matches the predictor path") {
  auto ds = small_dataset();
  blocks::Model<double> model(tiny_model(), &ds.geometry);
  auto a = train::evaluate(model, ds, data::Split::val);
  auto b = train::evaluate_predictor(ds, data::Split::val, 6, 3, train::model_predictor(model), 7);
  CHECK(std::abs(a.mae - b.mae) <= 1e-10);
  CHECK(a.horizon_mae.size() == 3);
}

TEST_CASE("train loop: zero epochs, lr = 0, loss decrease, reproducibility") {
  auto ds = small_dataset();
  train::TrainConfig tc;
  tc.batch_size = 16;

  SUBCASE("zero epochs: empty history, no checkpoint") {
    auto dir = samsgl::testing::scratch_dir("train-zero");
    blocks::Model<double> model(tiny_model(), &ds.geometry);
    tc.epochs = 0;
    train::TrainOptions opts;
    opts.checkpoint_path = (dir / "ck.sgck").string();
    auto rep = train::train_loop(model, ds, tc, opts);
    CHECK(rep.history.empty());
    CHECK_FALSE(rep.checkpoint_written);
    CHECK_FALSE(rep.best_epoch.has_value());
    CHECK_FALSE(std::filesystem::exists(dir / "ck.sgck"));
  }
  SUBCASE("lr = 0 leaves parameters bit identical") {
    blocks::Model<double> model(tiny_model(), &ds.geometry);
    const auto before = snapshot(model.params());
    tc.epochs = 2;
    tc.schedule.initial = 0.0;
    tc.schedule.floor = 0.0;
    auto rep = train::train_loop(model, ds, tc);
    CHECK(rep.history.size() == 2);
    const auto after = snapshot(model.params());
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i)
      CHECK(std::memcmp(after[i].data(), before[i].data(), after[i].size() * sizeof(double)) == 0);
  }
  SUBCASE("train loss falls between the first and the twentieth epoch") {
    blocks::Model<double> model(tiny_model(), &ds.geometry);
    tc.epochs = 20;
    std::ostringstream log;
    train::TrainOptions opts;
    opts.log = &log;
    opts.config_text = "hidden = 4\n";
    auto rep = train::train_loop(model, ds, tc, opts);
    REQUIRE(rep.history.size() == 20);
    CHECK(rep.history[19].train_loss < rep.history[0].train_loss);
    CHECK(rep.test.has_value());
    REQUIRE(rep.best_epoch.has_value());
    for (const auto& e : rep.history) CHECK(rep.history[*rep.best_epoch].val_mae <= e.val_mae);

    // The reported test metrics belong to the restored best parameters.
    auto again = train::evaluate(model, ds, data::Split::test);
    CHECK(again.mae == rep.test->mae);

    std::size_t lines = 0;
    std::string line, last;
    std::istringstream in(log.str());
    while (std::getline(in, line)) {
      ++lines;
      last = line;
    }
    CHECK(lines == 21);
    CHECK(last.find("\"event\":\"summary\"") != std::string::npos);
    CHECK(last.find("hidden = 4") != std::string::npos);
  }
  SUBCASE("identical seeds give bit-identical loss curves and checkpoints") {
    auto dir = samsgl::testing::scratch_dir("train-repro");
    tc.epochs = 3;
    std::vector<train::RunReport> reps;
    for (int run = 0; run < 2; ++run) {
      blocks::Model<double> model(tiny_model(), &ds.geometry);
      train::TrainOptions opts;
      opts.checkpoint_path = (dir / ("ck" + std::to_string(run) + ".sgck")).string();
      reps.push_back(train::train_loop(model, ds, tc, opts));
    }
    REQUIRE(reps[0].history.size() == reps[1].history.size());
    for (std::size_t e = 0; e < reps[0].history.size(); ++e) {
      CHECK(std::memcmp(&reps[0].history[e].train_loss, &reps[1].history[e].train_loss, sizeof(double)) == 0);
      CHECK(std::memcmp(&reps[0].history[e].val_mae, &reps[1].history[e].val_mae, sizeof(double)) == 0);
    }
    CHECK(file_bytes(dir / "ck0.sgck") == file_bytes(dir / "ck1.sgck"));

    auto other_cfg = tiny_model();
    other_cfg.seed = 6;
    blocks::Model<double> other(other_cfg, &ds.geometry);
    auto rep = train::train_loop(other, ds, tc);
    CHECK(rep.history[0].train_loss != reps[0].history[0].train_loss);
  }
  SUBCASE("epoch_windows subsamples the shuffled train windows") {
    blocks::Model<double> model(tiny_model(), &ds.geometry);
    tc.epochs = 1;
    tc.epoch_windows = 20;
    auto rep = train::train_loop(model, ds, tc);
    CHECK(rep.history.size() == 1);
  }
}

TEST_CASE("train loop: divergence and compatibility") {
  auto ds = small_dataset();
  train::TrainConfig tc;
  tc.epochs = 2;

  blocks::Model<double> model(tiny_model(), &ds.geometry);
  auto w = model.params().get("embed.w");
  w.assign(std::vector<double>(w.size(), std::numeric_limits<double>::max()));
  auto rep = train::train_loop(model, ds, tc);
  CHECK(rep.diverged);
  CHECK_FALSE(rep.failure.empty());
  CHECK(rep.history.empty());
  CHECK_FALSE(rep.test.has_value());
  CHECK(train::summary_json(rep).find("\"diverged\":true") != std::string::npos);

  auto five = tiny_model(5);
  five.local_graph = false;
  blocks::Model<double> wrong(five, nullptr);
  CHECK_THROWS_AS(train::train_loop(wrong, ds, tc), CompatibilityError);
  auto raw = ds;
  raw.stats.reset();
  blocks::Model<double> fine(tiny_model(), &ds.geometry);
  CHECK_THROWS_AS(train::train_loop(fine, raw, tc), UsageError);
}

TEST_CASE("single precision training runs") {
  auto ds = small_dataset();
  blocks::Model<float> model(tiny_model(), &ds.geometry);
  train::TrainConfig tc;
  tc.epochs = 2;
  tc.precision = train::Precision::f32;
  auto rep = train::train_loop(model, ds, tc);
  CHECK(rep.history.size() == 2);
  CHECK(std::isfinite(rep.test->mae));
  CHECK(train::parse_precision("f32") == train::Precision::f32);
  CHECK_THROWS_AS(train::parse_precision("f16"), ConfigError);
}
