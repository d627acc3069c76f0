#include <doctest.h>

#include <fstream>
#include <random>

#include "samsgl/config.hpp"
#include "support.hpp"

using namespace samsgl;

TEST_CASE("defaults serialize and parse back unchanged") {
  config::RunConfig def;
  const auto text = config::serialize(def);
  CHECK(config::serialize(config::parse(text)) == text);
  CHECK(config::serialize(config::parse("")) == text);
  CHECK(text.find("hidden = 64\n") != std::string::npos);
  CHECK(text.find("milestones = 50,75\n") != std::string::npos);
  CHECK(text.find("split = 0.7,0.1,0.2\n") != std::string::npos);
  CHECK(text.find("alpha = auto\n") != std::string::npos);
  CHECK(config::hash(def).size() == 16);
}

TEST_CASE("parse -> serialize -> parse is idempotent on random configs") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> small(1, 9);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    text += "hidden = " + std::to_string(small(rng)) + "\n";
    text += "blocks = " + std::to_string(small(rng)) + "\n";
    text += "kernel = " + std::to_string(2 * small(rng) + 1) + "\n";
    text += "temperature = " + std::to_string(unit(rng)) + "\n";
    text += "learning_rate = " + std::to_string(unit(rng) / 100) + "\n";
    text += "alpha = " + (trial % 2 ? std::string("auto") : std::to_string(unit(rng))) + "\n";
    text += "reference = " + (trial % 3 ? std::string("mean") : "node:" + std::to_string(small(rng))) + "\n";
    text += "milestones = " + (trial % 4 ? std::to_string(small(rng)) + "," + std::to_string(10 + small(rng))
                                         : std::string("none")) + "\n";
    text += "series_alignment = " + std::string(trial % 2 ? "true" : "false") + "\n";
    text += "precision = " + std::string(trial % 5 ? "f64" : "f32") + "\n";
    text += "split = 0.6,0.2,0.2\n";
    text += "seed = " + std::to_string(rng()) + "\n";
    const auto once = config::serialize(config::parse(text));
    const auto twice = config::serialize(config::parse(once));
    CHECK(once == twice);
    CHECK(config::hash(config::parse(once)) == config::hash(config::parse(twice)));
  }
}

TEST_CASE("comments, blanks and whitespace are tolerated") {
  auto c = config::parse("# a run\n\n  hidden=16   # narrow\nblocks = 2\n\tseed = 42\n");
  CHECK(c.model.hidden == 16);
  CHECK(c.model.blocks == 2);
  CHECK(c.model.seed == 42);
}

TEST_CASE("values land in the right fields") {
  auto c = config::parse(
      "history = 24\nhorizon = 6\nreference = node:3\nmetric = great_circle\nalpha = 2.5\n"
      "residual = subtract\nlocal_graph = false\nmilestones = none\nlr_floor = 0\n"
      "epoch_windows = 100\nsplit = 0.6,0.2,0.2\nprecision = f32\ngrad_clip = 0\n");
  CHECK(c.model.history == 24);
  CHECK(c.model.horizon == 6);
  CHECK(c.model.reference == alignment::ReferenceStrategy::node(3));
  CHECK(c.model.metric == graphs::DistanceMetric::great_circle);
  REQUIRE(c.model.alpha.has_value());
  CHECK(*c.model.alpha == 2.5);
  CHECK(c.model.residual == blocks::ResidualMode::subtract);
  CHECK_FALSE(c.model.local_graph);
  CHECK(c.train.schedule.milestones.empty());
  CHECK(c.train.schedule.floor == 0.0);
  CHECK(c.train.epoch_windows == 100);
  CHECK(c.split == data::SplitRatios{0.6, 0.2, 0.2});
  CHECK(c.train.precision == train::Precision::f32);
  CHECK(c.train.grad_clip == 0.0);
}

TEST_CASE("errors: unknown keys are usage errors naming the key, bad values are config errors") {
  CHECK_THROWS_WITH_AS(config::parse("hiddn = 3\n"), doctest::Contains("hiddn"), UsageError);
  CHECK_THROWS_AS(config::parse("hidden = many\n"), ConfigError);
  CHECK_THROWS_AS(config::parse("hidden = -3\n"), ConfigError);
  CHECK_THROWS_AS(config::parse("temperature = x\n"), ConfigError);
  CHECK_THROWS_AS(config::parse("series_alignment = maybe\n"), ConfigError);
  CHECK_THROWS_AS(config::parse("just a line\n"), ConfigError);
  CHECK_THROWS_AS(config::load("/nonexistent/samsgl.cfg"), IoError);
}

TEST_CASE("hash tracks the canonical text") {
  config::RunConfig a, b;
  CHECK(config::hash(a) == config::hash(b));
  b.model.seed = 1;
  CHECK(config::hash(a) != config::hash(b));
  auto dir = samsgl::testing::scratch_dir("config");
  {
    std::ofstream out(dir / "run.cfg");
    out << config::serialize(b);
  }
  CHECK(config::hash(config::load((dir / "run.cfg").string())) == config::hash(b));
}
