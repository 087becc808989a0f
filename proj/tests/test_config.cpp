// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ssp/config.hpp"
#include "support.hpp"

using namespace ssp;

TEST_SUITE("config") {

TEST_CASE("parse values and comments") {
  auto c = Config::parse("# header\nseed = 42\n  steps=3 # trailing\n\nbeta = 0.01\n");
  CHECK(c.get_u64("seed", 0) == 42);
  CHECK(c.get_size("steps", 0) == 3);
  CHECK(c.get_double("beta", 1.0) == 0.01);
  CHECK(c.get_int("batch_size", 8) == 8);
  CHECK_FALSE(c.has("batch_size"));
}

TEST_CASE("unknown keys and bad lines are rejected") {
  CHECK_THROWS_AS(Config::parse("sed = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("seed 1\n"), ConfigError);
  Config c;
  CHECK_THROWS_AS(c.apply_override("nope=1"), ConfigError);
  CHECK_THROWS_AS(c.apply_override("seed"), ConfigError);
  c.apply_override("seed=5");
  CHECK(c.get_u64("seed", 0) == 5);
}

TEST_CASE("typed getters reject malformed values") {
  auto c = Config::parse("seed = abc\nbeta = x\nresume = maybe\nsteps = -1\n");
  CHECK_THROWS_AS(c.get_u64("seed", 0), ConfigError);
  CHECK_THROWS_AS(c.get_double("beta", 0), ConfigError);
  CHECK_THROWS_AS(c.get_bool("resume", false), ConfigError);
  CHECK_THROWS_AS(c.get_size("steps", 0), ConfigError);
  CHECK_THROWS_AS(c.require("corpus"), ConfigError);
}

TEST_CASE("paths resolve against the config directory") {
  auto c = Config::load(ssp::testing::fixture("eval.cfg"));
  CHECK(c.path("qa") == ssp::testing::fixture("qa10.jsonl"));
  CHECK_THROWS_AS(Config::load("/nonexistent/x.cfg"), ConfigError);
}

}  // TEST_SUITE
