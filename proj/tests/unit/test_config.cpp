#include "doctest.h"
#include "svtas/config.hpp"
#include "svtas/error.hpp"

using namespace svtas;

TEST_CASE("config defaults") {
  const Config c = parse_config("");
  CHECK(c.model.hbrt.width == 128);
  CHECK(c.model.hbrt.memory == 512);
  CHECK(c.train.reward.beta1 == 4.0);
  CHECK(c.train.reward.beta2 == -1.0);
  CHECK(c.train.optim.lr == 5e-4);
  CHECK(c.train.optim.weight_decay == 1e-4);
  CHECK(c.train.mode == TrainMode::supervised);
}

TEST_CASE("config parsing and overrides") {
  Config c = parse_config(R"(
# comment
[model]
k = 16   # stacked frames
p = 2
paradigm = sequential
[train]
mode = mc
lr = 1e-3
[data]
dataset = /tmp/x
)");
  CHECK(c.model.clip.stack == 16);
  CHECK(c.model.paradigm == Paradigm::sequential);
  CHECK(c.train.mode == TrainMode::mc);
  CHECK(c.train.optim.lr == 1e-3);
  CHECK(c.data.dataset == "/tmp/x");
  apply_override(c, "model.profile=gtea");
  CHECK(c.model.clip.stack == 64);
  CHECK(c.model.clip.skip == 2);
  apply_override(c, "train.mode=td");
  CHECK(c.train.mode == TrainMode::td);
  CHECK(to_string(parse_mode("mc")) == "mc");
  CHECK(c.train.ce_norm == CeNormalization::per_class);
  apply_override(c, "train.ce_norm=mean");
  CHECK(c.train.ce_norm == CeNormalization::mean);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("[model]\nwidth = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[optim]\nlr = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("k = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nepochs = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nlr = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nk = -2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[reward]\nbeta1 = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\nprofile = breakfast\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nce_norm = sum\n"), ConfigError);
  Config c;
  CHECK_THROWS_AS(apply_override(c, "lr=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.nope=3"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.ini"), ConfigError);
}
