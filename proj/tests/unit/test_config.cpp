// Copyright 2026 The equicascade Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>

#include "equicascade/config.hpp"
#include "equicascade/error.hpp"
#include "oracles.hpp"

using namespace equicascade;

TEST(RunConfig, ParsesScalarsSectionsAndArrays) {
  auto cfg = RunConfig::parse(R"(# top comment
seed = 7
out = "runs/a # not a comment"
[classifier]
epochs = 1_000
learning_rate = 1e-2
flip_augment = false
mask = 0x10
[experiment]
aus = ["AU101", "AD1"]   # trailing comment
folds = [0, 1, 2]
seed = 9
)");
  EXPECT_EQ(cfg.get_int("seed"), 7);
  EXPECT_EQ(cfg.get_string("out"), "runs/a # not a comment");
  EXPECT_EQ(cfg.get_int("classifier.epochs"), 1000);
  EXPECT_DOUBLE_EQ(cfg.get_double("classifier.learning_rate"), 0.01);
  EXPECT_FALSE(cfg.get_bool("classifier.flip_augment", true));
  EXPECT_EQ(cfg.get_int("classifier.mask"), 16);
  EXPECT_EQ(cfg.get_string_list("experiment.aus"), (std::vector<std::string>{"AU101", "AD1"}));
  EXPECT_EQ(cfg.get_int_list("experiment.folds"), (std::vector<std::int64_t>{0, 1, 2}));
  EXPECT_EQ(cfg.get_int("experiment.seed"), 9);
  EXPECT_EQ(cfg.get_int("missing", 42), 42);
  EXPECT_TRUE(cfg.violations().empty());
  EXPECT_NO_THROW(cfg.check());
}

TEST(RunConfig, TypeMismatchesAreCollected) {
  auto cfg = RunConfig::parse("a = \"x\"\nb = 1.5\nc = [1, 2]\nd = 3\n");
  EXPECT_EQ(cfg.get_int("a", -1), -1);
  EXPECT_EQ(cfg.get_int("b", -1), -1);
  EXPECT_EQ(cfg.get_string("c", "z"), "z");
  EXPECT_DOUBLE_EQ(cfg.get_double("d"), 3.0);  // ints widen
  cfg.require("absent");
  EXPECT_EQ(cfg.violations().size(), 4u);
  try {
    cfg.check();
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("absent"), std::string::npos) << msg;
    EXPECT_NE(msg.find("a: expected an integer"), std::string::npos) << msg;
  }
}

TEST(RunConfig, CommaSeparatedListsAndOverrides) {
  RunConfig cfg;
  cfg.set_from_string("aus", "AU101,AD38");
  cfg.set_from_string("folds", "3");
  cfg.set_from_string("epochs", "12");
  cfg.set_from_string("name", "plain words");
  EXPECT_EQ(cfg.get_string_list("aus"), (std::vector<std::string>{"AU101", "AD38"}));
  EXPECT_EQ(cfg.get_int_list("folds"), (std::vector<std::int64_t>{3}));
  EXPECT_EQ(cfg.get_int("epochs"), 12);
  EXPECT_EQ(cfg.get_string("name"), "plain words");
  cfg.set_from_string("epochs", "13");
  EXPECT_EQ(cfg.get_int("epochs"), 13);
  EXPECT_EQ(cfg.values().at("name").repr(), "\"plain words\"");
}

TEST(RunConfig, SyntaxErrorsNameTheLine) {
  auto line_of = [](const std::string& text) {
    try {
      RunConfig::parse(text, "x.toml");
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(line_of("a = 1\nb 2\n").find("x.toml:2"), std::string::npos);
  EXPECT_NE(line_of("[unclosed\n").find("x.toml:1"), std::string::npos);
  EXPECT_NE(line_of("a = \"open\n").find("x.toml:1"), std::string::npos);
  EXPECT_NE(line_of("a = [1, 2\n").find("x.toml:1"), std::string::npos);
  EXPECT_NE(line_of("bad key = 1\n").find("x.toml:1"), std::string::npos);
}

TEST(RunConfig, LoadResolvesRelativeToFile) {
  const auto dir = oracle::scratch_dir("config");
  std::filesystem::create_directories(dir / "data");
  std::ofstream(dir / "run.toml") << "[data]\nmanifest = \"data\"\nmissing = \"nope\"\n";
  auto cfg = RunConfig::load(dir / "run.toml");
  EXPECT_EQ(cfg.base_dir(), dir);
  EXPECT_EQ(cfg.resolve(cfg.get_string("data.manifest")), dir / "data");
  EXPECT_EQ(cfg.resolve("/abs/path"), std::filesystem::path("/abs/path"));
  cfg.require_path("data.manifest");
  EXPECT_TRUE(cfg.violations().empty());
  cfg.require_path("data.missing");
  EXPECT_EQ(cfg.violations().size(), 1u);
  EXPECT_THROW(RunConfig::load(dir / "absent.toml"), ConfigError);
}
