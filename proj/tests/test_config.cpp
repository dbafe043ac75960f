#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "tsdiff/config.hpp"

using tsdiff::ConfigMap;

TEST_CASE("parses key = value lines with comments and blanks") {
  const auto cfg = ConfigMap::parse_string(
      "# a comment\n"
      "\n"
      "seed = 42\n"
      "  train.lr =  1e-3  \n"
      "name = hello world\n");
  REQUIRE(cfg.get_int("seed", 0) == 42);
  REQUIRE(cfg.get_real("train.lr", 0.0) == 1e-3);
  REQUIRE(cfg.get_string("name", "") == "hello world");
}

TEST_CASE("missing separator reports the line number") {
  REQUIRE_THROWS_WITH(ConfigMap::parse_string("a = 1\nbroken line\n"),
                      Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("empty key is rejected") {
  REQUIRE_THROWS_AS(ConfigMap::parse_string("= 1\n"), std::invalid_argument);
}

TEST_CASE("typed getters validate their values and name the key") {
  const auto cfg = ConfigMap::parse_string("x = abc\n");
  REQUIRE_THROWS_WITH(cfg.get_real("x", 0.0), Catch::Matchers::ContainsSubstring("x"));
  REQUIRE_THROWS_AS(cfg.get_int("x", 0), std::invalid_argument);
  REQUIRE_THROWS_AS(cfg.get_bool("x", false), std::invalid_argument);
}

TEST_CASE("boolean spellings") {
  const auto cfg = ConfigMap::parse_string(
      "a = true\nb = 1\nc = yes\nd = on\ne = false\nf = 0\ng = no\nh = off\n");
  for (const char* k : {"a", "b", "c", "d"}) REQUIRE(cfg.get_bool(k, false));
  for (const char* k : {"e", "f", "g", "h"}) REQUIRE_FALSE(cfg.get_bool(k, true));
}

TEST_CASE("require_string throws when the key is absent") {
  const ConfigMap cfg;
  REQUIRE_THROWS_WITH(cfg.require_string("data.path"),
                      Catch::Matchers::ContainsSubstring("data.path"));
}

TEST_CASE("unknown keys are reported after consumption accounting") {
  const auto cfg = ConfigMap::parse_string("known = 1\nmystery.key = 2\n");
  (void)cfg.get_int("known", 0);
  REQUIRE(cfg.unconsumed() == std::vector<std::string>{"mystery.key"});
  REQUIRE_THROWS_WITH(cfg.reject_unknown_keys(),
                      Catch::Matchers::ContainsSubstring("mystery.key"));
  (void)cfg.get_int("mystery.key", 0);
  REQUIRE_NOTHROW(cfg.reject_unknown_keys());
}

TEST_CASE("serialize is sorted and round-trips exactly") {
  ConfigMap cfg;
  cfg.set("zeta", "last");
  cfg.set("alpha", "first");
  cfg.set_int("count", -7);
  cfg.set_real("pi", M_PI);
  cfg.set_real("tiny", 4.9406564584124654e-324);
  const std::string text = cfg.serialize();
  REQUIRE(text.find("alpha") < text.find("count"));
  REQUIRE(text.find("count") < text.find("zeta"));
  const auto back = ConfigMap::parse_string(text);
  REQUIRE(back == cfg);
  REQUIRE(back.get_real("pi", 0.0) == M_PI);
  REQUIRE(back.get_real("tiny", 0.0) == 4.9406564584124654e-324);
  REQUIRE(back.get_int("count", 0) == -7);
}

TEST_CASE("save and parse_file round-trip through disk") {
  ConfigMap cfg;
  cfg.set_real("value", 0.1);
  cfg.set("path", "/tmp/some where");
  const std::string path = "config_roundtrip_test.cfg";
  cfg.save(path);
  const auto back = ConfigMap::parse_file(path);
  REQUIRE(back == cfg);
  std::remove(path.c_str());
}

TEST_CASE("parse_file on a missing path throws") {
  REQUIRE_THROWS_AS(ConfigMap::parse_file("definitely/not/here.cfg"),
                    std::invalid_argument);
}

TEST_CASE("has does not mark a key consumed") {
  const auto cfg = ConfigMap::parse_string("k = 1\n");
  REQUIRE(cfg.has("k"));
  REQUIRE(cfg.unconsumed() == std::vector<std::string>{"k"});
}
