#include <doctest.h>

#include "dexbody/config.hpp"
#include "dexbody/errors.hpp"

using namespace dexbody;

TEST_CASE("config parses top-level and sections") {
  const char* text =
      "# comment\n"
      "schema = 1\n"
      "name = demo\n"
      "scale = 0.5\n"
      "flag = true\n"
      "\n"
      "[block]\n"
      "values = 1 2 3\n"
      "words = alpha beta\n"
      "[block]\n"
      "values = 4 5\n";
  ConfigFile cfg = ConfigFile::parse_string(text, "mem");
  CHECK(cfg.top().get_int("schema") == 1);
  CHECK(cfg.top().get_str("name") == "demo");
  CHECK(cfg.top().get_num("scale") == doctest::Approx(0.5));
  CHECK(cfg.top().get_bool("flag"));
  CHECK(cfg.top().get_num("absent", 2.5) == doctest::Approx(2.5));

  auto blocks = cfg.named("block");
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0]->get_nums("values") == std::vector<double>{1, 2, 3});
  CHECK(blocks[0]->get_words("words") == std::vector<std::string>{"alpha", "beta"});
  CHECK(blocks[1]->get_nums("values") == std::vector<double>{4, 5});
  blocks[1]->require_all_consumed();
}

TEST_CASE("config rejects unknown keys once loaders finish") {
  ConfigFile cfg = ConfigFile::parse_string("schema = 1\nmystery = 3\n", "mem");
  CHECK(cfg.top().get_int("schema") == 1);
  CHECK_THROWS_AS(cfg.top().require_all_consumed(), SchemaError);
}

TEST_CASE("config errors carry origin and line") {
  ConfigFile cfg = ConfigFile::parse_string("a = x\n", "somewhere.cfg");
  try {
    cfg.top().get_num("a");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("somewhere.cfg") != std::string::npos);
    CHECK(msg.find("a") != std::string::npos);
  }
}

TEST_CASE("config rejects malformed lines and duplicates") {
  CHECK_THROWS_AS(ConfigFile::parse_string("just words\n", "mem"), SchemaError);
  CHECK_THROWS_AS(ConfigFile::parse_string("a = 1\na = 2\n", "mem"), SchemaError);
  CHECK_THROWS_AS(ConfigFile::parse_string("[unclosed\n", "mem"), SchemaError);
}

TEST_CASE("config missing key reports the key") {
  ConfigFile cfg = ConfigFile::parse_string("a = 1\n", "mem");
  CHECK_THROWS_WITH_AS(cfg.top().get_num("rate"), doctest::Contains("rate"), SchemaError);
}

TEST_CASE("unique section helper") {
  ConfigFile cfg = ConfigFile::parse_string("[one]\nk = 1\n[two]\nk = 2\n[two]\nk = 3\n", "mem");
  CHECK(cfg.unique("one") != nullptr);
  CHECK(cfg.unique("absent") == nullptr);
  CHECK_THROWS_AS(cfg.unique("two"), SchemaError);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.0, 1.0, -1.5, 0.1, 1.0 / 3.0, 1e-17, 123456.789, -9.81}) {
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("fnv1a64 matches reference vectors") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("atomic write then read back") {
  const std::string path = "/tmp/dexbody_cfg_test.txt";
  write_file_atomic(path, "payload = 9\n");
  CHECK(read_text_file(path) == "payload = 9\n");
  CHECK(file_exists(path));
  CHECK(!file_exists("/tmp/dexbody_cfg_missing_hopefully.txt"));
  CHECK_THROWS_AS(read_text_file("/tmp/dexbody_cfg_missing_hopefully.txt"), IoError);
}
