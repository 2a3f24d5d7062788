#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "qtraj/io.hpp"
#include "qtraj/rng.hpp"

using namespace qtraj;

TEST_CASE("doubles are formatted in shortest round-trip form") {
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-2.5) == "-2.5");
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");

  const std::vector<double> samples = {
    1.0 / 3.0,    2.0 / 7.0, 6.02214076e23, 1.380649e-23, -0.0,
    1e308,        5e-324,    3.141592653589793,
    -123456.789, 0.3 + 0.3 + 0.3,
  };
  for (double v : samples) {
    std::string s = format_double(v);
    char* end = nullptr;
    double back = std::strtod(s.c_str(), &end);
    INFO("formatted '" << s << "'");
    CHECK(end == s.c_str() + s.size());
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
}

TEST_CASE("csv fields are quoted per rfc 4180") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("") == "");
  CHECK(csv_field("has space") == "has space");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("line\nbreak") == "\"line\nbreak\"");
  CHECK(csv_field("cr\r\nlf") == "\"cr\r\nlf\"");
}

TEST_CASE("csv tables emit crlf records and enforce row width") {
  CsvTable t({"t", "x", "label"});
  t.add_row({"0", "1.5", "start"});
  t.add_row({"0.1", "-2", "a,b"});
  CHECK(t.to_string() == "t,x,label\r\n0,1.5,start\r\n0.1,-2,\"a,b\"\r\n");

  CHECK_THROWS_AS(t.add_row({"1", "2"}), std::invalid_argument);
  CHECK_THROWS_AS(CsvTable(std::vector<std::string>{}), std::invalid_argument);
}

TEST_CASE("csv parsing inverts csv emission") {
  CsvTable t({"a", "b"});
  t.add_row({"plain", "a,b"});
  t.add_row({"quote \"q\"", "multi\r\nline"});
  t.add_row({"", "trailing"});

  CsvData d = parse_csv(t.to_string());
  REQUIRE(d.header == t.header);
  REQUIRE(d.rows.size() == t.rows.size());
  for (std::size_t i = 0; i < d.rows.size(); ++i) CHECK(d.rows[i] == t.rows[i]);

  SECTION("column lookup") {
    CHECK(d.column("a") == 0);
    CHECK(d.column("b") == 1);
    CHECK(d.column("missing") == -1);
    CHECK(require_column(d, "b") == 1);
    CHECK_THROWS_WITH(require_column(d, "zz"),
                      Catch::Matchers::ContainsSubstring("zz") &&
                          Catch::Matchers::ContainsSubstring("a, b"));
  }

  SECTION("lf-only input and missing final newline are accepted") {
    CsvData lf = parse_csv("h1,h2\n1,2\n3,4");
    CHECK(lf.header == std::vector<std::string>{"h1", "h2"});
    REQUIRE(lf.rows.size() == 2);
    CHECK(lf.rows[1] == std::vector<std::string>{"3", "4"});
  }

  SECTION("malformed input is rejected") {
    CHECK_THROWS_AS(parse_csv("a,\"unterminated"), std::invalid_argument);
    CHECK_THROWS_AS(parse_csv(""), std::invalid_argument);
  }
}

TEST_CASE("histogram bins partition the samples") {
  SECTION("counts sum to the sample count") {
    Rng rng(404);
    std::vector<double> xs(10000);
    for (double& x : xs) x = rng.gauss();
    CsvData h = parse_csv(histogram_table(xs, 40).to_string());
    REQUIRE(h.rows.size() == 40);
    std::size_t total = 0;
    for (const auto& r : h.rows) total += std::stoull(r[2]);
    CHECK(total == xs.size());
    CHECK(std::strtod(h.rows.front()[0].c_str(), nullptr) ==
          *std::min_element(xs.begin(), xs.end()));
    CHECK(std::strtod(h.rows.back()[1].c_str(), nullptr) ==
          *std::max_element(xs.begin(), xs.end()));
  }

  SECTION("edges are contiguous") {
    std::vector<double> xs = {0.0, 1.0, 2.0, 3.0, 10.0};
    CsvData h = parse_csv(histogram_table(xs, 5).to_string());
    REQUIRE(h.rows.size() == 5);
    for (std::size_t i = 1; i < h.rows.size(); ++i) CHECK(h.rows[i][0] == h.rows[i - 1][1]);
    std::size_t total = 0;
    for (const auto& r : h.rows) total += std::stoull(r[2]);
    CHECK(total == xs.size());
  }

  SECTION("degenerate and invalid inputs") {
    CsvData one = parse_csv(histogram_table({2.5, 2.5, 2.5}, 10).to_string());
    REQUIRE(one.rows.size() == 1);
    CHECK(one.rows[0][2] == "3");

    CHECK_THROWS_AS(histogram_table({}, 4), std::invalid_argument);
    CHECK_THROWS_AS(histogram_table({1.0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(histogram_table({1.0, std::numeric_limits<double>::infinity()}, 4),
                    std::invalid_argument);
  }
}

TEST_CASE("config text parses keys, comments, and blank lines") {
  const std::string text =
      "# run parameters\n"
      "gamma = 1.5\n"
      "\n"
      "  n_traj =  400   # inline comment\n"
      "label = stark run\n"
      "seed=11\n";
  ConfigMap cfg = parse_config_text(text);
  REQUIRE(cfg.size() == 4);
  CHECK(cfg.at("gamma") == "1.5");
  CHECK(cfg.at("n_traj") == "400");
  CHECK(cfg.at("label") == "stark run");
  CHECK(cfg.at("seed") == "11");

  SECTION("round trip through the echo format") {
    CHECK(parse_config_text(config_to_text(cfg)) == cfg);
    CHECK(config_to_text(cfg) ==
          "gamma = 1.5\nlabel = stark run\nn_traj = 400\nseed = 11\n");
  }

  SECTION("bad lines are reported with their line number") {
    CHECK_THROWS_WITH(parse_config_text("a = 1\nnonsense\n"),
                      Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THROWS_WITH(parse_config_text("= 3\n"),
                      Catch::Matchers::ContainsSubstring("empty key"));
    CHECK_THROWS_WITH(parse_config_text("a = 1\na = 2\n"),
                      Catch::Matchers::ContainsSubstring("duplicate key 'a'"));
  }

  SECTION("unknown keys are rejected with the valid set") {
    reject_unknown_keys(cfg, {"gamma", "n_traj", "label", "seed"});
    CHECK_THROWS_WITH(reject_unknown_keys(cfg, {"gamma", "n_traj", "seed"}),
                      Catch::Matchers::ContainsSubstring("unknown config keys: label") &&
                          Catch::Matchers::ContainsSubstring("gamma"));
  }
}

TEST_CASE("typed config getters validate their input") {
  ConfigMap cfg = parse_config_text("x = 2.5e-3\nn = -7\nseed = 12345\nword = abc\n");
  CHECK(config_double(cfg, "x") == Catch::Approx(2.5e-3));
  CHECK(config_int(cfg, "n") == -7);
  CHECK(config_u64(cfg, "seed") == 12345ull);
  CHECK(config_double(cfg, "absent", 9.0) == 9.0);
  CHECK(config_int(cfg, "absent", 3) == 3);

  CHECK_THROWS_WITH(config_double(cfg, "word"), Catch::Matchers::ContainsSubstring("word"));
  CHECK_THROWS_WITH(config_int(cfg, "x"), Catch::Matchers::ContainsSubstring("integer"));
  CHECK_THROWS_WITH(config_u64(cfg, "n"), Catch::Matchers::ContainsSubstring("unsigned"));
  CHECK_THROWS_WITH(config_value(cfg, "absent"), Catch::Matchers::ContainsSubstring("absent"));
}

TEST_CASE("fnv-1a checksums match the reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");
  CHECK(hex64(0x1ull) == "0000000000000001");
}

TEST_CASE("text files round trip through binary-mode io") {
  const std::string path = "io_roundtrip.tmp";
  const std::string content = "line one\r\nline two\n# not a comment here\n";
  write_text_file(path, content);
  CHECK(read_text_file(path) == content);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_text_file(path), std::runtime_error);
  CHECK_THROWS_AS(write_text_file("no_such_dir/zz.tmp", "x"), std::runtime_error);
}

TEST_CASE("run manifests serialize and parse losslessly") {
  RunManifest m;
  m.experiment = "stark-je";
  m.config = parse_config_text("gamma = 1\nn_traj = 400\nseed = 11\n");
  m.wall_time_s = 1.25;
  m.file_checksums["ledger.csv"] = hex64(fnv1a64("payload"));
  m.file_checksums["summary.json"] = hex64(fnv1a64("other"));

  const std::string text = m.to_json();
  auto j = nlohmann::json::parse(text);
  CHECK(j.at("experiment") == "stark-je");
  CHECK(j.at("code_version") == std::string(k_code_version));
  CHECK(j.at("config").at("seed") == "11");

  RunManifest back = RunManifest::from_json(text);
  CHECK(back.experiment == m.experiment);
  CHECK(back.config == m.config);
  CHECK(back.code_version == m.code_version);
  CHECK(back.wall_time_s == m.wall_time_s);
  CHECK(back.file_checksums == m.file_checksums);
}

TEST_CASE("run summaries expose the ledger metrics as json") {
  RunSummary s;
  s.protocol = "stark-je";
  s.n_traj = 400;
  s.seed = 11;
  s.ift_mean = 1.01;
  s.ift_stderr = 0.02;
  s.mean_entropy = 0.4;
  s.mean_W = -0.1;
  s.mean_Qcl = 0.05;
  // mean_Qq left NaN: serializes as null

  auto j = nlohmann::json::parse(s.to_json());
  for (const char* key : {"protocol", "n_traj", "seed", "ift_mean", "ift_stderr",
                          "mean_entropy", "mean_W", "mean_Qcl", "mean_Qq"}) {
    INFO(key);
    CHECK(j.contains(key));
  }
  CHECK(j.at("ift_mean").get<double>() == 1.01);
  CHECK(j.at("mean_Qq").is_null());
  CHECK(j.at("n_traj").get<long long>() == 400);
}
