#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ddspin/config.hpp"
#include "ddspin/io.hpp"
#include "ddspin/runner.hpp"

using namespace ddspin;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ddspin_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DDSPIN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_path(const std::string& name) { return std::string(DDSPIN_SOURCE_DIR) + "/configs/" + name; }

std::string expect_config_error(const std::string& text) {
  try {
    parse_config(parse_json_text(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no ConfigError for " << text;
  return {};
}

}  // namespace

TEST(Quantity, ParsesUnitSuffixes) {
  EXPECT_EQ(parse_quantity("27 us").value, 27e-6);
  EXPECT_EQ(parse_quantity("100 us").value, 1e-4);
  EXPECT_EQ(parse_quantity("0.39 ms").value, 0.39e-3);
  EXPECT_DOUBLE_EQ(parse_quantity("2 nT").value, 2e-9);
  EXPECT_DOUBLE_EQ(parse_quantity("1 G").value, 1e-4);
  EXPECT_DOUBLE_EQ(parse_quantity("2.87 GHz").value, 2.87e9);
  const auto rate = parse_quantity("2e5 rad/s");
  EXPECT_DOUBLE_EQ(rate.value, 2e5);
  EXPECT_EQ(rate.second, -1.0);
  EXPECT_EQ(rate.rad, 1.0);
  const auto k = parse_quantity("19.4 nT/Hz^0.5");
  EXPECT_DOUBLE_EQ(k.value, 19.4e-9);
  EXPECT_EQ(k.tesla, 1.0);
  EXPECT_EQ(k.second, 0.5);
  EXPECT_THROW(parse_quantity("5"), std::invalid_argument);
  EXPECT_THROW(parse_quantity("5 furlongs"), std::invalid_argument);
  EXPECT_THROW(parse_quantity("us"), std::invalid_argument);
}

TEST(Config, RejectsUnknownKeyByName) {
  const std::string msg = expect_config_error(
      R"({"experiment":"sense","sense":{"sequence":{"kind":"hahn","tua_us":115},"times":{"start":"1 s","stop":"9 s","points":5}}})");
  EXPECT_NE(msg.find("tua_us"), std::string::npos) << msg;
  const std::string top = expect_config_error(R"({"experiment":"suppression","tua_us":3})");
  EXPECT_NE(top.find("tua_us"), std::string::npos) << top;
}

TEST(Config, RejectsBadValues) {
  EXPECT_NE(expect_config_error(R"({"experiment":"decay","preset":"bulk_cvd","shots":-5})").find("shots"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"({"experiment":"decay","field":[{"type":"ou","sigma_b":"1 nT","tau_c":"3 nT"}],"grid":{"times":["1 us"]}})")
                .find("tau_c"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"({"experiment":"decay","field":[{"type":"ou","sigma_b":"1 nT","tau_c":"3 us"}]})").find("grid"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"({"experiment":"decay","preset":"bulk_cvd","grid":{"times":["2 us","1 us"]}})").find("grid"),
            std::string::npos);
  EXPECT_NE(expect_config_error(R"({"experiment":"warp"})").find("experiment"), std::string::npos);
  EXPECT_NE(expect_config_error(R"({"experiment":"decay","preset":"basalt"})").find("preset"), std::string::npos);
  EXPECT_NE(expect_config_error(R"({"experiment":"pulse_error","pulse_error":{"flip_angle_error":0.6},"grid":{"times":["1 us"]}})")
                .find("flip_angle_error"),
            std::string::npos);
}

TEST(Config, ParseErrorReportsLineAndColumn) {
  try {
    parse_json_text("{\n  \"experiment\": \"decay\",\n  \"shots\": ,\n}");
    FAIL() << "expected a parse error";
  } catch (const ConfigParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GT(e.column(), 1u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Config, PresetExpandsToExplicitConfig) {
  const auto cfg = parse_config(parse_json_text(R"({"experiment":"decay","preset":"bulk_cvd"})"));
  ASSERT_TRUE(cfg.field.has_value());
  EXPECT_EQ(cfg.nv.t1, 5.93e-3);
  EXPECT_EQ(cfg.grid.size(), 20u);
  // The canonical form carries everything; reparsing it without the preset is a fixed point.
  const auto canonical = config_to_json(cfg);
  EXPECT_FALSE(canonical.contains("preset"));
  const auto again = parse_config(canonical);
  EXPECT_EQ(config_to_json(again).dump(), canonical.dump());
  EXPECT_EQ(again.field->digest(), cfg.field->digest());
  EXPECT_EQ(again.grid, cfg.grid);
}

TEST(Config, CanonicalRoundTripForEveryExample) {
  for (const auto& entry : fs::directory_iterator(std::string(DDSPIN_SOURCE_DIR) + "/configs")) {
    if (entry.path().extension() != ".json") continue;
    const auto cfg = parse_config(parse_json_text(read_text_file(entry.path())));
    const auto canonical = config_to_json(cfg);
    EXPECT_EQ(config_to_json(parse_config(canonical)).dump(), canonical.dump()) << entry.path();
  }
}

TEST(Validate, BulkPresetHasNoWarnings) {
  const auto rep = validate_config_text(R"({"experiment":"decay","preset":"bulk_cvd"})");
  EXPECT_TRUE(rep.valid) << rep.error;
  EXPECT_TRUE(rep.warnings.empty());
  EXPECT_EQ(rep.diagnostics.size(), 2u);
}

TEST(Validate, WarnsInMotionalNarrowingRegime) {
  const auto rep = validate_config_text(
      R"({"experiment":"decay","field":[{"type":"ou","sigma_b":"50 nT","tau_c":"1 ns"}],)"
      R"("sequence":{"kind":"cpmg","n":4},"grid":{"start":"800 us","stop":"4 ms","points":8}})");
  ASSERT_TRUE(rep.valid) << rep.error;
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_NE(rep.warnings[0].find("motional-narrowing"), std::string::npos);
}

TEST(Validate, NegativeShotsIsInvalid) {
  const auto rep = validate_config_text(R"({"experiment":"decay","preset":"bulk_cvd","shots":-1})");
  EXPECT_FALSE(rep.valid);
  EXPECT_NE(rep.error.find("shots"), std::string::npos);
  EXPECT_FALSE(validate_config_text("{\"experiment\": }").valid);
}

TEST(Runner, SuppressionTable) {
  const auto dir = scratch("suppression");
  std::ostringstream log;
  const auto cfg = parse_config(parse_json_text(R"({"experiment":"suppression"})"));
  ASSERT_EQ(run_experiment(cfg, dir, log), kExitOk);
  const auto csv = read_text_file(dir / "suppression.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "n,k,factor_exact_num,factor_exact_den,factor_float");
  int rows = 0;
  bool saw = false;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("1,1,", 0) == 0) {
      saw = true;
      EXPECT_EQ(line, "1,1,-1,2,-0.5");
    }
  }
  EXPECT_EQ(rows, 40);
  EXPECT_TRUE(saw);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
}

TEST(Cli, DecayIsByteReproducible) {
  const auto a = scratch("decay_a"), b = scratch("decay_b"), c = scratch("decay_c");
  const std::string cfg = config_path("bulk_cvd_hahn.json");
  ASSERT_EQ(run_cli("decay --config " + cfg + " --out " + a.string() + " --seed 42 --shots 500"), 0);
  ASSERT_EQ(run_cli("decay --config " + cfg + " --out " + b.string() + " --seed 42 --shots 500"), 0);
  ASSERT_EQ(run_cli("decay --config " + cfg + " --out " + c.string() + " --seed 42 --shots 500 --threads 8"), 0);
  for (const char* f : {"curve.csv", "curve.json", "fit.json", "manifest.json"}) {
    EXPECT_EQ(read_text_file(a / f), read_text_file(b / f)) << f;
    EXPECT_EQ(read_text_file(a / f), read_text_file(c / f)) << f;
  }
  const auto d = scratch("decay_d");
  ASSERT_EQ(run_cli("decay --config " + cfg + " --out " + d.string() + " --seed 43 --shots 500"), 0);
  EXPECT_NE(read_text_file(a / "curve.csv"), read_text_file(d / "curve.csv"));
}

TEST(Cli, ManifestReproducesTheRun) {
  const auto a = scratch("manifest_a"), b = scratch("manifest_b");
  ASSERT_EQ(run_cli("decay --config " + config_path("nanodiamond_hahn.json") + " --out " + a.string() + " --shots 300"), 0);
  const auto manifest = nlohmann::json::parse(read_text_file(a / "manifest.json"));
  write_text_file(b / "config.json", manifest["config"].dump(2));
  ASSERT_EQ(run_cli("decay --config " + (b / "config.json").string() + " --out " + b.string()), 0);
  EXPECT_EQ(read_text_file(a / "curve.csv"), read_text_file(b / "curve.csv"));
  const auto again = nlohmann::json::parse(read_text_file(b / "manifest.json"));
  EXPECT_EQ(again["inputs_digest"], manifest["inputs_digest"]);
  EXPECT_EQ(again["artifacts"], manifest["artifacts"]);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("exit");
  EXPECT_EQ(run_cli("validate --config " + config_path("bulk_cvd_hahn.json")), 0);
  EXPECT_EQ(run_cli("validate --config " + config_path("motional_narrowing.json")), 0);
  write_text_file(dir / "bad.json", R"({"experiment":"decay","preset":"bulk_cvd","tua_us":1})");
  EXPECT_EQ(run_cli("decay --config " + (dir / "bad.json").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("validate --config " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("spinlock --config " + config_path("bulk_cvd_hahn.json") + " --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("decay --config " + (dir / "missing.json").string() + " --out " + dir.string()), 4);
  EXPECT_EQ(run_cli("decay --bogus"), 2);
  EXPECT_EQ(run_cli(""), 2);
  // A flat curve cannot be fitted: artifacts are not produced, exit is numerical.
  write_text_file(dir / "flat.csv", "total_time_s,signal,std_error,n_pulses\n1e-6,0.5,0.01,1\n2e-6,0.5,0.01,1\n"
                                    "3e-6,0.5,0.01,1\n4e-6,0.5,0.01,1\n5e-6,0.5,0.01,1\n");
  write_text_file(dir / "fit.json", R"({"experiment":"fit","input":"flat.csv"})");
  EXPECT_EQ(run_cli("fit --config " + (dir / "fit.json").string() + " --out " + dir.string()), 3);
  EXPECT_EQ(run_cli("fit --config " + config_path("fit_hahn_curve.json") + " --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "fit.json"));
}
