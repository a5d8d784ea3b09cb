#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "irfkit/errors.hpp"
#include "irfkit/harness/commands.hpp"

namespace fs = std::filesystem;
using namespace irfkit;
using namespace irfkit::harness;

namespace {

const char* kTwoMap = R"({
  "schema_version": 1,
  "seed": 7,
  "system": {"type": "twomap1d"},
  "simulate": {"horizon": 10}
})";

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Fresh directory under the build tree, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    static std::mt19937_64 gen(std::random_device{}());
    path = fs::temp_directory_path() / ("irfkit_test_" + std::to_string(gen()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name, std::ios::binary) << text;
    return (path / name).string();
  }
  std::string read(const std::string& name) const {
    std::ifstream in(path / name, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

Json certificate(const std::string& config, std::uint64_t seed = 1, int* exit_code = nullptr) {
  const RunOutput out = run_verify(parse_config(config), seed, 2);
  if (exit_code) *exit_code = out.exit_code;
  return Json::parse(out.files.at("certificate.json"));
}

const Json& entry(const Json& cert, const std::string& id) {
  for (const auto& c : cert["conditions"]) {
    if (c["id"] == id) return c;
  }
  throw std::runtime_error("no entry " + id);
}

}  // namespace

TEST(Config, DigestIsSha256OfBytes) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::string edited = kTwoMap;
  edited[edited.find("10")] = '2';
  EXPECT_NE(parse_config(kTwoMap).digest, parse_config(edited).digest);
}

TEST(Config, SyntaxErrorReportsPosition) {
  try {
    (void)parse_config("{\n  \"schema_version\": 1,\n  \"seed\": ,\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("column"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsSchemaAndUnknownKeys) {
  EXPECT_THROW((void)parse_config(R"({"schema_version": 2, "system": {"type": "twomap1d"}})"), ConfigError);
  EXPECT_THROW((void)parse_config(R"({"system": {"type": "twomap1d"}})"), ConfigError);
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d", "slope": 2},
                                    "simulate": {"horizon": 1}})");
  try {
    (void)run_simulate(c, 0, 1);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("config.system"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("slope"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownComponentExitsTwo) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"schema_version": 1, "system": {"type": "pid2"}, "simulate": {"horizon": 5}})");
  std::ostringstream log;
  RunOptions o;
  o.config_path = cfg;
  o.out = (d.path / "out").string();
  EXPECT_EQ(run_command("simulate", o, log), kExitConfig);
  EXPECT_NE(log.str().find("config.system.type"), std::string::npos) << log.str();
  EXPECT_NE(log.str().find("pid2"), std::string::npos);
  EXPECT_FALSE(fs::exists(d.path / "out" / "manifest.json"));
}

TEST(Config, StateShapesAreChecked) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
                                    "simulate": {"horizon": 3, "initial": [1, 2]}})");
  EXPECT_THROW((void)run_simulate(c, 0, 1), ConfigError);
}

TEST(Simulate, ElevenRowsAndDeterministic) {
  TempDir d;
  const std::string cfg = d.write("c.json", kTwoMap);
  RunOptions o;
  o.config_path = cfg;
  std::ostringstream log;
  o.out = (d.path / "a").string();
  ASSERT_EQ(run_command("simulate", o, log), kExitOk) << log.str();
  o.out = (d.path / "b").string();
  ASSERT_EQ(run_command("simulate", o, log), kExitOk) << log.str();
  const std::string a = d.read("a/trajectory_0.csv");
  EXPECT_EQ(a, d.read("b/trajectory_0.csv"));
  const auto ls = lines(a);
  ASSERT_EQ(ls.size(), 13u);  // digest line, header, k = 0..10
  EXPECT_EQ(ls[0], "# config_digest=" + sha256_hex(kTwoMap) + " seed=7");
  EXPECT_EQ(ls[1], "k,x0,pi0,map");
  EXPECT_EQ(ls[2].substr(0, 4), "0,0,");
  EXPECT_EQ(d.read("a/config.json"), kTwoMap);
  const Json m = Json::parse(d.read("a/manifest.json"));
  EXPECT_EQ(m["seed"], 7);
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["config_digest"], sha256_hex(kTwoMap));
}

TEST(Simulate, SeedOverrideChangesPath) {
  const Config c = parse_config(kTwoMap);
  const auto a = run_simulate(c, 7, 1).files.at("trajectory_0.csv");
  const auto b = run_simulate(c, 8, 1).files.at("trajectory_0.csv");
  EXPECT_NE(a, b);
}

TEST(Simulate, ZeroHorizonSingleRow) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
                                    "simulate": {"horizon": 0, "initial": [0.25]}})");
  const auto ls = lines(run_simulate(c, 0, 1).files.at("trajectory_0.csv"));
  ASSERT_EQ(ls.size(), 3u);
  EXPECT_EQ(ls[2], "0,0.25,0,");  // signal at k = 0, no selection yet
}

TEST(Simulate, TrajectoriesIndependentOfThreads) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
                                    "simulate": {"horizon": 50, "trajectories": 12}})");
  const auto a = run_simulate(c, 3, 1).files;
  const auto b = run_simulate(c, 3, 4).files;
  EXPECT_EQ(a.size(), 12u);
  EXPECT_TRUE(a.count("trajectory_00.csv"));
  EXPECT_EQ(a, b);
}

TEST(Simulate, NumericalFailureExitsThree) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"schema_version": 1,
    "system": {"type": "generic", "dim": 1, "maps": [{"A": [[1e200]]}]},
    "simulate": {"horizon": 10, "initial": [1e200]}})");
  RunOptions o;
  o.config_path = cfg;
  o.out = (d.path / "out").string();
  std::ostringstream log;
  EXPECT_EQ(run_command("simulate", o, log), kExitNumeric);
  EXPECT_NE(log.str().find("numerical failure"), std::string::npos) << log.str();
  const Json m = Json::parse(d.read("out/manifest.json"));
  EXPECT_EQ(m["status"], "numeric_failure");
  // The prefix up to the failure is kept.
  EXPECT_GE(lines(d.read("out/trajectory_0.csv")).size(), 3u);
}

TEST(Diagnose, SharedCouplingOfIdenticalStartsIsZero) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
    "diagnose": {"experiments": [{"id": "self", "kind": "coupling", "mode": "shared", "trials": 200,
                                  "horizon": 10, "x0_a": [1], "x0_b": [1]}]}})");
  const auto ls = lines(run_diagnose(c, 5, 2).files.at("diag_self.csv"));
  int w2 = 0;
  for (const auto& l : ls) {
    if (l.find(",w2,") == std::string::npos) continue;
    ++w2;
    EXPECT_EQ(l.substr(l.rfind(',') + 1), "0") << l;
  }
  EXPECT_EQ(w2, 11);
}

TEST(Diagnose, IndependentCouplingRate) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
    "diagnose": {"experiments": [{"id": "c", "kind": "coupling", "trials": 2000, "horizon": 30,
                                  "x0_a": [0], "x0_b": [2]}]}})");
  const auto ls = lines(run_diagnose(c, 11, 2).files.at("diag_c.csv"));
  double rate = -1.0;
  for (const auto& l : ls) {
    if (l.rfind("c,,rate,", 0) == 0) rate = std::stod(l.substr(8));
  }
  EXPECT_GT(rate, 0.4);
  EXPECT_LE(rate, 0.55);
}

TEST(Diagnose, MomentsAndDuplicateIds) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
    "diagnose": {"experiments": [{"id": "m", "kind": "moments", "runs": 4, "horizon": 20000, "burn_in": 100}]}})");
  const auto ls = lines(run_diagnose(c, 2, 2).files.at("diag_m.csv"));
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[1], "experiment,k,metric,value");
  EXPECT_EQ(ls[2], "m,,samples,79604");
  EXPECT_NEAR(std::stod(ls[3].substr(ls[3].rfind(',') + 1)), 1.0, 0.03);
  EXPECT_NEAR(std::stod(ls[4].substr(ls[4].rfind(',') + 1)), 1.0 / 3.0, 0.03);

  const Config dup = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
    "diagnose": {"experiments": [{"id": "m", "kind": "moments", "horizon": 5},
                                 {"id": "m", "kind": "moments", "horizon": 5}]}})");
  EXPECT_THROW((void)run_diagnose(dup, 0, 1), ConfigError);
}

TEST(Diagnose, FleetLatticePhaseSeparatesControllers) {
  const std::string common = R"("diagnose": {"experiments": [{"id": "e", "kind": "ergodicity",
      "initials": {"random_controller": {"count": 4, "lo": -0.5, "hi": 0.5, "seed": 12345, "filter": 0.5}},
      "seeds": [1, 2], "horizon": 3000, "burn_in": 200,
      "observable": {"type": "lattice_phase", "spacing": 0.001}}]}})";
  const auto spread = [&](const std::string& ctrl) {
    const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "phev_fleet", "agents": 10,
        "filter": {"type": "max_window", "window": 5}, "controller": )" + ctrl + "}, " + common);
    double s = -1.0;
    for (const auto& l : lines(run_diagnose(c, 0, 2).files.at("diag_e.csv"))) {
      if (l.rfind("e,,spread,", 0) == 0) s = std::stod(l.substr(10));
    }
    return s;
  };
  const double integ = spread(R"({"type": "integrator", "gain": 0.1, "reference": 0.05})");
  const double lag = spread(R"({"type": "lag", "gain": 0.1, "pole": 0.99, "reference": 0.05})");
  EXPECT_GT(integ, 10.0 * lag) << integ << " " << lag;
}

TEST(Verify, TwoMapHullConstants) {
  const Json cert = certificate(R"({"schema_version": 1, "system": {"type": "twomap1d"},
    "verify": {"conditions": [
      {"id": "hull", "kind": "hull_bound", "starts": [[-5], [5]], "trials": 500, "horizon": 200}]}})");
  const Json& h = entry(cert, "hull");
  EXPECT_EQ(h["verdict"], "pass");
  EXPECT_EQ(h["condition"], "hull_bound");
  EXPECT_NEAR(h["constants"]["lambda"].get<double>(), 0.5, 1e-9);
  EXPECT_NEAR(h["constants"]["R"].get<double>(), 2.0, 1e-9);
  EXPECT_NEAR(h["constants"]["D"].get<double>(), 2.0, 1e-9);
  EXPECT_EQ(cert["schema_version"], 1);
  EXPECT_EQ(cert["system"], "twomap1d");
}

TEST(Verify, ErrorsBecomeEntriesWithExitFour) {
  int code = 0;
  const Json cert = certificate(R"({"schema_version": 1,
    "system": {"type": "generic", "dim": 1, "maps": [{"A": [[1.2]]}, {"A": [[0.5]], "b": [1]}]},
    "verify": {"conditions": [
      {"id": "floor", "kind": "probability_floor"},
      {"id": "iva", "kind": "lipschitz_floor_product", "l": [0.5, 0.5], "delta": 0.6},
      {"id": "canon", "kind": "canonical", "starts": [[-1], [1]]}]}})", 1, &code);
  EXPECT_EQ(code, kExitPartial);
  EXPECT_EQ(entry(cert, "floor")["verdict"], "pass");
  EXPECT_EQ(entry(cert, "iva")["error"]["type"], "InfeasibleFloorError");
  EXPECT_EQ(entry(cert, "canon")["error"]["type"], "NotContractiveError");
}

TEST(Verify, ThreadIndependentCertificate) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
    "verify": {"conditions": [
      {"id": "hull", "kind": "hull_bound", "starts": [[-5], [5]], "trials": 300, "horizon": 100},
      {"id": "kappa", "kind": "signal_contraction", "domain": {"lo": -5, "hi": 5}},
      {"id": "drift", "kind": "drift", "V": {}, "paths": 50, "horizon": 20, "inner_samples": 200,
       "enumerate_limit": 0}]}})");
  EXPECT_EQ(run_verify(c, 4, 1).files, run_verify(c, 4, 3).files);
}

TEST(Verify, UnknownConditionKindIsConfigError) {
  const Config c = parse_config(R"({"schema_version": 1, "system": {"type": "twomap1d"},
    "verify": {"conditions": [{"id": "x", "kind": "proof"}]}})");
  EXPECT_THROW((void)run_verify(c, 0, 1), ConfigError);
}

TEST(Report, DetectsModifiedOutputs) {
  TempDir d;
  const std::string cfg = d.write("c.json", kTwoMap);
  RunOptions o;
  o.config_path = cfg;
  o.out = (d.path / "run").string();
  std::ostringstream log;
  ASSERT_EQ(run_command("simulate", o, log), kExitOk);
  RunOptions r;
  r.out = o.out;
  EXPECT_EQ(run_command("report", r, log), kExitOk) << log.str();
  d.write("run/trajectory_0.csv", "tampered\n");
  std::ostringstream log2;
  EXPECT_EQ(run_command("report", r, log2), kExitConfig);
  EXPECT_NE(log2.str().find("trajectory_0.csv: MODIFIED"), std::string::npos) << log2.str();
}
