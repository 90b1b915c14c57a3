#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string lab = BIFOCUS_LAB_PATH;
const fs::path presets = BIFOCUS_PRESET_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(BIFOCUS_SCRATCH_DIR) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

struct LabRun {
  int code = -1;
  std::string out;
};

LabRun run(const std::string& args, const std::string& env = "") {
  const fs::path log = scratch("stdout-" + std::to_string(std::hash<std::string>{}(args + env)) + ".txt");
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" + lab + "' " + args + " > '" + log.string() + "' 2>/dev/null";
  const int status = std::system(cmd.c_str());
  LabRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, OrbitWritesOneRowPerStep) {
  const fs::path out = scratch("orbit-csv");
  ASSERT_EQ(run("run orbit --steps 1000 --x0 1e-3,0,0 --out " + q(out)).code, 0);
  ASSERT_TRUE(fs::exists(out / "orbit.csv"));
  EXPECT_EQ(count_lines(out / "orbit.csv"), 1001u);
  const std::string text = slurp(out / "orbit.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,X,Y,Z,r,det_jac");
  EXPECT_TRUE(fs::exists(out / "run.json"));
  EXPECT_EQ(json::parse(slurp(out / "run.json"))["status"], "ok");
}

TEST(Cli, OrbitAsJson) {
  const fs::path out = scratch("orbit-json");
  ASSERT_EQ(run("run orbit --steps 50 --x0 1e-3,0,0 --format json --out " + q(out)).code, 0);
  const json j = json::parse(slurp(out / "orbit.json"));
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), 50u);
  EXPECT_EQ(j[0]["step"], 0);
}

TEST(Cli, SameSeedSameBytesAcrossWorkerCounts) {
  const fs::path a = scratch("det-a"), b = scratch("det-b");
  ASSERT_EQ(run("run orbit --steps 300 --seed 11 --workers 1 --out " + q(a)).code, 0);
  ASSERT_EQ(run("run orbit --steps 300 --seed 11 --workers 4 --out " + q(b)).code, 0);
  for (const char* f : {"orbit.csv", "orbit_summary.json", "run.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, JacobianReport) {
  const fs::path out = scratch("jacobian");
  ASSERT_EQ(run("run jacobian --x0 1e-3,0,0 --out " + q(out)).code, 0);
  const json j = json::parse(slurp(out / "jacobian.json"));
  EXPECT_NEAR(std::fabs(j["det"].get<double>()), 2e-6, 4e-7);
}

TEST(Cli, ModuleErrorExitsOneWithARecord) {
  const fs::path out = scratch("stable");
  EXPECT_EQ(run("run orbit --steps 10 --x0 0,0,0.5 --out " + q(out)).code, 1);
  const json e = json::parse(slurp(out / "error.json"));
  EXPECT_EQ(e["code"], "OnStableManifold");
  EXPECT_EQ(e["exit_code"], 1);
}

TEST(Cli, DenjoyWithoutNormalContractionFails) {
  const fs::path out = scratch("gamma1");
  EXPECT_EQ(run("run denjoy-verify --config " + q(presets / "golden.json") + " --gamma 1 --out " + q(out)).code, 1);
  EXPECT_EQ(json::parse(slurp(out / "error.json"))["code"], "ContractionFailed");
}

TEST(Cli, InvalidParametersAreConfigErrors) {
  const fs::path out = scratch("badparams");
  EXPECT_EQ(run("run orbit --set params.alpha1=0.5 --out " + q(out)).code, 2);
  EXPECT_EQ(run("run orbit --set params.omega1=-1 --out " + q(out)).code, 2);
}

TEST(Cli, UnknownConfigKeyIsRejected) {
  const fs::path cfg = scratch("unknown-key.json");
  std::ofstream(cfg) << R"({"command": "orbit", "params": {"alpha1": 2, "alhpa2": 1}})";
  EXPECT_EQ(run("run orbit --config " + q(cfg) + " --out " + q(scratch("unknown-out"))).code, 2);
}

TEST(Cli, MalformedInvocationsExitTwo) {
  EXPECT_EQ(run("run orbit --no-such-flag").code, 2);
  EXPECT_EQ(run("run orbit --config " + q(scratch("missing.json"))).code, 2);
  EXPECT_EQ(run("run orbit --workers 0").code, 2);
  EXPECT_EQ(run("run orbit --format xml").code, 2);
  EXPECT_EQ(run("run orbit --steps 5", "LAB_LOG=chatty").code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST(Cli, PresetCatalog) {
  const LabRun r = run("presets");
  ASSERT_EQ(r.code, 0);
  EXPECT_GE(std::count(r.out.begin(), r.out.end(), '\n'), 4);
  for (const char* name : {"delta2", "near-resonant", "golden", "henon-grid"}) EXPECT_NE(r.out.find(name), std::string::npos) << name;
  EXPECT_EQ(run("presets --check").code, 0);
}

TEST(Cli, PresetByName) {
  const fs::path out = scratch("preset-name");
  ASSERT_EQ(run("run --preset near-resonant --steps 100 --out " + q(out)).code, 0);
  EXPECT_EQ(count_lines(out / "orbit.csv"), 101u);
}
