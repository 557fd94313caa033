#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ddscbf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  Outcome run(const std::string& args, const std::string& env = "") const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" DDSCBF_CLI "' " + args + " > '" + out +
                            "' 2> '" + err + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

const char* kPendulum = R"({"example": "pendulum", "N": 4, "n": 500, "dt": 0.01, "seed": 3, "trials": 10,
  "horizon_steps": 200, "epochs": 20})";

}  // namespace

TEST_F(Cli, SampleWritesRequestedRecords) {
  write("one.json", R"({"example": "pendulum", "N": 1, "n": 100, "dt": 0.01, "seed": 1})");
  const Outcome r = run("sample one.json --out ds.txt");
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path("ds.txt"));
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 2);
  EXPECT_TRUE(fs::exists(path("ds.txt.manifest.json")));
  EXPECT_NE(r.out.find("wrote 1 records"), std::string::npos);
}

TEST_F(Cli, MissingDtIsExitTwoNamingField) {
  write("bad.json", R"({"example": "pendulum", "N": 5, "n": 100, "seed": 1})");
  const Outcome r = run("sample bad.json --out ds.txt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("'dt'"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("ds.txt")));
}

TEST_F(Cli, WrongNoiseIsConfigError) {
  write("bad.json", R"({"example": "pendulum", "N": 5, "n": 100, "dt": 0.01, "seed": 1, "noise": 0.15})");
  EXPECT_EQ(run("sample bad.json --out ds.txt").code, 2);
}

TEST_F(Cli, TrainConstantTarget) {
  std::string ds = "# ddscbf-dataset v1 N=30 n=1 dt=0.01 seed=1 excluded=0 drift=euler mode=uniform region=-1:1,-1:1\n";
  for (int i = 0; i < 30; ++i) ds += std::to_string(-1.0 + i / 15.0) + " " + std::to_string(0.5 - i / 30.0) + " 0.25\n";
  write("const.txt", ds);
  const Outcome r = run("train const.txt --out w.txt --epochs 500");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pos = r.out.find("final mse ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LE(std::stod(r.out.substr(pos + 10)), 1e-6);
  EXPECT_TRUE(fs::exists(path("w.txt.loss.csv")));
  EXPECT_TRUE(fs::exists(path("w.txt.manifest.json")));
}

TEST_F(Cli, CorruptDatasetIsParseError) {
  write("bad.txt", "# ddscbf-dataset v1 N=2 region=-1:1,-1:1\n0 0 x\n");
  const Outcome r = run("train bad.txt --out w.txt");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, EvaluateVariants) {
  write("c.json", kPendulum);
  const Outcome cbf = run("evaluate c.json --variant cbf --out t.csv");
  ASSERT_EQ(cbf.code, 0) << cbf.err;
  EXPECT_NE(cbf.out.find("CBF"), std::string::npos);
  EXPECT_EQ(run("evaluate c.json --variant ddscbf --out t.csv").code, 2);
  EXPECT_EQ(run("evaluate c.json --variant nonsense").code, 2);

  ASSERT_EQ(run("sample c.json --out ds.txt").code, 0);
  ASSERT_EQ(run("train ds.txt --out w.txt --epochs 20").code, 0);
  const Outcome all = run("evaluate c.json --variant all --weights w.txt --out t.csv");
  ASSERT_EQ(all.code, 0) << all.err;
  std::ifstream in(path("t.csv"));
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 4);
}

TEST_F(Cli, DiagnoseEmitsOneRowPerN) {
  write("d.json", R"({"example": "pendulum", "dt": 0.01, "n_values": [100, 1000, 10000],
    "dt_values": [], "repetitions": 3})");
  const Outcome r = run("diagnose d.json --out d.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path("d.csv"));
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 4);
}

TEST_F(Cli, ReRunsAreByteIdentical) {
  write("c.json", kPendulum);
  ASSERT_EQ(run("sample c.json --out a.txt").code, 0);
  ASSERT_EQ(run("sample c.json --out b.txt").code, 0);
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  ASSERT_EQ(run("--seed 9 sample c.json --out c.txt").code, 0);
  EXPECT_NE(slurp(path("a.txt")), slurp(path("c.txt")));
  ASSERT_EQ(run("simulate c.json --variant scbf --trial 2 --out s1.csv").code, 0);
  ASSERT_EQ(run("simulate c.json --variant scbf --trial 2 --out s2.csv").code, 0);
  EXPECT_EQ(slurp(path("s1.csv")), slurp(path("s2.csv")));
}

TEST_F(Cli, OutputDirectoryOverride) {
  write("c.json", kPendulum);
  const Outcome r = run("sample c.json --out ds.txt", "DDSCBF_OUT_DIR=outdir");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("outdir/ds.txt")));
  EXPECT_TRUE(fs::exists(path("outdir/ds.txt.manifest.json")));
  EXPECT_FALSE(fs::exists(path("ds.txt")));
}
