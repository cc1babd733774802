#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

RunResult run_cli(const testutil::TempDir& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      quote(POSELIFT_CLI_PATH) + " " + args + " > " + quote(out.string()) + " 2> " + quote(err.string());
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::read_file(out);
  r.err = testutil::read_file(err);
  return r;
}

const std::string kSmall =
    " --seed 3 --segment-length 30 --n-trees 10 --threads 1";
const std::string kSynthSmall = " --subjects 2 --frames 1500 --mode-min-frames 40 --mode-max-frames 100";

void run_pipeline(const testutil::TempDir& dir, const fs::path& work) {
  const std::string w = quote(work.string());
  REQUIRE(run_cli(dir, "synth --out " + w + kSynthSmall + kSmall).exit_code == 0);
  for (const char* stage : {"lift", "segments", "train", "eval", "bias"}) {
    const auto r = run_cli(dir, std::string(stage) + " --dataset " + w + " --out " + w + kSmall);
    INFO(stage << ": " << r.err);
    REQUIRE(r.exit_code == 0);
  }
}

std::vector<fs::path> data_files(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.rfind("config.", 0) == 0) continue;  // snapshots record the output path
    files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

TEST_CASE("help and argument errors") {
  testutil::TempDir dir;
  const auto help = run_cli(dir, "--help");
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("synth") != std::string::npos);

  const auto bogus = run_cli(dir, "--bogus lift");
  CHECK(bogus.exit_code == 2);
  CHECK(bogus.err.find("error class=argument") != std::string::npos);

  const auto none = run_cli(dir, "");
  CHECK(none.exit_code == 2);
}

TEST_CASE("missing calibration is a config error") {
  testutil::TempDir dir;
  fs::create_directories(dir / "empty");
  const auto r = run_cli(dir, "lift --dataset " + quote((dir / "empty").string()) + " --out " +
                                  quote((dir / "o").string()));
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("error class=config") != std::string::npos);
  CHECK(r.err.find("calibration.json") != std::string::npos);
}

TEST_CASE("invalid configuration values and unknown config keys") {
  testutil::TempDir dir;
  const auto even = run_cli(dir, "lift --dataset x --out y --medfilt-window 4");
  CHECK(even.exit_code == 2);
  CHECK(even.err.find("error class=config") != std::string::npos);

  testutil::write_file(dir / "bad.json", R"({"seed": 1, "bogus": 2})");
  const auto bad = run_cli(dir, "segments --config " + quote((dir / "bad.json").string()));
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("unknown field 'bogus'") != std::string::npos);
}

TEST_CASE("pipeline errors map to their exit classes") {
  testutil::TempDir dir;
  const fs::path work = dir / "work";
  const std::string w = quote(work.string());
  REQUIRE(run_cli(dir, "synth --out " + w + kSynthSmall + kSmall).exit_code == 0);

  SUBCASE("eval before train is a state error") {
    const auto r = run_cli(dir, "eval --dataset " + w + " --out " + w + kSmall);
    CHECK(r.exit_code == 5);
    CHECK(r.err.find("error class=state") != std::string::npos);
  }

  SUBCASE("segments before lift is a state error") {
    const auto r = run_cli(dir, "segments --dataset " + w + " --out " + w + kSmall);
    CHECK(r.exit_code == 5);
    CHECK(r.err.find("error class=state") != std::string::npos);
  }

  SUBCASE("corrupt track row is a parse error naming the line") {
    const fs::path csv = work / "horse01" / "tracks" / "cam1.csv";
    std::string text = testutil::read_file(csv);
    std::size_t pos = 0;
    for (int i = 0; i < 5; ++i) pos = text.find('\n', pos) + 1;
    text.replace(pos, text.find('\n', pos) - pos, "0,withers,abc,1.0,0.9");
    testutil::write_file(csv, text);
    const auto r = run_cli(dir, "lift --dataset " + w + " --out " + w + kSmall);
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("error class=parse") != std::string::npos);
    CHECK(r.err.find("cam1.csv:6") != std::string::npos);
  }
}

TEST_CASE("flags override the config file") {
  testutil::TempDir dir;
  const fs::path work = dir / "work";
  testutil::write_file(dir / "cfg.json", R"({"seed": 99, "synth": {"subjects": 1, "frames": 50}})");
  const auto r = run_cli(dir, "synth --config " + quote((dir / "cfg.json").string()) + " --out " +
                                  quote(work.string()) + " --seed 5");
  REQUIRE(r.exit_code == 0);
  const std::string snap = testutil::read_file(work / "config.synth.json");
  CHECK(snap.find("\"seed\": 5") != std::string::npos);
  CHECK(fs::exists(work / "horse01"));
  CHECK_FALSE(fs::exists(work / "horse02"));

  const fs::path again = dir / "again";
  const auto repeat = run_cli(dir, "synth --config " + quote((work / "config.synth.json").string()) + " --out " +
                                       quote(again.string()));
  INFO(repeat.err);
  REQUIRE(repeat.exit_code == 0);
  CHECK(testutil::read_file(again / "horse01" / "tracks" / "cam3.csv") ==
        testutil::read_file(work / "horse01" / "tracks" / "cam3.csv"));
}

TEST_CASE("same seed twice gives byte-identical data files") {
  testutil::TempDir dir;
  run_pipeline(dir, dir / "a");
  run_pipeline(dir, dir / "b");
  const auto fa = data_files(dir / "a"), fb = data_files(dir / "b");
  REQUIRE(fa == fb);
  CHECK(fa.size() > 20);
  for (const auto& f : fa) {
    CAPTURE(f.string());
    CHECK(testutil::read_file(dir / "a" / f.string()) == testutil::read_file(dir / "b" / f.string()));
  }
  CHECK(fs::exists(dir / "a" / "eval.csv"));
  CHECK(fs::exists(dir / "a" / "bias.csv"));
  CHECK(fs::exists(dir / "a" / "models" / "eating.json"));

  const auto rerun = run_cli(dir, "synth --out " + quote((dir / "c").string()) + kSynthSmall +
                                      " --seed 4 --segment-length 30 --n-trees 10");
  REQUIRE(rerun.exit_code == 0);
  CHECK(testutil::read_file(dir / "a" / "horse01" / "tracks" / "cam1.csv") !=
        testutil::read_file(dir / "c" / "horse01" / "tracks" / "cam1.csv"));
}
