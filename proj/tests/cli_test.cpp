#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "test_support.hpp"

#ifndef MIDIMINER_CLI_PATH
#error "MIDIMINER_CLI_PATH must name the midiminer binary"
#endif

namespace fs = std::filesystem;

namespace {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "midiminer_cli_test"; }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    ASSERT_EQ(run("synth --out " + (root() / "corpus").string() + " --songs 40 --seed 3").exit_code, 0);
    ASSERT_EQ(run("train --corpus " + (root() / "corpus").string() + " --labels " +
                  (root() / "corpus" / "labels.csv").string() + " --out " + (root() / "models").string() +
                  " --trees 15")
                  .exit_code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root()); }

  static Result run(const std::string& args) {
    const fs::path err = root() / "stderr.txt";
    const std::string command = std::string("\"") + MIDIMINER_CLI_PATH + "\" " + args + " 2>\"" + err.string() + "\"";
    Result r;
    FILE* pipe = popen(command.c_str(), "r");
    if (pipe == nullptr) return r;
    char buffer[4096];
    std::size_t n;
    while ((n = fread(buffer, 1, sizeof buffer, pipe)) > 0) r.out.append(buffer, n);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
  }

  static std::string song(int i) {
    char name[32];
    std::snprintf(name, sizeof name, "song_%04d.mid", i);
    return (root() / "corpus" / name).string();
  }
  static std::string models() { return (root() / "models").string(); }
};

}  // namespace

TEST_F(Cli, VersionAndHelp) {
  const Result v = run("--version");
  EXPECT_EQ(v.exit_code, 0);
  EXPECT_NE(v.out.find(std::string(midiminer::kToolVersion)), std::string::npos);
  EXPECT_EQ(run("--help").exit_code, 0);
  EXPECT_EQ(run("tension --help").exit_code, 0);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  EXPECT_EQ(run("tension").exit_code, 2);
  EXPECT_EQ(run("tension " + song(0) + " --window 0").exit_code, 2);
  EXPECT_EQ(run("tension " + song(0) + " --window -1").exit_code, 2);
  EXPECT_EQ(run("classify " + song(0) + " --model-dir " + (root() / "nope").string()).exit_code, 2);
  EXPECT_EQ(run("batch " + (root() / "corpus").string() + " classify --out-dir " + (root() / "b0").string()).exit_code,
            2);
}

TEST_F(Cli, TensionPrintsJson) {
  const Result r = run("tension " + song(1));
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["per_bar"]["strain"].size(), j["bars"].get<std::size_t>());
}

TEST_F(Cli, TensionWritesFiles) {
  const fs::path dir = root() / "tension_out";
  fs::create_directories(dir);
  const Result r = run("tension " + song(2) + " --window 1 --rekey --out-json " + (dir / "a.json").string() +
                    " --out-csv " + (dir / "a.csv").string() + " --out-svg " + (dir / "a.svg").string() +
                    " --svg-width 500");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const auto j = nlohmann::json::parse(slurp(dir / "a.json"));
  EXPECT_EQ(j["window_beats"], 1.0);
  EXPECT_EQ(slurp(dir / "a.csv").rfind("window_start_beat,bar,diameter,momentum,strain\n", 0), 0u);
  const std::string svg = slurp(dir / "a.svg");
  EXPECT_NE(svg.find("width=\"500.00\""), std::string::npos);
}

TEST_F(Cli, KeyTextAndJson) {
  const Result text = run("key " + song(3));
  ASSERT_EQ(text.exit_code, 0) << text.err;
  EXPECT_NE(text.out.find("(confidence "), std::string::npos);
  const Result json = run("key " + song(3) + " --json");
  ASSERT_EQ(json.exit_code, 0);
  const auto j = nlohmann::json::parse(json.out);
  EXPECT_NE(text.out.find(j["key"]["tonic_name"].get<std::string>() + " " + j["key"]["mode"].get<std::string>()),
            std::string::npos);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  const fs::path empty = root() / "empty.mid";
  std::ofstream(empty).close();
  const Result r = run("key " + empty.string());
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
  const fs::path drums = root() / "drums.mid";
  midiminer::MidiFile file = mmtest::file_from_parts({});
  file.tracks.push_back(midiminer::make_note_track("kit", std::vector<midiminer::Note>{mmtest::note(0, 1, 36, 100, 0, 9)}, file.ppq,
                                                   std::nullopt, 9));
  midiminer::renumber_tracks(file);
  midiminer::write_file_bytes(drums.string(), midiminer::write_smf(file));
  const Result d = run("tension " + drums.string());
  EXPECT_EQ(d.exit_code, 1);
  EXPECT_NE(d.err.find("NoNotes"), std::string::npos);
  EXPECT_EQ(run("key " + (root() / "missing.mid").string()).exit_code, 1);
}

TEST_F(Cli, ClassifyAndExtract) {
  const Result c = run("classify " + song(4) + " --model-dir " + models() + " --json");
  ASSERT_EQ(c.exit_code, 0) << c.err;
  const auto j = nlohmann::json::parse(c.out);
  EXPECT_TRUE(j.contains("melody"));
  EXPECT_TRUE(j.contains("bass"));
  EXPECT_TRUE(j.contains("harmony"));
  const fs::path out = root() / "extracted.mid";
  const Result e = run("extract " + song(4) + " --model-dir " + models() + " --out " + out.string());
  ASSERT_EQ(e.exit_code, 0) << e.err;
  const auto extracted = midiminer::parse_smf(midiminer::read_file_bytes(out.string()));
  EXPECT_EQ(extracted.format, 1);
  EXPECT_GE(extracted.tracks.size(), 2u);
}

TEST_F(Cli, ModelDirFromEnvironment) {
  const Result r = run("classify " + song(5));
  EXPECT_EQ(r.exit_code, 2);
  const std::string with_env = "MIDIMINER_MODEL_DIR=\"" + models() + "\" ";
  const std::string command =
      with_env + "\"" + MIDIMINER_CLI_PATH + "\" classify " + song(5) + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 0);
}

TEST_F(Cli, BatchIsolatesCorruptFiles) {
  const fs::path in = root() / "batch_in";
  fs::create_directories(in);
  for (int i = 0; i < 5; ++i) fs::copy_file(song(i), in / ("s" + std::to_string(i) + ".mid"));
  std::ofstream(in / "corrupt.mid") << "MThd garbage";
  const fs::path out = root() / "batch_out";
  const Result r = run("batch " + in.string() + " tension --out-dir " + out.string() + " --jobs 3");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(summary["processed"], 6);
  EXPECT_EQ(summary["succeeded"], 5);
  ASSERT_EQ(summary["failures"].size(), 1u);
  EXPECT_NE(summary["failures"][0]["input"].get<std::string>().find("corrupt.mid"), std::string::npos);
  for (int i = 0; i < 5; ++i) {
    EXPECT_TRUE(fs::exists(out / ("s" + std::to_string(i) + ".json")));
    EXPECT_TRUE(fs::exists(out / ("s" + std::to_string(i) + ".csv")));
  }
  const Result x = run("batch " + in.string() + " extract --out-dir " + (root() / "batch_x").string() +
                    " --model-dir " + models());
  ASSERT_EQ(x.exit_code, 0) << x.err;
  EXPECT_TRUE(fs::exists(root() / "batch_x" / "s0.mid"));
}

TEST_F(Cli, TrainIsReproducible) {
  const std::string args = "train --corpus " + (root() / "corpus").string() + " --labels " +
                           (root() / "corpus" / "labels.csv").string() + " --trees 5 --out ";
  const Result a = run(args + (root() / "m1").string());
  const Result b = run(args + (root() / "m2").string() + " --threads 3");
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("F1 score"), std::string::npos);
  for (const char* role : {"melody", "bass", "harmony"}) {
    EXPECT_EQ(slurp(root() / "m1" / (std::string(role) + ".mmrf")), slurp(root() / "m2" / (std::string(role) + ".mmrf")));
  }
}

TEST_F(Cli, ConfigChangesParameters) {
  const fs::path config = root() / "mm.conf";
  std::ofstream(config) << "# spiral\nspiral.h = 0.5\n";
  const Result a = run("tension " + song(6));
  const Result b = run("--config " + config.string() + " tension " + song(6));
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_NE(a.out, b.out);
  std::ofstream(config) << "spiral.r = -2\n";
  EXPECT_EQ(run("--config " + config.string() + " tension " + song(6)).exit_code, 1);
}
