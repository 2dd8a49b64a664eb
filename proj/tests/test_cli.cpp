#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"

using namespace signrec;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "signrec-cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("signrec_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST(PatternCounts, FlagOrderMapsToStreams) {
  const auto c = cli::parse_pattern_counts("1,2,3,4,5,6", {});
  // Lp, Lo, Ls, Rp, Ro, Rs -> left-position, left-orientation, left-shape, ...
  EXPECT_EQ(c[3], 1u);
  EXPECT_EQ(c[5], 2u);
  EXPECT_EQ(c[1], 3u);
  EXPECT_EQ(c[2], 4u);
  EXPECT_EQ(c[4], 5u);
  EXPECT_EQ(c[0], 6u);
  const auto all = cli::parse_pattern_counts("16", {});
  for (auto x : all) EXPECT_EQ(x, 16u);
  EXPECT_THROW(cli::parse_pattern_counts("1,2", {}), DataError);
  EXPECT_THROW(cli::parse_pattern_counts("0", {}), DataError);
  EXPECT_THROW(cli::parse_pattern_counts("x", {}), DataError);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--data", "/nonexistent.jsonl", "--out", "x.json"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, EmptyDatasetExitsTwo) {
  std::ofstream(path("empty.jsonl")).close();
  const auto r = run({"train", "--data", path("empty.jsonl"), "--out", path("m.json")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("no isolated training samples"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("m.json")));
}

TEST_F(CliTest, MalformedDatasetNamesTheLine) {
  std::ofstream(path("bad.jsonl")) << "{\"label\": \"A\", \"frames\": [[1]]}\n";
  const auto r = run({"train", "--data", path("bad.jsonl"), "--out", path("m.json")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("bad.jsonl:1:"), std::string::npos);
}

TEST_F(CliTest, FiveStateTrainingAndPatternFlags) {
  ASSERT_EQ(run({"synth", "--vocab", "4", "--reps", "6", "--seed", "3", "--out", dir_.string()}).code, 0);
  ASSERT_EQ(run({"train", "--data", path("isolated.jsonl"), "--states", "5", "--out", path("m.json")}).code, 0);
  const auto b = load_bundle(path("m.json"));
  ASSERT_EQ(b.signs.size(), 4u);
  for (const auto& s : b.signs) EXPECT_EQ(s.num_states(), 5u);
  EXPECT_EQ(b.provenance.seed, 1u);
  EXPECT_EQ(b.provenance.stages, std::vector<std::string>{"train"});

  ASSERT_EQ(run({"tie", "--model", path("m.json"), "--patterns", "2,3,4,5,6,7", "--out", path("t.json")}).code, 0);
  const auto t = load_bundle(path("t.json"));
  ASSERT_TRUE(t.tied && t.start);
  EXPECT_EQ(t.tied->codebook.pattern_count(3), 2u);
  EXPECT_EQ(t.tied->codebook.pattern_count(5), 3u);
  EXPECT_EQ(t.tied->codebook.pattern_count(1), 4u);
  EXPECT_EQ(t.tied->codebook.pattern_count(2), 5u);
  EXPECT_EQ(t.tied->codebook.pattern_count(4), 6u);
  EXPECT_EQ(t.tied->codebook.pattern_count(0), 7u);
  EXPECT_EQ(t.signs, b.signs);
  EXPECT_EQ(run({"train", "--data", path("isolated.jsonl"), "--states", "4", "--out", path("x.json")}).code,
            cli::kExitUsage);
}

TEST_F(CliTest, FullPipelineRoundTrip) {
  ASSERT_EQ(run({"synth", "--vocab", "6", "--reps", "6", "--sentences", "60", "--successors", "2",
                 "--max-length", "4", "--seed", "5", "--out", dir_.string()})
                .code,
            0);
  ASSERT_EQ(run({"train", "--data", path("isolated.jsonl"), "--jobs", "3", "--out", path("m.json")}).code, 0);
  ASSERT_EQ(run({"tie", "--model", path("m.json"), "--patterns", "max", "--out", path("t.json")}).code, 0);
  ASSERT_EQ(run({"train-transitions", "--model", path("t.json"), "--data", path("sentences.jsonl"), "--out",
                 path("c.json")})
                .code,
            0);
  const auto c = load_bundle(path("c.json"));
  EXPECT_TRUE(c.transitions && c.lm);
  EXPECT_EQ(c.provenance.stages, (std::vector<std::string>{"train", "tie", "train-transitions"}));

  const auto iso = run({"eval", "--model", path("c.json"), "--data", path("isolated.jsonl"), "--out", path("ri.json")});
  ASSERT_EQ(iso.code, 0) << iso.err;
  EXPECT_GE(read_json(path("ri.json"))["accuracy"].get<double>(), 0.95);

  const auto cont = run({"eval", "--model", path("c.json"), "--data", path("sentences.jsonl"), "--mode", "continuous",
                         "--out", path("rc.json")});
  ASSERT_EQ(cont.code, 0) << cont.err;
  EXPECT_NE(cont.out.find("Word correct rate"), std::string::npos);
  const auto report = read_json(path("rc.json"));
  EXPECT_GE(report["word_correct_rate"].get<double>(), 0.9);
  EXPECT_EQ(report["per_utterance"].size(), 60u);

  const auto dec = run({"decode-continuous", "--model", path("c.json"), "--data", path("sentences.jsonl"), "--out",
                        path("hyp.jsonl"), "--jobs", "4"});
  ASSERT_EQ(dec.code, 0);
  std::ifstream hyp(path("hyp.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(hyp, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["index"].get<std::size_t>(), n++);
    EXPECT_TRUE(j.contains("signs"));
  }
  EXPECT_EQ(n, 60u);
}

TEST_F(CliTest, SeededRunsAreReproducible) {
  for (const char* sub : {"a", "b"}) {
    const std::string out = path(sub);
    ASSERT_EQ(run({"synth", "--vocab", "3", "--reps", "3", "--sentences", "4", "--seed", "9", "--out", out}).code, 0);
    ASSERT_EQ(run({"train", "--data", out + "/isolated.jsonl", "--jobs", sub[0] == 'a' ? "1" : "4", "--out",
                   out + "/m.json"})
                  .code,
              0);
  }
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  EXPECT_EQ(slurp(path("a/isolated.jsonl")), slurp(path("b/isolated.jsonl")));
  EXPECT_EQ(slurp(path("a/sentences.jsonl")), slurp(path("b/sentences.jsonl")));
  EXPECT_EQ(slurp(path("a/m.json")), slurp(path("b/m.json")));
}

TEST_F(CliTest, ImpossibleBeamsReportRecognitionFailure) {
  ASSERT_EQ(run({"synth", "--vocab", "3", "--reps", "3", "--sentences", "3", "--out", dir_.string()}).code, 0);
  ASSERT_EQ(run({"train", "--data", path("isolated.jsonl"), "--states", "5", "--out", path("m.json")}).code, 0);
  // A single-frame utterance cannot pass through any 5-state sign.
  std::ofstream(path("short.jsonl")) << "{\"label\": [\"S000\"], \"frames\": [[" << [] {
    std::string row;
    for (int i = 0; i < 48; ++i) row += (i ? ",0.5" : "0.5");
    return row;
  }() << "]]}\n";
  const auto r = run({"decode-continuous", "--model", path("m.json"), "--data", path("short.jsonl"), "--out",
                      path("h.jsonl")});
  EXPECT_EQ(r.code, cli::kExitRecognition);
}
