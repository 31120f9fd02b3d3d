#include "cli.hpp"
#include "helpers.hpp"

#include <fstream>
#include <sstream>

using namespace gcate;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "gcate");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return parse_and_dispatch(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kCounts = std::string(GCATE_TEST_DATA) + "/toy_counts.csv";
const std::string kDesign = std::string(GCATE_TEST_DATA) + "/toy_design.csv";

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"fit", "--help"}) == 0);
  CHECK(run({"fit", "--design", kDesign, "--rank", "2", "--out", "x.json"}) == 2);
  CHECK(run({"fit", "--counts", kCounts, "--design", kDesign, "--rank", "2", "--out", "x.json", "--bogus"}) == 2);
  CHECK(run({"fit", "--counts", kCounts, "--design", kDesign, "--rank", "2", "--family", "tweedie", "--out", "x.json"}) == 2);
  CHECK(run({}) == 2);
}

TEST_CASE("toy pipeline") {
  const auto dir = test::scratch_dir("cli");
  const std::string fit = (dir / "fit.json").string();
  REQUIRE(run({"fit", "--counts", kCounts, "--design", kDesign, "--family", "poisson", "--rank", "2", "--threads", "1",
               "--out", fit}) == 0);
  const std::string results = (dir / "results.tsv").string();
  REQUIRE(run({"test", "--fit", fit, "--coef", "1", "--lambda-n", "auto", "--trace", (dir / "trace.json").string(),
               "--out", results}) == 0);
  std::ifstream in(results);
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 100);

  const std::string again = (dir / "again.tsv").string();
  REQUIRE(run({"test", "--fit", fit, "--coef", "1", "--out", again}) == 0);
  CHECK(slurp(results) == slurp(again));

  CHECK(run({"test", "--fit", fit, "--coef", "9", "--out", again}) == 2);
  CHECK(run({"test", "--fit", (dir / "nope.json").string(), "--out", again}) == 2);

  const std::string jic = (dir / "jic.json").string();
  CHECK(run({"select-rank", "--counts", kCounts, "--design", kDesign, "--r-min", "1", "--r-max", "2", "--out", jic}) == 0);
  CHECK(slurp(jic).find("selected_r") != std::string::npos);
}

TEST_CASE("simulate is deterministic") {
  const auto dir = test::scratch_dir("sim");
  const std::string a = (dir / "a.json").string(), b = (dir / "b.json").string();
  const std::vector<std::string> common = {"simulate", "--scenario", "poisson-bulk", "--n", "40", "--p", "60",
                                           "--rank", "2", "--reps", "2", "--seed", "3"};
  auto with_out = [&](const std::string& out, const std::string& threads) {
    auto args = common;
    args.insert(args.end(), {"--threads", threads, "--out", out});
    return args;
  };
  REQUIRE(run(with_out(a, "1")) == 0);
  REQUIRE(run(with_out(b, "2")) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a).find("\"gcate\"") != std::string::npos);
}
