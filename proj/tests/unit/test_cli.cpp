#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rwkvir/commands.hpp"
#include "rwkvir/error.hpp"

using namespace rwkvir;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rwkvir_cli_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "rwkvir");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(invoke({"--help"}).code == 0);
  CHECK(invoke({"train", "--help"}).code == 0);
  CHECK(invoke({}).code == cli::kUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kUsage);
  CHECK(invoke({"synth"}).code == cli::kUsage);
}

TEST_CASE("exception to exit code mapping") {
  CHECK(cli::exit_code_for(InfeasibleSelectionError("x", 1, 2)) == 3);
  CHECK(cli::exit_code_for(EmptyInputError("x")) == 2);
  CHECK(cli::exit_code_for(IoError("x")) == 2);
  CHECK(cli::exit_code_for(NumericError("x")) == 4);
  CHECK(cli::exit_code_for(ConfigError("x")) == 1);
  CHECK(cli::exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("dotted overrides") {
  const auto j = nlohmann::json::parse(cli::apply_override(R"({"train": {"seed": 1}})", "train.seed=9"));
  CHECK(j["train"]["seed"] == 9);
  const auto s = nlohmann::json::parse(cli::apply_override("{}", "model.wkv=cross"));
  CHECK(s["model"]["wkv"] == "cross");
  const auto a = nlohmann::json::parse(cli::apply_override("{}", "ratios=[6,1,1]"));
  CHECK(a["ratios"].size() == 3);
  CHECK_THROWS_AS(cli::apply_override("{}", "no_equals_sign"), ConfigError);
}

TEST_CASE("synth, complexity and curate from the command line") {
  TempDir d("pipeline");
  const auto src = (d.path / "src").string();
  REQUIRE(invoke({"synth", "--seed", "2", "--n", "12", "--size", "32", "--out", src}).code == 0);
  CHECK(fs::exists(d.path / "src" / "synth_0011.png"));

  const auto c = invoke({"complexity", src, "--threshold", "median"});
  REQUIRE(c.code == 0);
  std::istringstream rows(c.out);
  std::size_t n = 0;
  for (std::string line; std::getline(rows, line); ++n) CHECK(nlohmann::json::parse(line).contains("complexity"));
  CHECK(n == 12);
  CHECK(c.err.find("below") != std::string::npos);

  TempDir empty("empty");
  CHECK(invoke({"complexity", empty.path.string()}).code == cli::kEmptyInput);

  const auto base = std::vector<std::string>{"curate", src, "--seed", "3", "--set", "min_side=16", "--set", "blur_min=0",
                                             "--set", "flat_max=1", "--set", "threshold_mode=median", "--set", "scales=[2]"};
  auto run1 = base;
  run1.insert(run1.end(), {"--out", (d.path / "a").string()});
  auto run2 = base;
  run2.insert(run2.end(), {"--out", (d.path / "b").string()});
  REQUIRE(invoke(run1).code == 0);
  REQUIRE(invoke(run2).code == 0);
  CHECK(slurp(d.path / "a" / "manifest.json") == slurp(d.path / "b" / "manifest.json"));

  auto bad_key = base;
  bad_key.insert(bad_key.end(), {"--out", (d.path / "c").string(), "--set", "minside=3"});
  const auto bk = invoke(bad_key);
  CHECK(bk.code == cli::kUsage);
  CHECK(bk.err.find("min_side") != std::string::npos);

  auto too_many = base;
  too_many.insert(too_many.end(), {"--out", (d.path / "d").string(), "--n", "40"});
  const auto tm = invoke(too_many);
  CHECK(tm.code == cli::kInfeasible);

  const auto ev = invoke({"eval", "--manifest", (d.path / "a" / "manifest.json").string(), "--preset", "toy", "--out",
                       (d.path / "eval").string()});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("bicubic") != std::string::npos);
  CHECK(fs::exists(d.path / "eval" / "eval.json"));

  const auto tr = invoke({"train", "--manifest", (d.path / "a" / "manifest.json").string(), "--out",
                       (d.path / "run").string(), "--preset", "toy", "--set", "train.total_iters=2", "--set",
                       "train.patch=8", "--set", "train.batch_size=1"});
  CHECK(tr.code == 0);
  CHECK(fs::exists(d.path / "run" / "model.ckpt"));
  CHECK(invoke({"train", "--manifest", (d.path / "a" / "manifest.json").string(), "--out", (d.path / "x").string(),
             "--set", "train.bogus=1"})
            .code == cli::kUsage);
}

TEST_CASE("kernel benchmark CSV") {
  const auto b = invoke({"bench-kernel", "--lengths", "8,16,32", "--channels", "2", "--repeats", "1", "--oracle"});
  REQUIRE(b.code == 0);
  std::istringstream is(b.out);
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "T,scan_ms,oracle_ms");
  std::vector<long> ts;
  while (std::getline(is, row)) ts.push_back(std::stol(row.substr(0, row.find(','))));
  CHECK(ts == std::vector<long>{8, 16, 32});
}

TEST_CASE("correlate requires exactly one source") {
  CHECK(invoke({"correlate"}).code == cli::kUsage);
  CHECK(invoke({"correlate", "--synth", "1", "20", "--dir", "."}).code == cli::kUsage);
  TempDir d("corr");
  const auto file = (d.path / "corr.json").string();
  const auto r = invoke({"correlate", "--synth", "1", "20", "--out", file});
  CHECK(r.code == 0);
  CHECK(r.out.find("pearson_complexity") != std::string::npos);
  CHECK(nlohmann::json::parse(slurp(file))["rows"].size() == 20);
}
