#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "seqdesign/cli.hpp"
#include "seqdesign/errors.hpp"

using namespace seqdesign;
using namespace seqdesign::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh artifact root per test.
fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("seqdesign_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) { return csv::read_file(p); }

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Small settings that keep every subcommand to well under a second.
std::vector<std::string> quick(const fs::path& root, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"-o", root.string(), "--set", "simulate.episodes=200",
                                "--set", "evaluate.episodes=300"};
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::vector<std::string> with(const std::string& sub, std::vector<std::string> args) {
  args.insert(args.begin(), sub);
  return args;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  auto c = default_config();
  EXPECT_EQ(c["env"], "example1");
  apply_override(c, "example1.cost_c=2");
  EXPECT_EQ(c["example1"]["cost_c"].get<double>(), 2.0);
  EXPECT_TRUE(c["example1"]["cost_c"].is_number_float());
  apply_override(c, "env=example2");
  EXPECT_EQ(c["env"], "example2");
  apply_override(c, "pg.hidden=[8,4]");
  EXPECT_EQ(c["pg"]["hidden"].size(), 2u);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  auto c = default_config();
  EXPECT_THROW(apply_override(c, "example1.costc=2"), ConfigError);
  EXPECT_THROW(apply_override(c, "simulate.episodes=1.5"), ConfigError);
  EXPECT_THROW(apply_override(c, "pg.reward_to_go=1"), ConfigError);
  EXPECT_THROW(apply_override(c, "pg.hidden=[8.5]"), ConfigError);
  EXPECT_THROW(apply_override(c, "noequals"), ConfigError);
  try {
    apply_override(c, "dqn.nested.key=1");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dqn.nested.key"), std::string::npos);
  }
}

TEST(Config, FileMergeIsStrict) {
  const auto dir = scratch("config_file");
  fs::create_directories(dir);
  csv::write_file(dir / "good.json", R"({"env": "example2", "example2": {"t_max": 12}})");
  const auto c = resolve_config(dir / "good.json", {"seed=9"});
  EXPECT_EQ(c["example2"]["t_max"], 12);
  EXPECT_EQ(c["seed"], 9);
  csv::write_file(dir / "bad.json", R"({"example2": {"tmax": 12}})");
  try {
    resolve_config(dir / "bad.json", {});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("example2.tmax"), std::string::npos);
  }
  EXPECT_THROW(resolve_config(dir / "missing.json", {}), ConfigError);
}

TEST(Cli, InvalidConfigExitsTwoWithFieldName) {
  const auto root = scratch("invalid");
  auto r = invoke(with("simulate", quick(root, {"--set", "simulate.episodez=3"})));
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("simulate.episodez"), std::string::npos);
  r = invoke(with("simulate", quick(root, {"--set", "example1.theta1=2"})));
  EXPECT_EQ(r.code, kExitConfig);
  r = invoke(with("qlearn", quick(root, {"--set", "env=example2"})));
  EXPECT_EQ(r.code, kExitConfig);
  r = invoke({"nonsense"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_EQ(invoke({"defaults"}).code, kExitOk);
}

TEST(Cli, MissingDatasetNamesProducer) {
  const auto root = scratch("missing");
  for (const std::string sub : {"dp", "boundary"}) {
    const auto r = invoke(with(sub, quick(root)));
    EXPECT_EQ(r.code, kExitDependency) << sub;
    EXPECT_NE(r.err.find("'simulate'"), std::string::npos) << r.err;
  }
  const auto r = invoke(with("report", quick(root)));
  EXPECT_EQ(r.code, kExitDependency);
}

TEST(Cli, StaleDatasetIsRejected) {
  const auto root = scratch("stale");
  ASSERT_EQ(invoke(with("simulate", quick(root))).code, kExitOk);
  auto r = invoke(with("dp", quick(root, {"--set", "example1.cost_c=2"})));
  EXPECT_EQ(r.code, kExitDependency);
  EXPECT_NE(r.err.find("simulate"), std::string::npos);
  r = invoke(with("dp", quick(root, {"--set", "seed=2"})));
  EXPECT_EQ(r.code, kExitDependency);
}

TEST(Cli, SimulateIsByteIdenticalAcrossRunsAndWorkers) {
  const auto a = scratch("sim_a");
  const auto b = scratch("sim_b");
  ASSERT_EQ(invoke(with("simulate", quick(a, {"-w", "1"}))).code, kExitOk);
  ASSERT_EQ(invoke(with("simulate", quick(b, {"-w", "3"}))).code, kExitOk);
  const auto first = slurp(a / "simulate" / "dataset.csv");
  EXPECT_EQ(first, slurp(b / "simulate" / "dataset.csv"));
  EXPECT_EQ(slurp(a / "simulate" / "manifest.json"), slurp(b / "simulate" / "manifest.json"));
  ASSERT_EQ(invoke(with("simulate", quick(a, {"-w", "2"}))).code, kExitOk);
  EXPECT_EQ(first, slurp(a / "simulate" / "dataset.csv"));
}

TEST(Cli, DpWritesFunnelPolicyAndManifest) {
  const auto root = scratch("dp");
  ASSERT_EQ(invoke(with("simulate", quick(root))).code, kExitOk);
  const auto r = invoke(with("dp", quick(root)));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto svg = slurp(root / "dp" / "policy.svg");
  // All three actions appear in the Example 1 policy map.
  EXPECT_GT(count(svg, "class=\"cell\" "), 100u);
  for (const char* colour : {"#bdbdbd\"/>", "#2c7bb6\"/>", "#d7191c\"/>"}) {
    EXPECT_GT(count(svg, std::string("fill=\"") + colour), 1u) << colour;
  }
  const auto manifest = Json::parse(slurp(root / "dp" / "manifest.json"));
  EXPECT_EQ(manifest["seed"], 1);
  EXPECT_EQ(manifest["env"], "example1");
  EXPECT_TRUE(manifest.contains("config_hash"));
  EXPECT_TRUE(manifest["versions"].contains("seqdesign"));
  EXPECT_FALSE(manifest["config"].contains("output"));
}

TEST(Cli, BoundaryReportsOptimumWithStandardError) {
  const auto root = scratch("boundary");
  ASSERT_EQ(invoke(with("simulate", quick(root))).code, kExitOk);
  const auto r = invoke(with("boundary", quick(root)));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto table = csv::read(root / "boundary" / "summary.csv");
  std::map<std::string, std::string> kv;
  for (const auto& row : table.rows) kv[row[0]] = row[1];
  ASSERT_TRUE(kv.count("phi"));
  EXPECT_GT(std::stod(kv["phi"]), 0.3);
  EXPECT_LT(std::stod(kv["phi"]), 0.7);
  EXPECT_GT(std::stod(kv["in_sample_se"]), 0.0);
  EXPECT_GT(std::stod(kv["fresh_se"]), 0.0);
}

TEST(Cli, EverySubcommandIsDeterministicAcrossWorkers) {
  const std::vector<std::string> learn{"--set", "qlearn.episodes=3000",   "--set",
                                       "dqn.total_steps=1500",            "--set",
                                       "dqn.learning_starts=200",         "--set",
                                       "dqn.eval_every=500",              "--set",
                                       "dqn.eval_episodes=50",            "--set",
                                       "dqn.hidden=[8]",                  "--set",
                                       "pg.batches=4",                    "--set",
                                       "pg.eval_every=2",                 "--set",
                                       "pg.eval_episodes=50",             "--set",
                                       "pg.hidden=[8]"};
  std::map<int, std::map<std::string, std::string>> files;
  for (int workers : {1, 3}) {
    const auto root = scratch("det" + std::to_string(workers));
    auto args = quick(root, learn);
    args.push_back("-w");
    args.push_back(std::to_string(workers));
    for (const std::string sub : {"simulate", "dp", "boundary", "qlearn", "dqn", "pg", "oracle", "report"}) {
      const auto r = invoke(with(sub, args));
      ASSERT_EQ(r.code, kExitOk) << sub << ": " << r.err;
    }
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file()) {
        files[workers][fs::relative(entry.path(), root).string()] = slurp(entry.path());
      }
    }
  }
  ASSERT_GT(files[1].size(), 20u);
  EXPECT_EQ(files[1].size(), files[3].size());
  for (const auto& [name, text] : files[1]) EXPECT_EQ(text, files[3][name]) << name;
}

TEST(Cli, RerunFromManifestReproducesOutputs) {
  const auto root = scratch("manifest");
  ASSERT_EQ(invoke(with("simulate", quick(root, {"--set", "seed=7"}))).code, kExitOk);
  ASSERT_EQ(invoke(with("oracle", quick(root, {"--set", "seed=7"}))).code, kExitOk);
  const auto again = scratch("manifest_again");
  const auto manifest = (root / "simulate" / "manifest.json").string();
  ASSERT_EQ(invoke({"simulate", "-c", manifest, "-o", again.string()}).code, kExitOk);
  EXPECT_EQ(slurp(root / "simulate" / "dataset.csv"), slurp(again / "simulate" / "dataset.csv"));
  EXPECT_EQ(slurp(root / "simulate" / "manifest.json"), slurp(again / "simulate" / "manifest.json"));
}

TEST(Cli, ReportNeedsEveryListedFile) {
  const auto root = scratch("report");
  ASSERT_EQ(invoke(with("simulate", quick(root))).code, kExitOk);
  ASSERT_EQ(invoke(with("dp", quick(root))).code, kExitOk);
  auto r = invoke(with("report", quick(root)));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(root / "report" / "dp_policy.svg"));
  const auto summary = slurp(root / "report" / "summary.csv");
  EXPECT_NE(summary.find("dp,fresh_mean,"), std::string::npos);
  fs::remove(root / "dp" / "policy.csv");
  r = invoke(with("report", quick(root)));
  EXPECT_EQ(r.code, kExitDependency);
  EXPECT_NE(r.err.find("policy.csv"), std::string::npos);
  EXPECT_NE(r.err.find("'dp'"), std::string::npos);
}

TEST(Cli, DivergenceExitsFourAndKeepsTrace) {
  const auto root = scratch("diverge");
  const auto r = invoke(with("pg", quick(root, {"--set", "pg.learning_rate=1e300", "--set",
                                                "pg.batches=5", "--set", "pg.eval_every=1",
                                                "--set", "pg.eval_episodes=10", "--set",
                                                "pg.entropy_coef=0"})));
  EXPECT_EQ(r.code, kExitNumerical) << r.err;
  EXPECT_TRUE(fs::exists(root / "pg" / "trace.csv"));
}

TEST(Heatmap, TwoByTwo) {
  const auto t = csv::parse("i0,i1,action\n0,0,0\n0,1,1\n1,0,2\n1,1,1\n");
  const auto svg = render_heatmap(t, {});
  EXPECT_EQ(count(svg, "class=\"cell\""), 4u);
  EXPECT_EQ(count(svg, "fill=\"#2c7bb6\"/>"), 3u);  // two cells plus the legend swatch
  EXPECT_EQ(svg, render_heatmap(t, {}));
  EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

TEST(Heatmap, ContinuousAndMask) {
  HeatmapStyle style;
  style.categorical = false;
  style.value_column = "v";
  style.mask_column = "n";
  const auto t = csv::parse("i0,i1,v,n\n0,0,1.5,3\n1,0,-2,0\n2,0,,1\n");
  const auto svg = render_heatmap(t, style);
  EXPECT_EQ(count(svg, "class=\"cell\""), 3u);
  EXPECT_EQ(count(svg, "fill-opacity=\"0.25\""), 1u);
  EXPECT_NE(svg.find("fill=\"#08306b\""), std::string::npos);  // the maximum
  EXPECT_NE(svg.find("fill=\"#f7fbff\""), std::string::npos);  // the minimum
}

TEST(Heatmap, Errors) {
  EXPECT_THROW(render_heatmap(csv::parse("i0,i1,action\n"), {}), DataError);
  EXPECT_THROW(render_heatmap(csv::parse("a,b\n1,2\n"), {}), DataError);
  EXPECT_THROW(render_heatmap(csv::parse("i0,i1,action\n0,0,5\n"), {}), DataError);
  EXPECT_THROW(render_heatmap(csv::parse("i0,i1,action\n0,x,1\n"), {}), DataError);
}
