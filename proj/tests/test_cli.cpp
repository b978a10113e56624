#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanceformer/cli/commands.hpp"
#include "support.hpp"

namespace cli = stanceformer::cli;
namespace eval = stanceformer::eval;
namespace fs = std::filesystem;
using testing_support::count_lines;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

using Flags = std::vector<std::pair<std::string, std::string>>;

// Small enough that every command finishes in well under a second.
Flags tiny(const fs::path& out) {
  return {{"out", out.string()},          {"data.source", "synth"},   {"synth.n_train", "64"},
          {"synth.n_val", "32"},          {"synth.n_test", "32"},     {"model.n_layers", "1"},
          {"model.n_heads", "2"},         {"model.d_model", "16"},    {"model.d_ff", "32"},
          {"model.max_len", "24"},        {"train.epochs", "2"},      {"train.lr", "0.001"}};
}

Flags with(Flags base, const Flags& extra) {
  base.insert(base.end(), extra.begin(), extra.end());
  return base;
}

fs::path write_file(const fs::path& p, const std::string& body) {
  std::ofstream(p, std::ios::binary) << body;
  return p;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::vector<fs::path> entries(const fs::path& dir) {
  std::vector<fs::path> out;
  if (fs::exists(dir))
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  return out;
}

int run_binary(const std::string& args, const fs::path& stderr_file) {
  const std::string cmd = std::string(STANCEFORMER_CLI) + " " + args + " > /dev/null 2> " + stderr_file.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfig, MisspelledKeyInFileIsNamed) {
  TempDir dir("cfg");
  const auto file = write_file(dir.path() / "run.cfg", "# comment\nta.alhpa = 0.5\n");
  try {
    cli::resolve_config(file, {});
    FAIL() << "expected ConfigError";
  } catch (const stanceformer::ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("ta.alhpa"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":2"), std::string::npos) << msg;
  }
  EXPECT_THROW(cli::parse_overrides({"--ta.alhpa", "0.5"}), stanceformer::ConfigError);
}

TEST(RunConfig, BadValuesNameTheKey) {
  for (const auto& [k, v] : Flags{{"train.epochs", "two"}, {"ta.alpha", "-1"}, {"ta.placement", "0-1"},
                                  {"data.source", "csv"}, {"train.convention", "macro"}, {"grid.alphas", "0.1,x"}}) {
    try {
      cli::resolve_config(std::nullopt, {{k, v}});
      ADD_FAILURE() << k << " = " << v << " accepted";
    } catch (const stanceformer::ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(k.substr(0, k.find('.'))), std::string::npos) << e.what();
    }
  }
}

TEST(RunConfig, FlagsBeatFileBeatDefaults) {
  TempDir dir("prec");
  const auto file = write_file(dir.path() / "run.cfg", "ta.alpha = 0.3\ntrain.epochs = 2\n");
  const auto cfg = cli::resolve_config(file, cli::parse_overrides({"--ta.alpha", "0.5", "--seed=9"}));
  EXPECT_EQ(cfg.get("ta.alpha"), "0.5");
  EXPECT_EQ(cfg.get("train.epochs"), "2");
  EXPECT_EQ(cfg.get("train.batch_size"), "32");
  EXPECT_EQ(cfg.get_u64("seed"), 9u);
  EXPECT_TRUE(cfg.explicitly_set("ta.alpha"));
  EXPECT_FALSE(cfg.explicitly_set("train.batch_size"));
  const auto file_only = cli::resolve_config(file, {});
  EXPECT_EQ(file_only.get("ta.alpha"), "0.3");
  EXPECT_EQ(cli::RunConfig{}.get("ta.alpha"), "0.5");
}

TEST(RunConfig, SnapshotIsSortedAndReloadable) {
  TempDir dir("snap");
  const auto cfg = cli::resolve_config(std::nullopt, {{"ta.alpha", "0.25"}, {"model.d_model", "32"}});
  const auto snap = cfg.snapshot();
  std::istringstream in(snap);
  std::string line, previous;
  while (std::getline(in, line)) {
    EXPECT_LT(previous, line);
    previous = line;
  }
  const auto again = cli::resolve_config(write_file(dir.path() / "s.cfg", snap), {});
  EXPECT_EQ(again.snapshot(), snap);
}

TEST(Train, WritesRunDirectoryWithSnapshotOfOverrides) {
  TempDir dir("train");
  const auto file = write_file(dir.path() / "run.cfg", "ta.alpha = 0.3\n");
  const auto cfg = cli::resolve_config(file, with(tiny(dir.path() / "runs"), {{"ta.alpha", "0.5"}, {"seed", "7"}}));
  const auto run = cli::cmd_train(cfg);
  EXPECT_TRUE(std::regex_match(run.filename().string(), std::regex(R"(train-\d{8}T\d{6}Z-7)")))
      << run.filename();
  for (const char* f : {"config.snapshot", "checkpoint.json", "history.csv", "report.json"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_NE(slurp(run / "config.snapshot").find("ta.alpha = 0.5\n"), std::string::npos);
  const auto report = read_json(run / "report.json");
  EXPECT_EQ(report["config"]["ta.alpha"], "0.5");
  EXPECT_EQ(report["epochs_run"].get<std::size_t>() + 1, count_lines(run / "history.csv"));
  EXPECT_EQ(entries(dir.path() / "runs").size(), 1u);

  // A second identical run gets its own directory rather than overwriting.
  const auto second = cli::cmd_train(cfg);
  EXPECT_NE(second, run);
  EXPECT_EQ(entries(dir.path() / "runs").size(), 2u);
}

TEST(Train, RerunFromSnapshotIsBitIdentical) {
  TempDir dir("rerun");
  const auto first = cli::cmd_train(cli::resolve_config(std::nullopt, tiny(dir.path() / "runs")));
  const auto second = cli::cmd_train(cli::resolve_config(first / "config.snapshot", {}));
  for (const char* f : {"report.json", "history.csv", "checkpoint.json", "config.snapshot"})
    EXPECT_EQ(slurp(first / f), slurp(second / f)) << f;
}

TEST(Train, FailureLeavesNoPartialArtifacts) {
  TempDir dir("fail");
  const auto runs = dir.path() / "runs";
  EXPECT_THROW(cli::cmd_train(cli::resolve_config(std::nullopt, with(tiny(runs), {{"ta.placement", "5:0"}}))),
               stanceformer::ConfigError);
  EXPECT_TRUE(entries(runs).empty());
  EXPECT_THROW(cli::cmd_train(cli::resolve_config(
                   std::nullopt, {{"out", runs.string()},
                                  {"data.train", (dir.path() / "missing.jsonl").string()},
                                  {"data.val", (dir.path() / "missing.jsonl").string()},
                                  {"data.test", (dir.path() / "missing.jsonl").string()}})),
               stanceformer::DataError);
  EXPECT_TRUE(entries(runs).empty());
}

TEST(Eval, CheckpointReproducesTrainingTestScores) {
  TempDir dir("eval");
  const auto base = tiny(dir.path() / "runs");
  const auto run = cli::cmd_train(cli::resolve_config(std::nullopt, base));
  const auto ev = cli::cmd_eval(
      cli::resolve_config(std::nullopt, with(base, {{"eval.checkpoint", (run / "checkpoint.json").string()}})));
  EXPECT_EQ(read_json(run / "report.json")["test"], read_json(ev / "report.json")["test"]);
}

TEST(Gridsearch, DefaultGridHasTenRows) {
  TempDir dir("grid");
  const auto run = cli::cmd_gridsearch(cli::resolve_config(std::nullopt, with(tiny(dir.path()), {{"train.epochs", "1"}})));
  const auto rows = eval::parse_grid_csv(slurp(run / "grid.csv"));
  ASSERT_EQ(rows.size(), 10u);
  const auto report = read_json(run / "report.json")["grid"];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].alpha, report["rows"][i]["alpha"].get<double>());
    EXPECT_EQ(rows[i].val_f1, report["rows"][i]["val_f1"].get<double>());
  }
  std::size_t best = eval::select_best_alpha(rows);
  EXPECT_EQ(report["chosen_alpha"].get<double>(), rows[best].alpha);
}

TEST(Gridsearch, AlphasFlagLimitsRows) {
  TempDir dir("grid2");
  const auto run = cli::cmd_gridsearch(
      cli::resolve_config(std::nullopt, with(tiny(dir.path()), {{"grid.alphas", "0.2,0.4"}})));
  const auto rows = eval::parse_grid_csv(slurp(run / "grid.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].alpha, 0.2);
  EXPECT_EQ(rows[1].alpha, 0.4);
}

TEST(Ablate, ThreeArmsSeedsAndAgreeingFormats) {
  TempDir dir("ablate");
  const auto run = cli::cmd_ablate(cli::resolve_config(
      std::nullopt, with(tiny(dir.path()), {{"ablate.seeds", "4,2"}, {"grid.alphas", "0.5,1.0"}})));
  const auto report = read_json(run / "report.json")["ablation"];
  ASSERT_EQ(report["arms"].size(), 3u);
  const std::vector<std::string> names{"targets_original", "targets_masked", "stanceformer"};
  const std::string md = slurp(run / "ablation.md");
  EXPECT_NE(md.find("| arm | seed 4 | seed 2 | mean |"), std::string::npos) << md;
  for (std::size_t a = 0; a < 3; ++a) {
    const auto& arm = report["arms"][a];
    EXPECT_EQ(arm["arm"], names[a]);
    EXPECT_EQ(arm["seeds"], (std::vector<std::uint64_t>{4, 2}));
    // Every markdown cell equals the JSON value rounded to four decimals.
    std::ostringstream row;
    row << std::fixed << std::setprecision(4) << "| " << names[a] << " |";
    for (const auto& f : arm["macro_f1"]) row << ' ' << f.get<double>() << " |";
    row << ' ' << arm["mean"].get<double>() << " |";
    EXPECT_NE(md.find(row.str()), std::string::npos) << row.str();
  }
  EXPECT_TRUE(report.contains("grid"));
  EXPECT_TRUE(fs::exists(run / "grid.csv"));
}

TEST(Attention, DumpsAreDistributionsDeterministicAndShiftWithAlpha) {
  TempDir dir("attn");
  const auto base = tiny(dir.path() / "runs");
  const auto data = dir.path() / "data";
  cli::cmd_synth(cli::resolve_config(std::nullopt, with(base, {{"out", data.string()}, {"synth.n_test", "6"}})));
  const auto run = cli::cmd_train(cli::resolve_config(std::nullopt, base));
  const Flags attn{{"attention.checkpoint", (run / "checkpoint.json").string()},
                   {"attention.examples", (data / "test.jsonl").string()}};

  const auto a = cli::cmd_attention(cli::resolve_config(std::nullopt, with(base, with(attn, {{"ta.alpha", "0.8"}}))));
  const auto b = cli::cmd_attention(cli::resolve_config(std::nullopt, with(base, with(attn, {{"ta.alpha", "0.8"}}))));
  const auto zero = cli::cmd_attention(cli::resolve_config(std::nullopt, with(base, with(attn, {{"ta.alpha", "0"}}))));

  ASSERT_EQ(entries(a / "attention").size(), 6u);
  for (const auto& f : entries(a / "attention")) {
    EXPECT_EQ(slurp(f), slurp(b / "attention" / f.filename()));
    const auto j = read_json(f);
    const std::size_t seq = j["tokens"].size(), content = seq - j["pad_len"].get<std::size_t>();
    ASSERT_EQ(j["maps"].size(), 2u);
    for (const auto& m : j["maps"]) {
      for (std::size_t r = 0; r < seq; ++r) {
        double s = 0, mass = 0;
        for (std::size_t c = 0; c < content; ++c) s += m["weights"][r][c].get<double>();
        for (std::size_t c = j["target_span"][0]; c < j["target_span"][1]; ++c) mass += m["weights"][r][c].get<double>();
        EXPECT_NEAR(s, 1.0, 1e-6);
        EXPECT_NEAR(m["target_mass"][r].get<double>(), mass, 1e-12);
      }
    }
  }
  EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json"));
  EXPECT_GT(read_json(a / "report.json")["mean_target_mass"].get<double>(),
            read_json(zero / "report.json")["mean_target_mass"].get<double>());
}

TEST(Synth, LineCountsRerunAndLoad) {
  TempDir dir("synth");
  const Flags flags{{"out", (dir.path() / "a").string()}, {"synth.n_train", "40"}, {"synth.n_val", "7"},
                    {"synth.n_test", "9"}, {"synth.seed", "3"}};
  cli::cmd_synth(cli::resolve_config(std::nullopt, flags));
  auto again = flags;
  again[0].second = (dir.path() / "b").string();
  cli::cmd_synth(cli::resolve_config(std::nullopt, again));
  const std::vector<std::pair<std::string, std::size_t>> expected{{"train", 40}, {"val", 7}, {"test", 9}};
  for (const auto& [split, n] : expected) {
    const auto file = dir.path() / "a" / (split + ".jsonl");
    EXPECT_EQ(count_lines(file), n);
    EXPECT_EQ(slurp(file), slurp(dir.path() / "b" / (split + ".jsonl")));
    EXPECT_EQ(stanceformer::text::load_jsonl(file, split).size(), n);
  }
  EXPECT_EQ(entries(dir.path() / "a").size(), 3u);
}

TEST(Binary, ExitCodesAndMessages) {
  TempDir dir("bin");
  const auto err = dir.path() / "stderr.txt";
  const auto cfg = write_file(dir.path() / "bad.cfg", "ta.alhpa = 0.5\n");
  EXPECT_EQ(run_binary("train --config " + cfg.string() + " --out " + dir.path().string(), err), 2);
  EXPECT_NE(slurp(err).find("ta.alhpa"), std::string::npos) << slurp(err);

  EXPECT_EQ(run_binary("train --model.nlayers 3", err), 2);
  EXPECT_NE(slurp(err).find("model.nlayers"), std::string::npos);

  EXPECT_EQ(run_binary("train --out " + dir.path().string() + " --data.train nope.jsonl --data.val nope.jsonl "
                       "--data.test nope.jsonl", err),
            3);

  EXPECT_EQ(run_binary("synth --out " + (dir.path() / "data").string() + " --synth.n_train 5", err), 0);
  EXPECT_EQ(count_lines(dir.path() / "data" / "train.jsonl"), 5u);
}
