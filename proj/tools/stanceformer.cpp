// stanceformer: train, evaluate, grid-search, ablate and inspect
// target-aware encoders from the command line.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stanceformer/cli/commands.hpp"

namespace cli = stanceformer::cli;

int main(int argc, char** argv) {
  CLI::App app{"Target-aware transformer stance classifier"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::optional<std::string> seed, out, alphas, checkpoint;
  };
  std::vector<std::pair<CLI::App*, Flags>> subs;
  subs.reserve(cli::command_names().size());
  const std::vector<std::string> help{
      "train a model and score it on the test split",
      "score a saved checkpoint on the test split",
      "train one model per alpha and keep the best on validation",
      "run the original / targets-masked / target-aware comparison",
      "dump post-softmax attention maps for a set of examples",
      "write a synthetic train/val/test corpus as JSONL"};
  for (std::size_t i = 0; i < cli::command_names().size(); ++i) {
    auto* sub = app.add_subcommand(cli::command_names()[i], help[i]);
    subs.emplace_back(sub, Flags{});
    auto& f = subs.back().second;
    sub->allow_extras();
    sub->add_option("--config", f.config, "key = value config file");
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_option("--out", f.out, "output directory");
    if (sub->get_name() == "gridsearch" || sub->get_name() == "ablate") {
      sub->add_option("--alphas", f.alphas, "comma-separated alpha grid");
    }
    if (sub->get_name() == "eval" || sub->get_name() == "attention") {
      sub->add_option("--checkpoint", f.checkpoint, "checkpoint.json to load");
    }
    sub->footer("Any config key can be overridden with --<section.key> <value>, e.g. --ta.alpha 0.5.");
  }

  CLI11_PARSE(app, argc, argv);

  for (auto& [sub, f] : subs) {
    if (!sub->parsed()) continue;
    const std::string name = sub->get_name();
    return cli::guarded(
        [&] {
          std::vector<std::pair<std::string, std::string>> flags;
          if (f.seed) flags.emplace_back("seed", *f.seed);
          if (f.out) flags.emplace_back("out", *f.out);
          if (f.alphas) flags.emplace_back("grid.alphas", *f.alphas);
          if (f.checkpoint) flags.emplace_back(name + ".checkpoint", *f.checkpoint);
          for (auto& kv : cli::parse_overrides(sub->remaining())) flags.push_back(std::move(kv));
          std::optional<std::filesystem::path> file;
          if (!f.config.empty()) file = f.config;
          const auto cfg = cli::resolve_config(file, flags);
          std::cout << cli::run_command(name, cfg).string() << '\n';
        },
        std::cerr);
  }
  return cli::kExitFailure;
}
