// audex: classification-based audience expansion from the command line.
//
//   audex embed    --config desk.conf
//   audex expand   --config run.conf --seeds seed_ids.txt --m 10%
//   audex simulate --config desk.conf --only-class 8 --baseline-class 0
//   audex oracle   --out oracle_out
//
// Exit codes: 0 ok, 1 oracle check failed, 2 config error, 3 data error,
// 4 numeric divergence.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "audex/pipeline.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

audex::RunConfig resolve_config(const GlobalOptions& g) {
  audex::RunConfig cfg = g.config.empty() ? audex::RunConfig{} : audex::load_run_config(g.config);
  if (!g.out.empty()) cfg.out = g.out;
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audience expansion with uniform negatives and Extra Trees"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "key=value run configuration file");
  app.add_option("--out", g.out, "output directory (overrides config)");
  app.add_option("--seed", g.seed, "master RNG seed (overrides config)");
  app.add_option("--threads", g.threads, "worker threads (overrides config)")->check(CLI::PositiveNumber);

  auto* embed = app.add_subcommand("embed", "ingest, subsample and embed the user base with t-SNE");

  auto* expand = app.add_subcommand("expand", "expand a seed audience over a precomputed embedding");
  std::string seeds_path;
  std::string m_spec;
  expand->add_option("--seeds", seeds_path, "newline-delimited seed user ids")->required();
  expand->add_option("--m", m_spec, "audience size, absolute or percentage of N (e.g. 10%)");

  auto* simulate = app.add_subcommand("simulate", "run the repeated expansion experiment");
  std::optional<int> only_class, baseline_class;
  simulate->add_option("--only-class", only_class, "restrict the experiment to one seed class");
  simulate->add_option("--baseline-class", baseline_class, "counter class for the baseline comparison");

  auto* oracle = app.add_subcommand("oracle", "validate posteriors against analytic and KDE oracles");

  // Options are accepted both before and after the subcommand name.
  for (auto* sub : {embed, expand, simulate, oracle}) {
    sub->add_option("--config", g.config, "key=value run configuration file");
    sub->add_option("--out", g.out, "output directory (overrides config)");
    sub->add_option("--seed", g.seed, "master RNG seed (overrides config)");
    sub->add_option("--threads", g.threads, "worker threads (overrides config)")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : audex::kExitConfig;
  }

  try {
    audex::RunConfig cfg = resolve_config(g);
    if (*embed) {
      audex::cmd_embed(cfg, std::cout);
    } else if (*expand) {
      if (!m_spec.empty()) cfg.m = m_spec;
      audex::cmd_expand(cfg, seeds_path, std::cout);
    } else if (*simulate) {
      if (only_class) cfg.only_class = only_class;
      if (baseline_class) cfg.baseline_class = baseline_class;
      audex::cmd_simulate(cfg, std::cout);
    } else if (*oracle) {
      if (!audex::cmd_oracle(cfg, std::cout)) return audex::kExitCheckFailed;
    }
  } catch (const std::exception& e) {
    std::cerr << "audex: " << e.what() << "\n";
    return audex::exit_code_for(e);
  }
  return audex::kExitOk;
}
