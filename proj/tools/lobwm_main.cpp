// lobwm: world-model trading toolkit for limit order books.
//
// Pipeline: gen-data -> train-ae -> encode -> train-transition ->
// train-reward -> train-agent (dream training) -> train-classifier ->
// evaluate -> compare. `pipeline` runs everything; each stage is also a
// standalone subcommand. Stages are cached; reruns with an unchanged
// config are skipped.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "lobwm/kernels.hpp"
#include "lobwm/pipeline.hpp"

using namespace lobwm;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed_override;
};

RunConfig load_config(const GlobalArgs& args) {
  RunConfig cfg =
      args.config_path.empty() ? RunConfig{} : RunConfig::from_file(args.config_path);
  if (args.seed_override) cfg.seed = *args.seed_override;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_path, "Run configuration file (json)");
  cmd->add_option("--out", args.out_dir, "Artifacts directory");
  cmd->add_option("--seed", args.seed_override, "Override the config seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lobwm: world-model trading toolkit for limit order books"};
  app.require_subcommand(1);

  GlobalArgs args;
  std::string agent_kind;
  std::string strategy;
  std::string stage_name;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  add_common(gen, args);
  auto* ae = app.add_subcommand("train-ae", "Train the book-window autoencoder");
  add_common(ae, args);
  auto* enc = app.add_subcommand("encode", "Encode transitions into the latent table");
  add_common(enc, args);
  auto* trans = app.add_subcommand("train-transition", "Train the recurrent mixture-density transition model");
  add_common(trans, args);
  auto* rew = app.add_subcommand("train-reward", "Train the mid-change reward model");
  add_common(rew, args);
  auto* agent = app.add_subcommand("train-agent", "Train an RL agent inside the world model");
  add_common(agent, args);
  agent->add_option("--kind", agent_kind, "Agent kind: dqn, pg or a2c");
  auto* clf = app.add_subcommand("train-classifier", "Train the movement classifier benchmark");
  add_common(clf, args);
  auto* bench = app.add_subcommand("run-benchmark", "Run a benchmark strategy on the test split");
  add_common(bench, args);
  bench->add_option("--strategy", strategy, "momentum, classifier, greedy or bfs")->required();
  auto* eval = app.add_subcommand("evaluate", "Replay all policies on the test split");
  add_common(eval, args);
  auto* cmp = app.add_subcommand("compare", "Rank policies from their evaluation reports");
  add_common(cmp, args);
  auto* pipe = app.add_subcommand("pipeline", "Run every stage in dependency order");
  add_common(pipe, args);

  CLI11_PARSE(app, argc, argv);

  stage_name = app.get_subcommands().front()->get_name();
  try {
    const RunConfig cfg = load_config(args);
    Pipeline pipeline(cfg, args.out_dir);
    std::cout << "kernels: " << kern::backend_name() << "\n";

    if (gen->parsed()) pipeline.gen_data();
    else if (ae->parsed()) pipeline.train_ae();
    else if (enc->parsed()) pipeline.encode();
    else if (trans->parsed()) pipeline.train_transition();
    else if (rew->parsed()) pipeline.train_reward();
    else if (agent->parsed()) {
      std::optional<AgentKind> kind;
      if (!agent_kind.empty()) kind = agent_kind_from_string(agent_kind);
      pipeline.train_agent_stage(kind);
    } else if (clf->parsed()) pipeline.train_classifier();
    else if (bench->parsed()) pipeline.run_benchmark(strategy);
    else if (eval->parsed()) pipeline.evaluate();
    else if (cmp->parsed()) pipeline.compare();
    else if (pipe->parsed()) {
      for (const auto& r : pipeline.run_all())
        std::cout << r.name << ": " << (r.skipped ? "skipped" : "ran") << " (" << r.hash << ")\n";
    }
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", e.what()}, {"stage", stage_name}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
