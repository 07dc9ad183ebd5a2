// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "seqtag/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"multi-domain sequence tagger"};
  app.require_subcommand(1);

  std::string config_path;
  long long seed_override = -1;
  std::string domain;
  bool route = false;
  std::string baseline;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--seed", seed_override, "override the config seed");
  };

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  add_common(synth);
  auto* train = app.add_subcommand("train", "train adapters, heads and router");
  add_common(train);
  train->add_option("--baseline", baseline, "train a baseline: general|specialized");
  train->add_option("--domain", domain, "target domain (specialized baseline)");
  auto* tag = app.add_subcommand("tag", "tag CoNLL input from standard input");
  add_common(tag);
  tag->add_option("--domain", domain, "tag with this domain's parameters");
  tag->add_flag("--route", route, "let the router pick the domain");
  auto* eval = app.add_subcommand("eval", "per-domain F1 table on the test split");
  add_common(eval);
  auto* grid = app.add_subcommand("gridsearch", "prefix-length grid search");
  add_common(grid);

  CLI11_PARSE(app, argc, argv);

  try {
    seqtag::ExperimentConfig cfg = seqtag::ExperimentConfig::from_file(config_path);
    if (seed_override >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed_override);
    }
    if (synth->parsed()) return seqtag::cmd_synth(cfg, std::cerr);
    if (train->parsed()) {
      return seqtag::cmd_train(cfg, baseline, domain, std::cerr);
    }
    if (tag->parsed()) {
      if (!route && domain.empty()) {
        std::cerr << "tag: need --domain or --route\n";
        return 1;
      }
      return seqtag::cmd_tag(cfg, domain, route, std::cin, std::cout, std::cerr);
    }
    if (eval->parsed()) return seqtag::cmd_eval(cfg, std::cout, std::cerr);
    if (grid->parsed()) return seqtag::cmd_gridsearch(cfg, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "seqtag: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
