#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "samlab/config.hpp"
#include "samlab/harness.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> parallel;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file")->required();
  cmd->add_option("--seed", flags.seed, "override the configured seed");
  cmd->add_option("--out", flags.out, "override the configured output directory");
  cmd->add_option("--parallel", flags.parallel, "worker count for sweeps");
}

int execute(const std::string& task, const CommonFlags& flags) {
  try {
    samlab::KeyValueConfig config = samlab::KeyValueConfig::parse_file(flags.config_path);
    config.apply_env_overrides();
    if (config.has("task")) {
      // The subcommand is authoritative; a conflicting task key is a typo.
      samlab::KeyValueConfig probe = config;
      const std::string configured = probe.get_string("task", task);
      if (configured != task) {
        throw samlab::ConfigError("config sets task = " + configured +
                                  " but the " + task + " subcommand was invoked");
      }
    }
    config.set("task", task);
    if (flags.seed) config.set("seed", std::to_string(*flags.seed));
    if (flags.out) config.set("out", *flags.out);
    if (flags.parallel) config.set("parallel", std::to_string(*flags.parallel));

    samlab::run_task(samlab::RunConfig::load(std::move(config)));
    return 0;
  } catch (const samlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "samlab - sharpness-aware minimization, adversarial training and the\n"
      "closed-form robust-feature analysis of a synthetic Gaussian model"};
  app.require_subcommand(1);

  CommonFlags flags;
  const char* tasks[] = {"theory", "train", "attack", "sweep", "plot"};
  const char* blurbs[] = {
      "closed-form robust-feature-weight table over a parameter grid",
      "train a model per the configuration and evaluate it",
      "evaluate a stored checkpoint under the configured attack budgets",
      "independent training runs over a parameter grid",
      "render a line/scatter SVG from a results CSV",
  };
  for (std::size_t i = 0; i < 5; ++i) {
    add_common_flags(app.add_subcommand(tasks[i], blurbs[i]), flags);
  }

  CLI11_PARSE(app, argc, argv);
  return execute(app.get_subcommands().front()->get_name(), flags);
}
