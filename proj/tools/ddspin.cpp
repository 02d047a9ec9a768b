#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ddspin/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Dephasing and dynamical-decoupling simulator for a single spin"};
  app.require_subcommand(1);

  struct Run {
    const char* name;
    ddspin::ExperimentKind kind;
    const char* help;
  };
  const Run runs[] = {
      {"decay", ddspin::ExperimentKind::decay, "Monte Carlo coherence decay curve"},
      {"suppression", ddspin::ExperimentKind::suppression, "Taylor-channel suppression table"},
      {"spinlock", ddspin::ExperimentKind::spinlock, "Spin-locking decay from the Bloch integrator"},
      {"pulse-error", ddspin::ExperimentKind::pulse_error, "CP/CPMG train with flip-angle errors"},
      {"sense", ddspin::ExperimentKind::sense, "AC-magnetometry sensitivity scan"},
      {"fit", ddspin::ExperimentKind::fit, "Fit a decay model to a curve CSV"},
  };

  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<long long> shots;
  std::optional<long long> threads;
  std::optional<ddspin::ExperimentKind> chosen;

  for (const auto& r : runs) {
    CLI::App* sub = app.add_subcommand(r.name, r.help);
    sub->add_option("--config", config, "Experiment config (JSON)")->required();
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--seed", seed, "Override the master seed");
    sub->add_option("--shots", shots, "Override the shot count");
    sub->add_option("--threads", threads, "Worker threads (results do not depend on it)");
    sub->callback([&chosen, kind = r.kind] { chosen = kind; });
  }
  CLI::App* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ddspin::kExitValidation;
  }

  if (validate->parsed()) return ddspin::validate_command(config, std::cout);
  return ddspin::run_command(*chosen, config, out, ddspin::Overrides{seed, shots, threads}, std::cout, std::cerr);
}
