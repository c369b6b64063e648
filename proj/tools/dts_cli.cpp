// dts: command-line driver for the tomosynthesis rib-suppression pipeline.
//
// Exit codes: 0 ok, 1 internal error, 2 usage, 3 config, 4 i/o, 5 geometry mismatch,
// 6 missing checkpoint, 7 invalid argument, 8 state, 9 lesion placement.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "dts/parallel.hpp"
#include "dts/pipeline.hpp"

namespace {

struct Args {
  std::string config;
  std::string out = "dts_out";
  std::optional<int> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string stage;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "run configuration (key=value file)")->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "output directory")->capture_default_str();
  cmd->add_option("--alpha", a.alpha, "restrict to one angular range")->check(CLI::IsMember({15, 30}));
  cmd->add_option("--seed", a.seed, "model and training seed");
  cmd->add_option("--threads", a.threads, "worker threads (default: DTS_THREADS or 1)")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  std::cout.setf(std::ios::unitbuf);
  CLI::App app{"Limited-angle chest tomosynthesis: simulation, rib suppression and evaluation"};
  app.set_version_flag("--version", std::string(dts::kToolVersion));
  app.require_subcommand(1);

  Args args;
  struct Command {
    const char* name;
    const char* help;
  };
  const Command commands[] = {
      {"phantom", "generate the configured phantoms"},
      {"simulate", "project, reconstruct and write the training/test cases"},
      {"train", "train one stage (m2d, m3d, then f)"},
      {"suppress", "apply the trained three-part network to the test cases"},
      {"ablate", "write the unsuppressed, 2D-only and 3D-only results"},
      {"eval", "compute metric tables for all methods"},
      {"demo", "run every step end to end"},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, args);
    if (std::string(c.name) == "train")
      sub->add_option("--stage", args.stage, "m2d, m3d or f")->required()->check(CLI::IsMember({"m2d", "m3d", "f"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    dts::RunConfig cfg = args.config.empty() ? dts::RunConfig{} : dts::RunConfig::load(args.config);
    dts::RunOptions opts;
    opts.out = args.out;
    if (args.alpha) opts.alpha = static_cast<double>(*args.alpha);
    opts.seed = args.seed;
    opts.threads = args.threads;
    cfg = dts::resolve(cfg, opts);
    if (cfg.threads > 0) dts::set_default_threads(cfg.threads);

    const std::string cmd = app.get_subcommands().front()->get_name();
    auto& log = std::cout;
    if (cmd == "phantom") dts::cmd_phantom(cfg, opts, log);
    else if (cmd == "simulate") dts::cmd_simulate(cfg, opts, log);
    else if (cmd == "train") dts::cmd_train(cfg, opts, dts::parse_stage(args.stage), log);
    else if (cmd == "suppress") dts::cmd_suppress(cfg, opts, log);
    else if (cmd == "ablate") dts::cmd_ablate(cfg, opts, log);
    else if (cmd == "eval") dts::cmd_eval(cfg, opts, log);
    else if (cmd == "demo") dts::cmd_demo(cfg, opts, log);
    return 0;
  } catch (const dts::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dts::exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dts::exit_code_for(dts::ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
