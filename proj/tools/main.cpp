#include "commands.hpp"

#include "gsgw/errors.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

int exit_code(gsgw::ErrorKind kind) {
  using gsgw::ErrorKind;
  switch (kind) {
    case ErrorKind::ConfigError:
      return 2;
    case ErrorKind::NumericError:
    case ErrorKind::OptimizationFailure:
      return 3;
    case ErrorKind::IoError:
    case ErrorKind::ParseError:
      return 4;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized sliced Gromov-Wasserstein matching"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  bool verbose = false;
  gsgw::cli::RunOptions opts;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Config file (section.key = value)")->required();
    cmd->add_option("--seed", seed, "Run a single seed instead of run.seeds");
    cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
    cmd->add_flag("-v,--verbose", verbose, "Progress on stderr");
  };
  for (const char* name : {"solve", "baseline", "mesh-match", "interpolate", "bench"}) common(app.add_subcommand(name));
  CLI::App* amortized = app.add_subcommand("amortized", "Amortized matcher");
  amortized->require_subcommand(1);
  for (const char* sub : {"train", "eval", "constraints"}) common(amortized->add_subcommand(sub));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  std::string command = chosen->get_name();
  CLI::App* leaf = chosen;
  if (command == "amortized") {
    leaf = chosen->get_subcommands().front();
    opts.subcommand = leaf->get_name();
  }
  if (leaf->count("--seed") > 0) opts.seed = seed;
  opts.out_dir = out_dir;
  opts.verbose = verbose;

  try {
    const auto cfg = gsgw::cli::RunConfig::load(config_path, command);
    for (const auto& rec : gsgw::cli::run_command(cfg, opts)) std::cout << rec.to_json().dump() << "\n";
  } catch (const gsgw::Error& e) {
    std::cerr << "gsgw " << command << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "gsgw " << command << ": " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "gsgw " << command << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
