#include <iostream>
#include <string>
#include <vector>

#include "recon/commands.hpp"

namespace {

void usage() {
  std::cerr << "usage: recon <gen-data|train|reconstruct|evaluate|benchmark>"
               " [--config PATH] [--set key=value ...] [--seed U64]\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage();
    return recon::kExitConfig;
  }
  const std::string command = argv[1];
  if (command == "--help" || command == "-h" || command == "help") {
    usage();
    return recon::kExitOk;
  }

  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed_override;
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&](const char* flag) -> std::string {
      if (i + 1 >= argc) {
        std::cerr << flag << " expects a value\n";
        std::exit(recon::kExitConfig);
      }
      return argv[++i];
    };
    if (arg == "--config") {
      config_path = next("--config");
    } else if (arg == "--set") {
      overrides.push_back(next("--set"));
    } else if (arg == "--seed") {
      seed_override = next("--seed");
    } else {
      std::cerr << "unknown flag: " << arg << "\n";
      usage();
      return recon::kExitConfig;
    }
  }

  try {
    recon::RunConfig cfg = config_path.empty() ? recon::RunConfig()
                                               : recon::RunConfig::from_file(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    if (!seed_override.empty()) cfg.globals.set("seed", seed_override);
    return recon::run_command(command, cfg);
  } catch (const recon::Error& e) {
    std::cerr << "recon: " << e.what() << "\n";
    return recon::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "recon: " << e.what() << "\n";
    return recon::kExitConfig;
  }
}
