#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "netflow/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Network adaptation, tensor gradient flow and steady-state solvers"};
  app.footer(netflow::cli::usage());
  std::string config_file;
  std::vector<std::string> assignments;
  app.add_option("--config", config_file, "flat key=value configuration file");
  app.add_option("assignments", assignments, "key=value overrides");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : netflow::cli::kConfigError;
  }
  std::vector<std::string> args;
  if (!config_file.empty()) {
    args.push_back("--config");
    args.push_back(config_file);
  }
  args.insert(args.end(), assignments.begin(), assignments.end());
  return netflow::cli::main(args, std::cout, std::cerr);
}
