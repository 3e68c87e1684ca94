#include <algorithm>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "m3d/commands.hpp"

namespace {

struct Subcommand {
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> flags;
};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

void add_run_options(Subcommand& sub) {
  sub.app->add_option("--config", sub.config_file, "flat key=value config file");
  const m3d::RunConfig defaults;
  for (const auto& key : defaults.keys())
    sub.app->add_option(flag_name(key), sub.flags[key], "default: " + defaults.get(key));
}

m3d::RunConfig resolve(const Subcommand& sub) {
  m3d::RunConfig config =
      sub.config_file.empty() ? m3d::RunConfig() : m3d::RunConfig::from_file(sub.config_file);
  for (const auto& [key, value] : sub.flags)
    if (sub.app->count(flag_name(key)) > 0) config.set(key, value);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"M3D dataset condensation"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> names = {
      {"condense", "learn a synthetic set; writes a checkpoint and metrics.csv"},
      {"eval", "train classifiers on a checkpoint; writes report.csv"},
      {"moments", "moment distances of a checkpoint; writes moments.csv"},
      {"ablate", "condense + eval sweep over kernels or ipm; writes sweep.csv"},
      {"export-images", "write a checkpoint as PGM/PPM images"},
  };
  std::vector<Subcommand> subs(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    subs[i].app = app.add_subcommand(names[i].first, names[i].second);
    add_run_options(subs[i]);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? m3d::exit_ok : m3d::exit_config;
  }

  try {
    for (const auto& sub : subs) {
      if (!sub.app->parsed()) continue;
      const m3d::RunConfig config = resolve(sub);
      const std::string name = sub.app->get_name();
      if (name == "condense") m3d::cmd_condense(config, std::cout);
      else if (name == "eval") m3d::cmd_eval(config, std::cout);
      else if (name == "moments") m3d::cmd_moments(config, std::cout);
      else if (name == "ablate") m3d::cmd_ablate(config, std::cout);
      else m3d::cmd_export_images(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return m3d::exit_code_for(e);
  }
  return m3d::exit_ok;
}
