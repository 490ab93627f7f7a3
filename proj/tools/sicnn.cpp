#include <chrono>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sicnn/common.hpp"
#include "sicnn/experiment.hpp"

namespace {

int run(const std::string& command, const std::string& config_path, bool serial) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = sicnn::load_experiment_config(config_path);
  const auto exec = serial ? sicnn::Exec::serial : sicnn::Exec::parallel;
  if (command == "report") {
    sicnn::cmd_report(cfg, std::cout);
    return 0;
  }
  sicnn::CommandResult res;
  if (command == "simulate") res = sicnn::cmd_simulate(cfg, exec);
  else if (command == "train") res = sicnn::cmd_train(cfg, exec);
  else if (command == "evaluate") res = sicnn::cmd_evaluate(cfg, exec);
  else res = sicnn::cmd_sweep(cfg, exec);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  sicnn::write_manifest(cfg, command, res, wall);
  for (const auto& line : res.log) std::cerr << line << '\n';
  std::cout << sicnn::run_directory(cfg).string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence detection with SIC over channels with memory"};
  app.require_subcommand(1);
  std::string config;
  bool serial = false;
  for (const char* name : {"simulate", "train", "evaluate", "sweep", "report"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config, "experiment config (JSON)")->required();
    sub->add_flag("--serial", serial, "use the serial reference kernels");
  }
  CLI11_PARSE(app, argc, argv);
  const int threads = sicnn::configure_threads();
  (void)threads;
  try {
    return run(app.get_subcommands().front()->get_name(), config, serial);
  } catch (const sicnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const sicnn::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
