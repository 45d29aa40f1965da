// Command-line front end: subcommand wiring, config merging, exit codes.
// All real work lives in the tmap library so tests can drive it in-process.

#include <deque>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tmap/commands.hpp"
#include "tmap/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"TransforMAP: transformer-based memory-access prediction and"
               " prefetcher evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "1.0.0");
  app.footer("Exit codes: 0 success, 2 configuration error, 3 input/data error,"
             " 4 runtime failure.");

  std::string config_file;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "flat key=value config file, applied first");
  app.add_option("--set", sets, "extra key=value assignment, applied after --config")
      ->type_name("KEY=VALUE");

  // Global sugar and per-command sugar both funnel through apply_key, so
  // flags share the config file's parsing and win over it. The deque keeps
  // the string slots CLI11 writes into at stable addresses.
  std::deque<std::string> slots;
  std::vector<std::pair<CLI::Option*, std::string>> sugar;
  auto opt = [&](CLI::App* cmd, const char* flag, const char* key, const char* help) {
    slots.emplace_back();
    sugar.emplace_back(cmd->add_option(flag, slots.back(), help), key);
  };

  opt(&app, "--seed", "seed", "master random seed");
  opt(&app, "--out-dir", "out_dir", "output directory (default: out)");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic access trace");
  synth->fallthrough();
  opt(synth, "--kind", "synth_kind",
      "constant-stride | page-local | temporal-stream | random");
  opt(synth, "--length", "synth_length", "number of accesses");
  opt(synth, "--trace", "trace", "output trace path");

  CLI::App* build = app.add_subcommand("build", "turn a trace into a training dataset");
  build->fallthrough();
  opt(build, "--trace", "trace", "input trace path");
  opt(build, "--dataset", "dataset", "output dataset path");

  CLI::App* train = app.add_subcommand("train", "train the model on a dataset");
  train->fallthrough();
  opt(train, "--dataset", "dataset", "input dataset path");
  opt(train, "--checkpoint", "checkpoint", "final checkpoint path");
  opt(train, "--epochs", "epochs", "training epochs");
  opt(train, "--batch-size", "batch_size", "samples per optimizer step");

  CLI::App* predict = app.add_subcommand("predict", "emit prefetch predictions for a trace");
  predict->fallthrough();
  opt(predict, "--checkpoint", "checkpoint", "model checkpoint to load");
  opt(predict, "--trace", "trace", "input trace path");
  opt(predict, "--predictions", "predictions", "output predictions path");
  opt(predict, "--beam-width", "beam_width", "beam width for decoding");

  CLI::App* simulate = app.add_subcommand("simulate", "replay a trace through the cache");
  simulate->fallthrough();
  opt(simulate, "--trace", "trace", "input trace path");
  opt(simulate, "--prefetcher", "prefetcher", "none | nextline | bo | isb | transformap");
  opt(simulate, "--predictions", "predictions", "predictions file for transformap");
  opt(simulate, "--checkpoint", "checkpoint", "checkpoint for on-the-fly transformap");
  opt(simulate, "--delay", "prefetch_delay", "demand accesses before a prefetch lands");

  CLI::App* report = app.add_subcommand("report", "merge simulation CSVs into one table");
  report->fallthrough();
  std::vector<std::string> csvs;
  report->add_option("csvs", csvs, "sim_<prefetcher>.csv files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    tmap::RunConfig rc;
    if (!config_file.empty()) tmap::load_config(config_file, rc);
    for (const std::string& s : sets) tmap::apply_assignment(rc, s);
    for (size_t i = 0; i < sugar.size(); ++i) {
      if (sugar[i].first->count()) tmap::apply_key(rc, sugar[i].second, slots[i]);
    }

    if (app.got_subcommand(synth)) tmap::cmd_synth(rc, std::cerr);
    if (app.got_subcommand(build)) tmap::cmd_build(rc, std::cerr);
    if (app.got_subcommand(train)) tmap::cmd_train(rc, std::cerr);
    if (app.got_subcommand(predict)) tmap::cmd_predict(rc, std::cerr);
    if (app.got_subcommand(simulate)) tmap::cmd_simulate(rc, std::cerr);
    if (app.got_subcommand(report)) tmap::cmd_report(rc, csvs, std::cout, std::cerr);
    return 0;
  } catch (const tmap::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const tmap::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
