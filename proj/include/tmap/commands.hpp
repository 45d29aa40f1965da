#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "tmap/config.hpp"

namespace tmap {

// Subcommand bodies, kept CLI-framework-free so tests drive them directly.
// Each validates the merged RunConfig, does its work, writes the documented
// files under rc.out_dir, and returns the primary output path. Progress and
// summaries (including wall times) go to `log`; files stay byte-reproducible
// for a fixed config and seed.
//
// Documented filenames under out_dir, used whenever the matching path field
// in RunConfig is empty:
//   trace.txt               synth output / build + simulate input
//   dataset.txt             build output / train input
//   checkpoints/epoch_NNN.ckpt  per-epoch snapshots
//   final.ckpt              train output / predict input
//   train_report.json       per-epoch losses and step counts
//   predictions.txt         predict output / simulate (transformap) input
//   sim_<prefetcher>.json   one SimReport
//   sim_<prefetcher>.csv    the same report as a one-row CSV
//   report.csv              merged comparison table from cmd_report

std::string cmd_synth(const RunConfig& rc, std::ostream& log);
std::string cmd_build(const RunConfig& rc, std::ostream& log);
std::string cmd_train(const RunConfig& rc, std::ostream& log);
std::string cmd_predict(const RunConfig& rc, std::ostream& log);

// For prefetcher "transformap" the prediction source resolves in order:
// explicit predictions path, explicit checkpoint path (predict on the fly),
// the default predictions file if present, the default checkpoint if present.
// None of those -> ConfigError.
std::string cmd_simulate(const RunConfig& rc, std::ostream& log);

// Merges one-row simulation CSVs, checks their schema, sorts by MPKI
// improvement (descending, undefined last), prints an aligned table to
// `table_out`, and writes report.csv.
std::string cmd_report(const RunConfig& rc, const std::vector<std::string>& csv_paths,
                       std::ostream& table_out, std::ostream& log);

}  // namespace tmap
