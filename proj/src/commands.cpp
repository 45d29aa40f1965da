#include "tmap/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "tmap/beam.hpp"
#include "tmap/checkpoint.hpp"
#include "tmap/errors.hpp"
#include "tmap/labeling.hpp"

namespace fs = std::filesystem;

namespace tmap {

namespace {

fs::path resolved(const std::string& explicit_path, const RunConfig& rc, const char* fallback) {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(rc.out_dir) / fallback;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

std::string cmd_synth(const RunConfig& rc, std::ostream& log) {
  rc.validate();
  SyntheticSpec spec = rc.synth;
  spec.seed = rc.seed;
  spec.page_bits = rc.addr.page_bits;
  spec.block_bits = rc.addr.block_bits;
  if (spec.length == 0) throw ConfigError("synth_length must be positive");

  std::vector<TraceRecord> records = generate_synthetic(spec);
  for (const TraceRecord& r : records) {
    if (r.addr > rc.addr.max_address()) {
      throw ConfigError("synthetic trace escapes the " +
                        std::to_string(rc.addr.address_bits) +
                        "-bit address space; raise address_bits or shrink the generator");
    }
  }

  fs::path path = resolved(rc.trace_path, rc, "trace.txt");
  std::ofstream out = open_out(path);
  serialize_trace(out, records);
  close_out(out, path);
  log << "wrote " << records.size() << " accesses to " << path.string() << "\n";
  return path.string();
}

std::string cmd_build(const RunConfig& rc, std::ostream& log) {
  rc.validate();
  fs::path trace_path = resolved(rc.trace_path, rc, "trace.txt");
  ParsedTrace trace = load_trace(trace_path.string(), rc.addr);
  std::vector<Sample> samples =
      build_dataset(trace.records, rc.addr, rc.history, rc.window, rc.k_max);

  fs::path path = resolved(rc.dataset_path, rc, "dataset.txt");
  std::ofstream out = open_out(path);
  write_dataset(out, samples);
  close_out(out, path);

  std::vector<size_t> hist(rc.k_max + 1, 0);
  for (const Sample& s : samples) ++hist[s.target.size() - 1];  // target ends with END
  log << "built " << samples.size() << " samples from " << trace.records.size()
      << " accesses -> " << path.string() << "\n";
  for (size_t len = 0; len < hist.size(); ++len) {
    if (hist[len]) log << "  label length " << len << ": " << hist[len] << " samples\n";
  }
  return path.string();
}

std::string cmd_train(const RunConfig& rc, std::ostream& log) {
  rc.validate();
  fs::path dataset_path = resolved(rc.dataset_path, rc, "dataset.txt");
  std::vector<Sample> dataset =
      load_dataset(dataset_path.string(), rc.addr, rc.history, rc.k_max);

  ModelConfig cfg = rc.model_config();
  fs::create_directories(rc.out_dir);
  TrainConfig tc = rc.train_config((fs::path(rc.out_dir) / "checkpoints").string());
  log << "training on " << dataset.size() << " samples ("
      << expected_parameter_count(cfg) << " parameters)\n";
  auto [params, report] = train<float>(dataset, cfg, rc.addr, rc.window, tc, &log);

  fs::path ckpt_path = resolved(rc.checkpoint_path, rc, "final.ckpt");
  fs::create_directories(ckpt_path.parent_path().empty() ? "." : ckpt_path.parent_path());
  save_checkpoint(ckpt_path.string(), params, cfg, rc.addr, rc.window);

  // Wall times stay in the console log: the report file is part of the
  // byte-reproducibility contract.
  nlohmann::ordered_json j;
  j["address"] = {{"address_bits", rc.addr.address_bits},
                  {"page_bits", rc.addr.page_bits},
                  {"block_bits", rc.addr.block_bits}};
  j["model"] = {{"d_model", cfg.d_model},   {"heads", cfg.heads},
                {"d_ff", cfg.d_ff},         {"layers", cfg.n_layers},
                {"history", cfg.history_len}, {"k_max", cfg.k_max},
                {"window", rc.window}};
  j["train_samples"] = report.train_samples;
  j["holdout_samples"] = report.holdout_samples;
  j["total_steps"] = report.total_steps;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const EpochStats& e : report.epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["mean_loss"] = e.mean_loss;
    if (e.holdout_token_accuracy) {
      row["holdout_token_accuracy"] = *e.holdout_token_accuracy;
    } else {
      row["holdout_token_accuracy"] = nullptr;
    }
    row["optimizer_steps"] = e.optimizer_steps;
    j["epochs"].push_back(std::move(row));
  }
  fs::path report_path = fs::path(rc.out_dir) / "train_report.json";
  std::ofstream out = open_out(report_path);
  out << j.dump(2) << "\n";
  close_out(out, report_path);

  log << "saved " << ckpt_path.string() << " and " << report_path.string() << "\n";
  return ckpt_path.string();
}

std::string cmd_predict(const RunConfig& rc, std::ostream& log) {
  rc.validate();
  fs::path ckpt_path = resolved(rc.checkpoint_path, rc, "final.ckpt");
  CheckpointData<float> data = load_checkpoint<float>(ckpt_path.string());

  fs::path trace_path = resolved(rc.trace_path, rc, "trace.txt");
  ParsedTrace trace = load_trace(trace_path.string(), data.addr);
  log << "predicting " << trace.records.size() << " positions with beam width "
      << rc.beam_width << "\n";
  std::vector<PredictedLine> lines =
      predict_trace(data.params, data.model, data.addr, trace.records, rc.beam_width, &log);

  fs::path path = resolved(rc.predictions_path, rc, "predictions.txt");
  std::ofstream out = open_out(path);
  write_predictions(out, lines);
  close_out(out, path);
  log << "wrote " << path.string() << "\n";
  return path.string();
}

std::string cmd_simulate(const RunConfig& rc, std::ostream& log) {
  rc.validate();
  fs::path trace_path = resolved(rc.trace_path, rc, "trace.txt");
  ParsedTrace trace = load_trace(trace_path.string(), rc.addr);

  SimReport report;
  if (rc.prefetcher == "transformap") {
    auto predict_live = [&](const std::string& ckpt) {
      CheckpointData<float> data = load_checkpoint<float>(ckpt);
      log << "predicting on the fly from " << ckpt << "\n";
      return predict_trace(data.params, data.model, data.addr, trace.records, rc.beam_width,
                           &log);
    };
    fs::path pred_default = fs::path(rc.out_dir) / "predictions.txt";
    fs::path ckpt_default = fs::path(rc.out_dir) / "final.ckpt";
    std::vector<PredictedLine> lines;
    if (!rc.predictions_path.empty()) {
      lines = load_predictions(rc.predictions_path, rc.addr);
    } else if (!rc.checkpoint_path.empty()) {
      lines = predict_live(rc.checkpoint_path);
    } else if (fs::exists(pred_default)) {
      lines = load_predictions(pred_default.string(), rc.addr);
    } else if (fs::exists(ckpt_default)) {
      lines = predict_live(ckpt_default.string());
    } else {
      throw ConfigError("prefetcher 'transformap' needs a predictions file or a checkpoint"
                        " (run predict first, or pass --predictions / --checkpoint)");
    }
    report = simulate_predictions(trace, std::move(lines), rc.cache_config(), rc.addr,
                                  rc.prefetch_delay);
  } else if (rc.prefetcher == "none") {
    NoPrefetcher pf;
    report = simulate(trace, pf, rc.cache_config(), rc.addr, rc.prefetch_delay);
  } else if (rc.prefetcher == "nextline") {
    NextLinePrefetcher pf(rc.addr);
    report = simulate(trace, pf, rc.cache_config(), rc.addr, rc.prefetch_delay);
  } else if (rc.prefetcher == "bo") {
    BestOffsetPrefetcher pf(rc.addr, rc.bo);
    report = simulate(trace, pf, rc.cache_config(), rc.addr, rc.prefetch_delay);
  } else if (rc.prefetcher == "isb") {
    IsbPrefetcher pf(rc.addr, rc.isb);
    report = simulate(trace, pf, rc.cache_config(), rc.addr, rc.prefetch_delay);
  } else {
    throw ConfigError("unknown prefetcher '" + rc.prefetcher + "'");  // validate() caught it
  }

  fs::path json_path = fs::path(rc.out_dir) / ("sim_" + rc.prefetcher + ".json");
  std::ofstream jout = open_out(json_path);
  jout << report.to_json();
  close_out(jout, json_path);

  fs::path csv_path = fs::path(rc.out_dir) / ("sim_" + rc.prefetcher + ".csv");
  std::ofstream cout_ = open_out(csv_path);
  cout_ << SimReport::csv_header() << "\n" << report.csv_row() << "\n";
  close_out(cout_, csv_path);

  log << rc.prefetcher << ": misses " << report.base_misses << " -> " << report.pref_misses
      << " over " << report.demand_accesses << " accesses";
  if (report.coverage) log << ", coverage " << *report.coverage;
  if (report.accuracy) log << ", accuracy " << *report.accuracy;
  log << "\n" << "wrote " << json_path.string() << " and " << csv_path.string() << "\n";
  return json_path.string();
}

std::string cmd_report(const RunConfig& rc, const std::vector<std::string>& csv_paths,
                       std::ostream& table_out, std::ostream& log) {
  rc.validate();
  if (csv_paths.empty()) throw ConfigError("report needs at least one simulation CSV");

  const std::vector<std::string> expected = split_csv(SimReport::csv_header());
  std::vector<std::vector<std::string>> rows;
  for (const std::string& p : csv_paths) {
    std::ifstream in(p);
    if (!in) throw InputError("cannot open simulation CSV '" + p + "'");
    std::string line;
    if (!std::getline(in, line)) throw InputError("'" + p + "' is empty");
    std::vector<std::string> header = split_csv(line);
    if (header.size() != expected.size()) {
      throw InputError("'" + p + "' has " + std::to_string(header.size()) +
                       " columns, expected " + std::to_string(expected.size()));
    }
    for (size_t c = 0; c < expected.size(); ++c) {
      if (header[c] != expected[c]) {
        throw InputError("'" + p + "' column " + std::to_string(c + 1) + " is '" + header[c] +
                         "', expected '" + expected[c] + "'");
      }
    }
    size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> cells = split_csv(line);
      if (cells.size() != expected.size()) {
        throw InputError("'" + p + "' line " + std::to_string(lineno) + " has " +
                         std::to_string(cells.size()) + " cells, expected " +
                         std::to_string(expected.size()));
      }
      rows.push_back(std::move(cells));
    }
  }

  // mpki_improvement lives in column 3; undefined metrics sink to the bottom
  auto sort_key = [](const std::vector<std::string>& row) {
    const std::string& cell = row[3];
    if (cell.empty()) return -std::numeric_limits<double>::infinity();
    return std::stod(cell);
  };
  std::stable_sort(rows.begin(), rows.end(),
                   [&](const auto& a, const auto& b) { return sort_key(a) > sort_key(b); });

  fs::path path = fs::path(rc.out_dir) / "report.csv";
  std::ofstream out = open_out(path);
  out << SimReport::csv_header() << "\n";
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << "\n";
  }
  close_out(out, path);

  auto metric = [](const std::string& cell) -> std::string {
    if (cell.empty()) return "-";
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << std::stod(cell);
    return o.str();
  };
  table_out << std::left << std::setw(14) << "prefetcher" << std::right << std::setw(10)
            << "accuracy" << std::setw(10) << "coverage" << std::setw(12) << "mpki_impr"
            << std::setw(12) << "base_miss" << std::setw(12) << "pref_miss" << "\n";
  for (const auto& row : rows) {
    table_out << std::left << std::setw(14) << row[0] << std::right << std::setw(10)
              << metric(row[1]) << std::setw(10) << metric(row[2]) << std::setw(12)
              << metric(row[3]) << std::setw(12) << row[5] << std::setw(12) << row[6] << "\n";
  }

  log << "merged " << rows.size() << " rows from " << csv_paths.size() << " files -> "
      << path.string() << "\n";
  return path.string();
}

}  // namespace tmap
