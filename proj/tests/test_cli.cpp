#include "doctest.h"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "tmap/commands.hpp"
#include "tmap/errors.hpp"

using namespace tmap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() /
           (std::string("tmap_cli_") + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Small enough that a full synth/build/train/predict/simulate pipeline runs
// in well under a second.
RunConfig tiny_rc(const fs::path& out) {
  RunConfig rc;
  rc.addr = {20, 12, 6};
  rc.history = 4;
  rc.window = 32;
  rc.k_max = 4;
  rc.d_model = 8;
  rc.heads = 2;
  rc.d_ff = 16;
  rc.layers = 1;
  rc.epochs = 2;
  rc.batch_size = 32;
  rc.warmup_steps = 50;
  rc.holdout_frac = 0.1;
  rc.seed = 7;
  rc.synth.kind = SynthKind::ConstantStride;
  rc.synth.length = 200;
  rc.out_dir = out.string();
  return rc;
}

}  // namespace

TEST_CASE("config files parse with comments, spacing, and overrides") {
  RunConfig rc;
  std::istringstream in(
      "# experiment geometry\n"
      "address_bits = 24\n"
      "\n"
      "  d_model=16   # inline comment\n"
      "prefetcher = bo\n"
      "synth_kind = page-local\n"
      "synth_shuffle = true\n"
      "holdout_frac = 0.25\n"
      "synth_stride = -64\n");
  parse_config(in, rc);
  CHECK(rc.addr.address_bits == 24);
  CHECK(rc.d_model == 16);
  CHECK(rc.prefetcher == "bo");
  CHECK(rc.synth.kind == SynthKind::PageLocalPermutation);
  CHECK(rc.synth.shuffle);
  CHECK(rc.holdout_frac == 0.25);
  CHECK(rc.synth.stride == -64);
  CHECK(rc.addr.page_bits == 12);  // untouched keys keep their defaults

  // later assignments win, mirroring flag-after-file precedence
  apply_assignment(rc, "d_model=32");
  CHECK(rc.d_model == 32);
}

TEST_CASE("config rejects unknown keys, bad values, and bad shapes") {
  RunConfig rc;
  CHECK_THROWS_WITH_AS(apply_key(rc, "dmodel", "16"), "unknown config key 'dmodel'",
                       ConfigError);
  CHECK_THROWS_AS(apply_key(rc, "epochs", "three"), ConfigError);
  CHECK_THROWS_AS(apply_key(rc, "epochs", "12x"), ConfigError);
  CHECK_THROWS_AS(apply_key(rc, "seed", "-1"), ConfigError);
  CHECK_THROWS_AS(apply_key(rc, "synth_shuffle", "yes"), ConfigError);
  CHECK_THROWS_AS(apply_key(rc, "synth_kind", "strided"), ConfigError);
  CHECK_THROWS_AS(apply_assignment(rc, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(apply_assignment(rc, "=5"), ConfigError);

  std::istringstream in("d_model = 16\nnot_a_key = 1\n");
  try {
    parse_config(in, rc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("not_a_key") != std::string::npos);
  }
}

TEST_CASE("run config validation catches cross-field problems") {
  TempDir tmp("validate");
  RunConfig rc = tiny_rc(tmp.path);
  CHECK_NOTHROW(rc.validate());

  RunConfig bad = rc;
  bad.prefetcher = "stride";
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = rc;
  bad.window = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = rc;
  bad.holdout_frac = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = rc;
  bad.d_model = 9;  // not divisible by heads
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = rc;
  bad.cache_sets = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("synth and build produce byte-identical reruns") {
  TempDir tmp("synthbuild");
  RunConfig rc = tiny_rc(tmp.path);
  std::ostringstream log;

  std::string trace1 = cmd_synth(rc, log);
  CHECK(trace1 == (tmp.path / "trace.txt").string());
  std::string body1 = slurp(trace1);

  std::string data1 = cmd_build(rc, log);
  std::string dbody1 = slurp(data1);
  // 200 accesses, history 4: one sample per position in [history, length)
  CHECK(std::count(dbody1.begin(), dbody1.end(), '\n') == 196);

  fs::remove(trace1);
  fs::remove(data1);
  cmd_synth(rc, log);
  cmd_build(rc, log);
  CHECK(slurp(trace1) == body1);
  CHECK(slurp(data1) == dbody1);
}

TEST_CASE("build fails cleanly on a missing or too-short trace") {
  TempDir tmp("shorttrace");
  RunConfig rc = tiny_rc(tmp.path);
  std::ostringstream log;

  try {
    cmd_build(rc, log);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("trace.txt") != std::string::npos);
  }

  rc.synth.length = rc.history;  // one access short of the first sample
  cmd_synth(rc, log);
  CHECK_THROWS_AS(cmd_build(rc, log), InputError);
}

TEST_CASE("train writes a reproducible checkpoint and report") {
  TempDir tmp("train");
  RunConfig rc = tiny_rc(tmp.path);
  std::ostringstream log;
  cmd_synth(rc, log);
  cmd_build(rc, log);

  std::string ckpt = cmd_train(rc, log);
  CHECK(ckpt == (tmp.path / "final.ckpt").string());
  CHECK(fs::exists(tmp.path / "checkpoints" / "epoch_001.ckpt"));
  CHECK(fs::exists(tmp.path / "checkpoints" / "epoch_002.ckpt"));

  std::string report = slurp(tmp.path / "train_report.json");
  nlohmann::json j = nlohmann::json::parse(report);
  CHECK(j["train_samples"].get<size_t>() == 176);
  CHECK(j["holdout_samples"].get<size_t>() == 20);
  CHECK(j["epochs"].size() == 2);
  uint64_t prev_steps = 0;
  for (const auto& e : j["epochs"]) {
    CHECK(std::isfinite(e["mean_loss"].get<double>()));
    uint64_t steps = e["optimizer_steps"].get<uint64_t>();
    CHECK(steps > prev_steps);
    prev_steps = steps;
  }
  CHECK(j["total_steps"].get<uint64_t>() == prev_steps);
  // wall time stays out of the file so reruns compare byte-for-byte
  CHECK(report.find("wall") == std::string::npos);

  std::string ckpt_body = slurp(ckpt);
  fs::remove(ckpt);
  fs::remove(tmp.path / "train_report.json");
  cmd_train(rc, log);
  CHECK(slurp(ckpt) == ckpt_body);
  CHECK(slurp(tmp.path / "train_report.json") == report);
}

TEST_CASE("train surfaces a missing dataset with its path") {
  TempDir tmp("nodataset");
  RunConfig rc = tiny_rc(tmp.path);
  std::ostringstream log;
  try {
    cmd_train(rc, log);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("dataset.txt") != std::string::npos);
  }
}

TEST_CASE("the full pipeline runs and both transformap sources agree") {
  TempDir tmp("pipeline");
  RunConfig rc = tiny_rc(tmp.path);
  rc.prefetcher = "transformap";
  std::ostringstream log;
  cmd_synth(rc, log);
  cmd_build(rc, log);
  cmd_train(rc, log);

  std::string pred_path = cmd_predict(rc, log);
  std::vector<PredictedLine> lines = load_predictions(pred_path, rc.addr);
  REQUIRE(lines.size() == 200);
  for (size_t i = 0; i < lines.size(); ++i) {
    CHECK(lines[i].position == i);
    for (uint64_t a : lines[i].addrs) CHECK(a % 64 == 0);
  }

  // default resolution picks up predictions.txt
  std::string sim_json = cmd_simulate(rc, log);
  CHECK(sim_json == (tmp.path / "sim_transformap.json").string());
  std::string via_file = slurp(sim_json);
  nlohmann::json j = nlohmann::json::parse(via_file);
  CHECK(j["prefetcher"] == "transformap");
  CHECK(j["counters"]["demand_accesses"].get<uint64_t>() == 200);

  // the live-checkpoint path must reproduce the file-backed run exactly
  fs::remove(pred_path);
  rc.checkpoint_path = (tmp.path / "final.ckpt").string();
  cmd_simulate(rc, log);
  CHECK(slurp(sim_json) == via_file);
}

TEST_CASE("simulate without a prediction source is a configuration error") {
  TempDir tmp("nosource");
  RunConfig rc = tiny_rc(tmp.path);
  rc.prefetcher = "transformap";
  std::ostringstream log;
  cmd_synth(rc, log);
  CHECK_THROWS_AS(cmd_simulate(rc, log), ConfigError);
}

TEST_CASE("simulate with the none prefetcher reports zero coverage") {
  TempDir tmp("simnone");
  RunConfig rc = tiny_rc(tmp.path);
  rc.prefetcher = "none";
  rc.cache_sets = 16;
  rc.cache_ways = 2;
  std::ostringstream log;
  cmd_synth(rc, log);
  cmd_simulate(rc, log);

  nlohmann::json j = nlohmann::json::parse(slurp(tmp.path / "sim_none.json"));
  CHECK(j["metrics"]["coverage"].get<double>() == 0.0);
  CHECK(j["metrics"]["accuracy"].is_null());
  CHECK(j["counters"]["base_misses"] == j["counters"]["pref_misses"]);

  std::string csv = slurp(tmp.path / "sim_none.csv");
  CHECK(csv.rfind(SimReport::csv_header(), 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("report merges, sorts by mpki improvement, and prints a table") {
  TempDir tmp("report");
  RunConfig rc = tiny_rc(tmp.path);
  std::ostringstream log;
  cmd_synth(rc, log);

  std::vector<std::string> csvs;
  for (const char* pf : {"none", "nextline", "bo"}) {
    rc.prefetcher = pf;
    rc.cache_sets = 16;
    rc.cache_ways = 2;
    cmd_simulate(rc, log);
    csvs.push_back((tmp.path / ("sim_" + std::string(pf) + ".csv")).string());
  }

  std::ostringstream table;
  std::string merged = cmd_report(rc, csvs, table, log);
  CHECK(merged == (tmp.path / "report.csv").string());

  std::istringstream in(slurp(merged));
  std::string line;
  std::getline(in, line);
  CHECK(line == SimReport::csv_header());
  double prev = std::numeric_limits<double>::infinity();
  size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    size_t a = line.find(',');
    size_t b = line.find(',', a + 1);
    size_t c = line.find(',', b + 1);
    size_t d = line.find(',', c + 1);
    std::string cell = line.substr(c + 1, d - c - 1);
    double v = cell.empty() ? -std::numeric_limits<double>::infinity() : std::stod(cell);
    CHECK(v <= prev);
    prev = v;
  }
  CHECK(rows == 3);

  std::string printed = table.str();
  CHECK(printed.find("prefetcher") != std::string::npos);
  CHECK(printed.find("nextline") != std::string::npos);
  CHECK(printed.find("coverage") != std::string::npos);

  // single input passes through
  std::ostringstream table2;
  cmd_report(rc, {csvs[0]}, table2, log);
  std::string single = table2.str();
  CHECK(std::count(single.begin(), single.end(), '\n') == 2);
}

TEST_CASE("report rejects schema drift by naming the column") {
  TempDir tmp("schema");
  RunConfig rc = tiny_rc(tmp.path);
  std::ostringstream log;

  fs::path good = tmp.path / "good.csv";
  std::ofstream(good) << SimReport::csv_header() << "\n"
                      << "none,,0,0,10,10,10,0,0,1,1,instructions,0\n";
  fs::path renamed = tmp.path / "renamed.csv";
  std::ofstream(renamed) << "prefetcher,precision,coverage,mpki_improvement,demand_accesses,"
                            "base_misses,pref_misses,prefetches_issued,useful_prefetches,"
                            "base_mpki,pref_mpki,mpki_denominator,prefetch_delay\n"
                         << "bo,,0,0,10,10,10,0,0,1,1,instructions,0\n";
  fs::path short_row = tmp.path / "short.csv";
  std::ofstream(short_row) << SimReport::csv_header() << "\n" << "isb,0,0\n";

  std::ostringstream table;
  try {
    cmd_report(rc, {good.string(), renamed.string()}, table, log);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("precision") != std::string::npos);
    CHECK(std::string(e.what()).find("accuracy") != std::string::npos);
  }
  CHECK_THROWS_AS(cmd_report(rc, {short_row.string()}, table, log), InputError);
  CHECK_THROWS_AS(cmd_report(rc, {}, table, log), ConfigError);
  CHECK_THROWS_AS(cmd_report(rc, {(tmp.path / "absent.csv").string()}, table, log),
                  InputError);
}
