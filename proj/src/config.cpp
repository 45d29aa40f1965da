#include "tmap/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include "tmap/errors.hpp"

namespace tmap {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  uint64_t out = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out, 10);
  if (ec != std::errc() || ptr != last || value.empty()) bad_value(key, value, "an unsigned integer");
  return out;
}

uint32_t parse_u32(const std::string& key, const std::string& value) {
  uint64_t v = parse_u64(key, value);
  if (v > std::numeric_limits<uint32_t>::max()) bad_value(key, value, "a 32-bit unsigned integer");
  return static_cast<uint32_t>(v);
}

int64_t parse_i64(const std::string& key, const std::string& value) {
  int64_t out = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out, 10);
  if (ec != std::errc() || ptr != last || value.empty()) bad_value(key, value, "an integer");
  return out;
}

double parse_f64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value, "a number");
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value, "a number");
  }
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true|false|1|0)");
}

}  // namespace

TrainConfig RunConfig::train_config(std::string checkpoint_dir) const {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch_size;
  tc.seed = seed;
  tc.warmup_steps = warmup_steps;
  tc.holdout_frac = holdout_frac;
  tc.eval_cap = eval_cap;
  tc.checkpoint_dir = std::move(checkpoint_dir);
  return tc;
}

void RunConfig::validate() const {
  addr.validate();
  model_config().validate();
  train_config("").validate();
  cache_config().validate();
  bo.validate();
  isb.validate();
  if (window == 0) throw ConfigError("window must be positive");
  if (beam_width == 0) throw ConfigError("beam_width must be positive");
  if (prefetcher != "none" && prefetcher != "nextline" && prefetcher != "bo" &&
      prefetcher != "isb" && prefetcher != "transformap") {
    throw ConfigError("unknown prefetcher '" + prefetcher +
                      "' (expected none|nextline|bo|isb|transformap)");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

void apply_key(RunConfig& rc, const std::string& key, const std::string& value) {
  if (key == "address_bits") rc.addr.address_bits = parse_u32(key, value);
  else if (key == "page_bits") rc.addr.page_bits = parse_u32(key, value);
  else if (key == "block_bits") rc.addr.block_bits = parse_u32(key, value);
  else if (key == "history") rc.history = parse_u32(key, value);
  else if (key == "window") rc.window = parse_u32(key, value);
  else if (key == "k_max") rc.k_max = parse_u32(key, value);
  else if (key == "d_model") rc.d_model = parse_u32(key, value);
  else if (key == "heads") rc.heads = parse_u32(key, value);
  else if (key == "d_ff") rc.d_ff = parse_u32(key, value);
  else if (key == "layers") rc.layers = parse_u32(key, value);
  else if (key == "epochs") rc.epochs = parse_u32(key, value);
  else if (key == "batch_size") rc.batch_size = parse_u32(key, value);
  else if (key == "warmup_steps") rc.warmup_steps = parse_u32(key, value);
  else if (key == "holdout_frac") rc.holdout_frac = parse_f64(key, value);
  else if (key == "eval_cap") rc.eval_cap = parse_u32(key, value);
  else if (key == "seed") rc.seed = parse_u64(key, value);
  else if (key == "beam_width") rc.beam_width = parse_u32(key, value);
  else if (key == "prefetcher") rc.prefetcher = value;
  else if (key == "cache_sets") rc.cache_sets = parse_u32(key, value);
  else if (key == "cache_ways") rc.cache_ways = parse_u32(key, value);
  else if (key == "prefetch_delay") rc.prefetch_delay = parse_u32(key, value);
  else if (key == "bo_ring_entries") rc.bo.ring_entries = parse_u32(key, value);
  else if (key == "bo_max_offset") rc.bo.max_offset = parse_u32(key, value);
  else if (key == "bo_round_len") rc.bo.round_len = parse_u32(key, value);
  else if (key == "isb_last_entries") rc.isb.last_table_entries = parse_u64(key, value);
  else if (key == "isb_pair_entries") rc.isb.pair_table_entries = parse_u64(key, value);
  else if (key == "synth_kind") rc.synth.kind = parse_synth_kind(value);
  else if (key == "synth_length") rc.synth.length = parse_u64(key, value);
  else if (key == "synth_start") rc.synth.start = parse_u64(key, value);
  else if (key == "synth_stride") rc.synth.stride = parse_i64(key, value);
  else if (key == "synth_pages") rc.synth.pages = parse_u64(key, value);
  else if (key == "synth_interleave") rc.synth.interleave = parse_u32(key, value);
  else if (key == "synth_period") rc.synth.period = parse_u64(key, value);
  else if (key == "synth_base_page") rc.synth.base_page = parse_u64(key, value);
  else if (key == "synth_shuffle") rc.synth.shuffle = parse_flag(key, value);
  else if (key == "out_dir") rc.out_dir = value;
  else if (key == "trace") rc.trace_path = value;
  else if (key == "dataset") rc.dataset_path = value;
  else if (key == "checkpoint") rc.checkpoint_path = value;
  else if (key == "predictions") rc.predictions_path = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_assignment(RunConfig& rc, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + assignment + "'");
  apply_key(rc, key, value);
}

void parse_config(std::istream& in, RunConfig& rc) {
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_assignment(rc, line);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void load_config(const std::string& path, RunConfig& rc) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  try {
    parse_config(in, rc);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace tmap
