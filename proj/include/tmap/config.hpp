#pragma once

#include <iosfwd>
#include <string>

#include "tmap/address.hpp"
#include "tmap/cache_sim.hpp"
#include "tmap/model.hpp"
#include "tmap/prefetchers.hpp"
#include "tmap/trace.hpp"
#include "tmap/train.hpp"

namespace tmap {

// Everything a run needs, merged from defaults, an optional config file, and
// command-line overrides (last writer wins). One seed feeds every random
// consumer through named substreams, so a RunConfig pins a run exactly.
struct RunConfig {
  AddressConfig addr{64, 12, 6};

  // dataset and model shape
  uint32_t history = 8;  // accesses per input sequence
  uint32_t window = 64;  // lookahead scanned for same-page followers
  uint32_t k_max = 8;    // label length cap = max prefetch degree
  uint32_t d_model = 64;
  uint32_t heads = 4;
  uint32_t d_ff = 256;
  uint32_t layers = 2;

  // training
  uint32_t epochs = 30;
  uint32_t batch_size = 64;
  uint32_t warmup_steps = 2000;
  double holdout_frac = 0.1;
  uint32_t eval_cap = 256;
  uint64_t seed = 1;

  // prediction
  uint32_t beam_width = 2;

  // simulation
  std::string prefetcher = "none";  // none|nextline|bo|isb|transformap
  uint32_t cache_sets = 2048;
  uint32_t cache_ways = 16;
  uint32_t prefetch_delay = 0;
  BestOffsetConfig bo;
  IsbConfig isb;

  // synthetic trace shape (the generator seed is the global seed)
  SyntheticSpec synth;

  // file locations; empty path fields fall back to the documented names
  // under out_dir (trace.txt, dataset.txt, final.ckpt, predictions.txt)
  std::string out_dir = "out";
  std::string trace_path;
  std::string dataset_path;
  std::string checkpoint_path;
  std::string predictions_path;

  ModelConfig model_config() const {
    return make_model_config(addr, history, k_max, d_model, heads, d_ff, layers);
  }
  TrainConfig train_config(std::string checkpoint_dir) const;
  CacheConfig cache_config() const { return CacheConfig{cache_sets, cache_ways, addr.block_bits}; }

  // Cross-field validation of the whole merged view; called once per command
  // before any work starts.
  void validate() const;
};

// Applies one `key=value` assignment. Unknown keys and unparsable values
// throw ConfigError naming the key. This is the single mutation path shared
// by config files and command-line flags.
void apply_key(RunConfig& rc, const std::string& key, const std::string& value);

// Splits "key=value" and delegates to apply_key.
void apply_assignment(RunConfig& rc, const std::string& assignment);

// Flat key=value text, one assignment per line. '#' starts a comment, blank
// lines are skipped, whitespace around key and value is trimmed.
void parse_config(std::istream& in, RunConfig& rc);
void load_config(const std::string& path, RunConfig& rc);

}  // namespace tmap
