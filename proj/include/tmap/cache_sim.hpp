#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tmap/address.hpp"
#include "tmap/prefetchers.hpp"
#include "tmap/trace.hpp"

namespace tmap {

struct CacheConfig {
  uint32_t sets = 2048;  // power of two
  uint32_t ways = 16;
  uint32_t block_bits = 6;  // must agree with the AddressConfig in use

  void validate() const;
  uint64_t capacity_blocks() const { return uint64_t{sets} * ways; }
};

// Set-associative LRU cache. Demand hits refresh recency; misses insert at
// MRU and evict the LRU way. Prefetch insertions also land at MRU but a
// prefetch of a resident line is a no-op, leaving recency untouched.
class CacheState {
 public:
  CacheState(const CacheConfig& cfg, const AddressConfig& addr);

  struct Outcome {
    bool hit = false;
    bool freshly_useful = false;  // this demand hit was the line's first after a prefetch
  };

  Outcome access(uint64_t addr, bool is_prefetch);

  uint64_t resident_lines() const;

 private:
  struct Line {
    uint64_t block = 0;
    bool prefetched = false;
    bool used = false;
  };

  CacheConfig cfg_;
  AddressConfig addr_;
  std::vector<std::vector<Line>> sets_;  // each MRU-first
};

// Two-pass evaluation result. Metrics are left unset when their denominator
// is zero (empty trace, no misses, no prefetches); the JSON writes null.
struct SimReport {
  std::string prefetcher;
  CacheConfig cache;
  uint32_t prefetch_delay = 0;

  uint64_t demand_accesses = 0;
  uint64_t base_misses = 0;  // pass without prefetcher
  uint64_t pref_misses = 0;  // pass with prefetcher
  uint64_t prefetches_issued = 0;
  uint64_t useful_prefetches = 0;
  uint64_t instr_span = 0;         // last minus first instr_id
  bool per_kilo_access = false;    // true when MPKI degrades to per-kilo-access

  std::optional<double> base_mpki;
  std::optional<double> pref_mpki;
  std::optional<double> accuracy;          // useful / issued
  std::optional<double> coverage;          // (base - pref) / base
  std::optional<double> mpki_improvement;  // (base_mpki - pref_mpki) / base_mpki

  std::vector<std::string> notes;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Replays the demand stream twice, without and with the prefetcher, and
// derives the metrics. Emissions triggered by access i enter the cache
// before access i + 1 + prefetch_delay; whatever is still pending when the
// trace ends was issued but can never turn useful.
SimReport simulate(const ParsedTrace& trace, Prefetcher& prefetcher, const CacheConfig& cc,
                   const AddressConfig& addr, uint32_t prefetch_delay = 0);

// Prediction-file convenience wrapper: validates positions against the trace
// before delegating to the generic loop.
SimReport simulate_predictions(const ParsedTrace& trace, std::vector<PredictedLine> lines,
                               const CacheConfig& cc, const AddressConfig& addr,
                               uint32_t prefetch_delay = 0);

}  // namespace tmap
