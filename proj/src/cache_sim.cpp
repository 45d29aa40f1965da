#include "tmap/cache_sim.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "json.hpp"
#include "tmap/errors.hpp"

namespace tmap {

void CacheConfig::validate() const {
  if (sets == 0 || (sets & (sets - 1)) != 0) {
    throw ConfigError("cache sets must be a power of two, got " + std::to_string(sets));
  }
  if (ways == 0) throw ConfigError("cache needs at least one way");
  if (block_bits == 0 || block_bits >= 64) {
    throw ConfigError("cache block_bits out of range: " + std::to_string(block_bits));
  }
}

CacheState::CacheState(const CacheConfig& cfg, const AddressConfig& addr)
    : cfg_(cfg), addr_(addr) {
  cfg_.validate();
  addr_.validate();
  if (cfg_.block_bits != addr_.block_bits) {
    throw ConfigError("cache block_bits " + std::to_string(cfg_.block_bits) +
                      " disagrees with address geometry " + std::to_string(addr_.block_bits));
  }
  sets_.resize(cfg_.sets);
}

CacheState::Outcome CacheState::access(uint64_t addr, bool is_prefetch) {
  uint64_t block = to_block_address(addr, addr_);
  std::vector<Line>& set = sets_[block % cfg_.sets];

  for (size_t i = 0; i < set.size(); ++i) {
    if (set[i].block != block) continue;
    Outcome out;
    out.hit = true;
    if (is_prefetch) return out;  // resident line: prefetch is a no-op
    if (set[i].prefetched && !set[i].used) {
      set[i].used = true;
      out.freshly_useful = true;
    }
    Line line = set[i];
    set.erase(set.begin() + static_cast<std::ptrdiff_t>(i));
    set.insert(set.begin(), line);  // promote to MRU
    return out;
  }

  Line line;
  line.block = block;
  line.prefetched = is_prefetch;
  set.insert(set.begin(), line);
  if (set.size() > cfg_.ways) set.pop_back();
  return {};
}

uint64_t CacheState::resident_lines() const {
  uint64_t n = 0;
  for (const auto& set : sets_) n += set.size();
  return n;
}

namespace {

struct PendingPrefetch {
  uint64_t ready = 0;  // first access index it may precede
  uint64_t addr = 0;
};

std::optional<double> ratio(uint64_t num, uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

SimReport simulate(const ParsedTrace& trace, Prefetcher& prefetcher, const CacheConfig& cc,
                   const AddressConfig& addr, uint32_t prefetch_delay) {
  cc.validate();
  addr.validate();

  SimReport report;
  report.prefetcher = std::string(prefetcher.name());
  report.cache = cc;
  report.prefetch_delay = prefetch_delay;
  report.demand_accesses = trace.records.size();
  report.notes.push_back(
      "baselines are teaching-grade simplifications: best-offset omits the original's "
      "timeliness test and disable threshold; isb uses a direct (pc, block) pair table "
      "without structural address translation");
  report.notes.push_back(
      "accuracy = useful/issued, coverage = (base_misses - pref_misses)/base_misses, "
      "mpki improvement = (base_mpki - pref_mpki)/base_mpki");

  if (trace.records.empty()) {
    report.notes.push_back("empty trace: metrics undefined");
    return report;
  }

  // Pass 1: unassisted cache.
  {
    CacheState cache(cc, addr);
    for (const TraceRecord& r : trace.records) {
      if (!cache.access(r.addr, false).hit) ++report.base_misses;
    }
  }

  // Pass 2: same demand stream with the prefetcher in the loop.
  {
    CacheState cache(cc, addr);
    std::deque<PendingPrefetch> pending;
    for (size_t i = 0; i < trace.records.size(); ++i) {
      while (!pending.empty() && pending.front().ready <= i) {
        cache.access(pending.front().addr, true);
        pending.pop_front();
      }
      const TraceRecord& r = trace.records[i];
      CacheState::Outcome out = cache.access(r.addr, false);
      if (!out.hit) ++report.pref_misses;
      if (out.freshly_useful) ++report.useful_prefetches;
      std::vector<uint64_t> emitted = prefetcher.on_access(r.pc, r.addr, !out.hit);
      for (uint64_t target : emitted) {
        ++report.prefetches_issued;
        pending.push_back({i + 1 + prefetch_delay, target});
      }
    }
  }

  uint64_t first = trace.records.front().instr_id;
  uint64_t last = trace.records.back().instr_id;
  report.instr_span = last - first;
  uint64_t denominator = report.instr_span;
  if (!trace.has_instr_ids || denominator == 0) {
    report.per_kilo_access = true;
    denominator = report.demand_accesses;
    report.notes.push_back(
        "trace lacks usable instruction ids: mpki computed per kilo-access");
  }

  if (denominator > 0) {
    double kilo = static_cast<double>(denominator) / 1000.0;
    report.base_mpki = static_cast<double>(report.base_misses) / kilo;
    report.pref_mpki = static_cast<double>(report.pref_misses) / kilo;
  }
  report.accuracy = ratio(report.useful_prefetches, report.prefetches_issued);
  if (report.base_misses > 0) {
    report.coverage = (static_cast<double>(report.base_misses) -
                       static_cast<double>(report.pref_misses)) /
                      static_cast<double>(report.base_misses);
  }
  if (report.base_mpki && *report.base_mpki > 0) {
    report.mpki_improvement = (*report.base_mpki - *report.pref_mpki) / *report.base_mpki;
  }
  return report;
}

SimReport simulate_predictions(const ParsedTrace& trace, std::vector<PredictedLine> lines,
                               const CacheConfig& cc, const AddressConfig& addr,
                               uint32_t prefetch_delay) {
  if (!lines.empty() && lines.back().position >= trace.records.size()) {
    throw InputError("prediction position " + std::to_string(lines.back().position) +
                     " is outside the trace (" + std::to_string(trace.records.size()) +
                     " accesses)");
  }
  PredictionPrefetcher prefetcher(addr, std::move(lines));
  return simulate(trace, prefetcher, cc, addr, prefetch_delay);
}

std::string SimReport::to_json() const {
  nlohmann::ordered_json j;
  j["prefetcher"] = prefetcher;
  j["cache"] = {{"sets", cache.sets}, {"ways", cache.ways}, {"block_bits", cache.block_bits}};
  j["prefetch_delay"] = prefetch_delay;
  j["counters"] = {{"demand_accesses", demand_accesses},
                   {"base_misses", base_misses},
                   {"pref_misses", pref_misses},
                   {"prefetches_issued", prefetches_issued},
                   {"useful_prefetches", useful_prefetches}};
  j["instr_span"] = instr_span;
  j["mpki_denominator"] = per_kilo_access ? "accesses" : "instructions";
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  j["metrics"] = {{"base_mpki", opt(base_mpki)},
                  {"pref_mpki", opt(pref_mpki)},
                  {"accuracy", opt(accuracy)},
                  {"coverage", opt(coverage)},
                  {"mpki_improvement", opt(mpki_improvement)}};
  j["notes"] = notes;
  return j.dump(2) + "\n";
}

std::string SimReport::csv_header() {
  return "prefetcher,accuracy,coverage,mpki_improvement,demand_accesses,base_misses,"
         "pref_misses,prefetches_issued,useful_prefetches,base_mpki,pref_mpki,"
         "mpki_denominator,prefetch_delay";
}

std::string SimReport::csv_row() const {
  std::ostringstream out;
  out.precision(10);
  auto cell = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    std::ostringstream o;
    o.precision(10);
    o << *v;
    return o.str();
  };
  out << prefetcher << ',' << cell(accuracy) << ',' << cell(coverage) << ','
      << cell(mpki_improvement) << ',' << demand_accesses << ',' << base_misses << ','
      << pref_misses << ',' << prefetches_issued << ',' << useful_prefetches << ','
      << cell(base_mpki) << ',' << cell(pref_mpki) << ','
      << (per_kilo_access ? "accesses" : "instructions") << ',' << prefetch_delay;
  return out.str();
}

}  // namespace tmap
