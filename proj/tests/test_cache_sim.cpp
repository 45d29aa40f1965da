#include "doctest.h"

#include <algorithm>
#include <span>

#include "tmap/cache_sim.hpp"
#include "tmap/rng.hpp"

using namespace tmap;

namespace {

const AddressConfig kAddr{30, 12, 6};

uint64_t block_addr(uint64_t block) { return block << 6; }

ParsedTrace make_trace(const std::vector<uint64_t>& blocks, uint64_t instr_step = 8) {
  ParsedTrace t;
  for (size_t i = 0; i < blocks.size(); ++i) {
    TraceRecord r;
    r.instr_id = instr_step * i;
    r.pc = 0x400000;
    r.addr = block_addr(blocks[i]);
    t.records.push_back(r);
  }
  return t;
}

// Clairvoyant reference: on access i it requests exactly the block of access
// i+1. The spec-level upper bound every real prefetcher chases.
class OraclePrefetcher final : public Prefetcher {
 public:
  OraclePrefetcher(const AddressConfig& addr, std::span<const TraceRecord> records)
      : addr_(addr) {
    for (const TraceRecord& r : records) blocks_.push_back(to_block_address(r.addr, addr_));
  }
  std::string_view name() const override { return "oracle"; }
  std::vector<uint64_t> on_access(uint64_t, uint64_t, bool) override {
    size_t i = index_++;
    if (i + 1 >= blocks_.size()) return {};
    return {blocks_[i + 1] << addr_.block_bits};
  }

 private:
  AddressConfig addr_;
  std::vector<uint64_t> blocks_;
  size_t index_ = 0;
};

}  // namespace

TEST_CASE("lru micro-oracle: A B A in a 1-set 2-way cache") {
  CacheConfig cc{1, 2, 6};
  CacheState cache(cc, kAddr);
  CHECK_FALSE(cache.access(block_addr(1), false).hit);
  CHECK_FALSE(cache.access(block_addr(2), false).hit);
  CHECK(cache.access(block_addr(1), false).hit);
  CHECK(cache.resident_lines() == 2);
}

TEST_CASE("lru micro-oracle: A B C A evicts the oldest") {
  CacheConfig cc{1, 2, 6};
  CacheState cache(cc, kAddr);
  CHECK_FALSE(cache.access(block_addr(1), false).hit);
  CHECK_FALSE(cache.access(block_addr(2), false).hit);
  CHECK_FALSE(cache.access(block_addr(3), false).hit);  // evicts 1
  CHECK_FALSE(cache.access(block_addr(1), false).hit);  // 1 is gone
  CHECK(cache.resident_lines() == 2);
}

TEST_CASE("lru micro-oracle: prefetched line turns useful exactly once") {
  CacheConfig cc{1, 2, 6};
  CacheState cache(cc, kAddr);
  CacheState::Outcome out = cache.access(block_addr(9), true);
  CHECK_FALSE(out.hit);
  CHECK_FALSE(out.freshly_useful);

  out = cache.access(block_addr(9), false);
  CHECK(out.hit);
  CHECK(out.freshly_useful);

  out = cache.access(block_addr(9), false);
  CHECK(out.hit);
  CHECK_FALSE(out.freshly_useful);  // used bit already spent
}

TEST_CASE("demand hits promote to MRU") {
  CacheConfig cc{1, 2, 6};
  CacheState cache(cc, kAddr);
  cache.access(block_addr(1), false);
  cache.access(block_addr(2), false);       // order: 2, 1
  CHECK(cache.access(block_addr(1), false).hit);  // order: 1, 2
  cache.access(block_addr(3), false);       // evicts 2
  CHECK(cache.access(block_addr(1), false).hit);
  CHECK_FALSE(cache.access(block_addr(2), false).hit);
}

TEST_CASE("prefetch of a resident line leaves recency untouched") {
  CacheConfig cc{1, 2, 6};
  CacheState cache(cc, kAddr);
  cache.access(block_addr(1), false);
  cache.access(block_addr(2), false);  // order: 2, 1
  CHECK(cache.access(block_addr(1), true).hit);  // no-op, order still: 2, 1
  cache.access(block_addr(3), false);            // evicts LRU = 1
  CHECK(cache.access(block_addr(2), false).hit);
  CHECK_FALSE(cache.access(block_addr(1), false).hit);
}

TEST_CASE("cache geometry validation") {
  CHECK_THROWS_AS(CacheState(CacheConfig{0, 2, 6}, kAddr), ConfigError);
  CHECK_THROWS_AS(CacheState(CacheConfig{3, 2, 6}, kAddr), ConfigError);   // not a power of two
  CHECK_THROWS_AS(CacheState(CacheConfig{4, 0, 6}, kAddr), ConfigError);
  CHECK_THROWS_AS(CacheState(CacheConfig{4, 2, 12}, kAddr), ConfigError);  // block_bits mismatch
}

TEST_CASE("no-op prefetcher changes nothing") {
  std::vector<uint64_t> blocks;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) blocks.push_back(rng.below(64));
  ParsedTrace trace = make_trace(blocks);

  NoPrefetcher none;
  SimReport r = simulate(trace, none, CacheConfig{4, 2, 6}, kAddr);
  CHECK(r.prefetcher == "none");
  CHECK(r.base_misses == r.pref_misses);
  CHECK(r.prefetches_issued == 0);
  CHECK(r.useful_prefetches == 0);
  REQUIRE(r.coverage.has_value());
  CHECK(*r.coverage == 0.0);
  CHECK_FALSE(r.accuracy.has_value());  // 0 issued: undefined
  REQUIRE(r.mpki_improvement.has_value());
  CHECK(*r.mpki_improvement == 0.0);
}

TEST_CASE("oracle prefetcher on a cold stride trace: accuracy 1, all but one miss covered") {
  std::vector<uint64_t> blocks;
  for (uint64_t i = 0; i < 64; ++i) blocks.push_back(i);
  ParsedTrace trace = make_trace(blocks);

  OraclePrefetcher oracle(kAddr, trace.records);
  SimReport r = simulate(trace, oracle, CacheConfig{64, 2, 6}, kAddr);
  CHECK(r.base_misses == 64);  // all compulsory
  CHECK(r.pref_misses == 1);   // only the very first access
  CHECK(r.prefetches_issued == 63);
  CHECK(r.useful_prefetches == 63);
  REQUIRE(r.accuracy.has_value());
  CHECK(*r.accuracy == 1.0);
  REQUIRE(r.coverage.has_value());
  CHECK(*r.coverage == doctest::Approx(63.0 / 64.0).epsilon(1e-12));
  REQUIRE(r.mpki_improvement.has_value());
  CHECK(*r.mpki_improvement == doctest::Approx(*r.coverage).epsilon(1e-12));
}

TEST_CASE("next-line covers a stride trace at delay 0 but not at delay 2") {
  std::vector<uint64_t> blocks;
  for (uint64_t i = 0; i < 100; ++i) blocks.push_back(i);
  ParsedTrace trace = make_trace(blocks);

  NextLinePrefetcher pf0(kAddr);
  SimReport timely = simulate(trace, pf0, CacheConfig{64, 4, 6}, kAddr, 0);
  CHECK(timely.pref_misses == 1);
  CHECK(timely.useful_prefetches == 99);
  CHECK(timely.prefetches_issued == 100);
  CHECK(*timely.coverage == doctest::Approx(0.99).epsilon(1e-12));

  NextLinePrefetcher pf2(kAddr);
  SimReport late = simulate(trace, pf2, CacheConfig{64, 4, 6}, kAddr, 2);
  // the block arrives after its own demand miss already happened
  CHECK(late.pref_misses == late.base_misses);
  CHECK(late.useful_prefetches == 0);
  CHECK(*late.coverage == 0.0);
}

TEST_CASE("pending prefetches beyond the trace end stay issued but useless") {
  ParsedTrace trace = make_trace({1, 2, 3});
  NextLinePrefetcher pf(kAddr);
  SimReport r = simulate(trace, pf, CacheConfig{4, 2, 6}, kAddr, 50);
  CHECK(r.prefetches_issued == 3);  // every access emitted
  CHECK(r.useful_prefetches == 0);  // none ever landed
  CHECK(*r.accuracy == 0.0);
}

TEST_CASE("empty trace reports zeroed counters and null metrics") {
  ParsedTrace trace;
  NoPrefetcher none;
  SimReport r = simulate(trace, none, CacheConfig{4, 2, 6}, kAddr);
  CHECK(r.demand_accesses == 0);
  CHECK(r.base_misses == 0);
  CHECK_FALSE(r.accuracy.has_value());
  CHECK_FALSE(r.coverage.has_value());
  CHECK_FALSE(r.mpki_improvement.has_value());
  CHECK_FALSE(r.base_mpki.has_value());
  CHECK(r.to_json().find("\"accuracy\": null") != std::string::npos);
}

TEST_CASE("mpki uses the instruction span when ids are real") {
  // 4 accesses, instr ids 0..3000: span 3000 -> 3 kilo-instructions
  ParsedTrace trace = make_trace({1, 2, 3, 4}, 1000);
  NoPrefetcher none;
  SimReport r = simulate(trace, none, CacheConfig{4, 2, 6}, kAddr);
  CHECK(r.instr_span == 3000);
  CHECK_FALSE(r.per_kilo_access);
  REQUIRE(r.base_mpki.has_value());
  CHECK(*r.base_mpki == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("mpki degrades to per-kilo-access without instruction ids") {
  ParsedTrace trace = make_trace({1, 2, 3, 4});
  trace.has_instr_ids = false;
  NoPrefetcher none;
  SimReport r = simulate(trace, none, CacheConfig{4, 2, 6}, kAddr);
  CHECK(r.per_kilo_access);
  REQUIRE(r.base_mpki.has_value());
  CHECK(*r.base_mpki == doctest::Approx(4.0 / 0.004).epsilon(1e-12));
  bool noted = false;
  for (const std::string& n : r.notes) noted = noted || n.find("kilo-access") != std::string::npos;
  CHECK(noted);

  // a zero instruction span triggers the same fallback
  ParsedTrace flat = make_trace({1, 2, 3, 4}, 0);
  SimReport r2 = simulate(flat, none, CacheConfig{4, 2, 6}, kAddr);
  CHECK(r2.per_kilo_access);
}

TEST_CASE("simulation is deterministic") {
  std::vector<uint64_t> blocks;
  Rng rng(17);
  for (int i = 0; i < 500; ++i) blocks.push_back(rng.below(256));
  ParsedTrace trace = make_trace(blocks);

  auto run = [&] {
    BestOffsetPrefetcher pf(kAddr, BestOffsetConfig{});
    return simulate(trace, pf, CacheConfig{16, 4, 6}, kAddr, 1);
  };
  SimReport a = run();
  SimReport b = run();
  CHECK(a.to_json() == b.to_json());
  CHECK(a.csv_row() == b.csv_row());
}

TEST_CASE("counter invariants hold for every baseline on random traces") {
  Rng rng(29);
  for (int round = 0; round < 5; ++round) {
    std::vector<uint64_t> blocks;
    for (int i = 0; i < 400; ++i) blocks.push_back(rng.below(128));
    ParsedTrace trace = make_trace(blocks);

    NextLinePrefetcher nl(kAddr);
    BestOffsetPrefetcher bo(kAddr, BestOffsetConfig{});
    IsbPrefetcher isb(kAddr, IsbConfig{});
    for (Prefetcher* pf : {static_cast<Prefetcher*>(&nl), static_cast<Prefetcher*>(&bo),
                           static_cast<Prefetcher*>(&isb)}) {
      SimReport r = simulate(trace, *pf, CacheConfig{8, 4, 6}, kAddr);
      CHECK(r.useful_prefetches <= r.prefetches_issued);
      CHECK(r.demand_accesses == 400);
      if (r.accuracy) {
        CHECK(*r.accuracy >= 0.0);
        CHECK(*r.accuracy <= 1.0);
      }
      if (r.coverage) CHECK(*r.coverage <= 1.0);
      CHECK(r.base_misses <= r.demand_accesses);
      CHECK(r.pref_misses <= r.demand_accesses);
    }
  }
}

TEST_CASE("prediction-file simulation validates positions and pays off") {
  ParsedTrace trace = make_trace({10, 20, 30});

  std::vector<PredictedLine> lines(1);
  lines[0].position = 0;
  lines[0].addrs = {block_addr(30)};  // the block demanded two accesses later
  SimReport r = simulate_predictions(trace, lines, CacheConfig{4, 2, 6}, kAddr);
  CHECK(r.prefetcher == "transformap");
  CHECK(r.base_misses == 3);
  CHECK(r.pref_misses == 2);
  CHECK(r.useful_prefetches == 1);
  CHECK(*r.accuracy == 1.0);
  CHECK(*r.coverage == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  std::vector<PredictedLine> outside(1);
  outside[0].position = 3;  // trace has positions 0..2
  CHECK_THROWS_AS(simulate_predictions(trace, outside, CacheConfig{4, 2, 6}, kAddr),
                  InputError);
}

TEST_CASE("csv row layout matches the header") {
  ParsedTrace trace = make_trace({1, 2, 3});
  NoPrefetcher none;
  SimReport r = simulate(trace, none, CacheConfig{4, 2, 6}, kAddr);
  std::string header = SimReport::csv_header();
  std::string row = r.csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') ==
        std::count(row.begin(), row.end(), ','));
  CHECK(row.substr(0, 5) == "none,");
  CHECK(row.find(",,") != std::string::npos);  // undefined accuracy stays empty
}
