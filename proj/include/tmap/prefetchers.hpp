#pragma once

#include <cstdint>
#include <list>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tmap/address.hpp"
#include "tmap/beam.hpp"

namespace tmap {

// Demand-access callback shared by every prefetcher. Implementations return
// the byte addresses to prefetch; emissions are block-aligned and never leave
// the configured address space. Instances are single-threaded: only the
// simulator's access loop mutates them.
class Prefetcher {
 public:
  virtual ~Prefetcher() = default;
  virtual std::string_view name() const = 0;
  virtual std::vector<uint64_t> on_access(uint64_t pc, uint64_t addr, bool was_miss) = 0;
};

// "none": measures the unassisted cache.
class NoPrefetcher final : public Prefetcher {
 public:
  std::string_view name() const override { return "none"; }
  std::vector<uint64_t> on_access(uint64_t, uint64_t, bool) override { return {}; }
};

// Degree-1 next-line control: always requests the block after the current one.
class NextLinePrefetcher final : public Prefetcher {
 public:
  explicit NextLinePrefetcher(const AddressConfig& addr);
  std::string_view name() const override { return "nextline"; }
  std::vector<uint64_t> on_access(uint64_t pc, uint64_t addr, bool was_miss) override;

 private:
  AddressConfig addr_;
};

struct BestOffsetConfig {
  uint32_t ring_entries = 64;  // recent-request table size
  uint32_t max_offset = 16;    // candidates are 1..max_offset blocks
  uint32_t round_len = 256;    // accesses per scoring round

  void validate() const;
};

// Offset prefetcher with a periodic scoring round: an offset d earns a point
// whenever the current block minus d was recently requested, and the highest
// scorer is adopted at the end of each round (ties to the smallest offset).
// Nothing is emitted until the first round completes.
class BestOffsetPrefetcher final : public Prefetcher {
 public:
  BestOffsetPrefetcher(const AddressConfig& addr, const BestOffsetConfig& cfg);
  std::string_view name() const override { return "bo"; }
  std::vector<uint64_t> on_access(uint64_t pc, uint64_t addr, bool was_miss) override;

  // 0 until the first round completes
  uint32_t adopted_offset() const { return best_offset_; }

 private:
  bool in_ring(uint64_t block) const;

  AddressConfig addr_;
  BestOffsetConfig cfg_;
  std::vector<uint64_t> ring_;
  size_t ring_head_ = 0;
  size_t ring_count_ = 0;
  std::vector<uint32_t> scores_;  // index 0 unused; 1..max_offset
  uint32_t best_offset_ = 0;
  uint64_t accesses_ = 0;
};

// Bounded-capacity map with least-recently-used eviction. Lookups refresh
// recency. Used for both ISB tables.
template <class K, class V, class Hash = std::hash<K>>
class LruMap {
 public:
  explicit LruMap(size_t capacity) : cap_(capacity) {}

  size_t size() const { return items_.size(); }
  size_t capacity() const { return cap_; }

  V* find(const K& key) {
    auto it = index_.find(key);
    if (it == index_.end()) return nullptr;
    items_.splice(items_.begin(), items_, it->second);
    return &it->second->second;
  }

  void put(const K& key, V value) {
    auto it = index_.find(key);
    if (it != index_.end()) {
      it->second->second = std::move(value);
      items_.splice(items_.begin(), items_, it->second);
      return;
    }
    items_.emplace_front(key, std::move(value));
    index_[key] = items_.begin();
    if (items_.size() > cap_) {
      index_.erase(items_.back().first);
      items_.pop_back();
    }
  }

 private:
  size_t cap_;
  std::list<std::pair<K, V>> items_;
  std::unordered_map<K, typename std::list<std::pair<K, V>>::iterator, Hash> index_;
};

struct IsbConfig {
  size_t last_table_entries = 256;   // pc -> most recent block
  size_t pair_table_entries = 4096;  // (pc, block) -> observed successor block

  void validate() const;
};

// Temporal-correlation prefetcher over PC-localized streams: remembers which
// block followed which within each PC's own access sequence and replays that
// successor when the pattern recurs.
class IsbPrefetcher final : public Prefetcher {
 public:
  IsbPrefetcher(const AddressConfig& addr, const IsbConfig& cfg);
  std::string_view name() const override { return "isb"; }
  std::vector<uint64_t> on_access(uint64_t pc, uint64_t addr, bool was_miss) override;

  size_t last_table_size() const { return last_.size(); }
  size_t pair_table_size() const { return pairs_.size(); }

 private:
  struct PcBlock {
    uint64_t pc = 0;
    uint64_t block = 0;
    bool operator==(const PcBlock&) const = default;
  };
  struct PcBlockHash {
    size_t operator()(const PcBlock& k) const {
      uint64_t h = k.pc * 0x9e3779b97f4a7c15ull;
      h ^= k.block + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      return static_cast<size_t>(h);
    }
  };

  AddressConfig addr_;
  LruMap<uint64_t, uint64_t> last_;
  LruMap<PcBlock, uint64_t, PcBlockHash> pairs_;
};

// Replays a precomputed predictions file: the line for position i is emitted
// right after the i-th demand access. Positions absent from the file emit
// nothing. The caller checks positions against the trace length.
class PredictionPrefetcher final : public Prefetcher {
 public:
  PredictionPrefetcher(const AddressConfig& addr, std::vector<PredictedLine> lines);
  std::string_view name() const override { return "transformap"; }
  std::vector<uint64_t> on_access(uint64_t pc, uint64_t addr, bool was_miss) override;

  uint64_t max_position() const;  // 0 when the file was empty

 private:
  AddressConfig addr_;
  std::vector<PredictedLine> lines_;  // strictly ascending positions
  size_t cursor_ = 0;                 // next line to consider
  uint64_t access_index_ = 0;
};

}  // namespace tmap
