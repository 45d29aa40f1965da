#include "tmap/prefetchers.hpp"

#include <algorithm>

#include "tmap/errors.hpp"

namespace tmap {

namespace {

// Block-aligned byte address for `block`, or nothing if it leaves the space.
bool block_to_addr(uint64_t block, const AddressConfig& addr, uint64_t& out) {
  uint64_t limit = addr.max_address() >> addr.block_bits;
  if (block > limit) return false;
  out = block << addr.block_bits;
  return true;
}

}  // namespace

NextLinePrefetcher::NextLinePrefetcher(const AddressConfig& addr) : addr_(addr) {
  addr_.validate();
}

std::vector<uint64_t> NextLinePrefetcher::on_access(uint64_t, uint64_t addr, bool) {
  uint64_t block = to_block_address(addr, addr_);
  uint64_t target;
  if (!block_to_addr(block + 1, addr_, target)) return {};
  return {target};
}

void BestOffsetConfig::validate() const {
  if (ring_entries == 0) throw ConfigError("best-offset ring needs at least one entry");
  if (max_offset == 0) throw ConfigError("best-offset needs at least one candidate offset");
  if (round_len == 0) throw ConfigError("best-offset round length must be positive");
}

BestOffsetPrefetcher::BestOffsetPrefetcher(const AddressConfig& addr,
                                           const BestOffsetConfig& cfg)
    : addr_(addr), cfg_(cfg) {
  addr_.validate();
  cfg_.validate();
  ring_.resize(cfg_.ring_entries);
  scores_.assign(cfg_.max_offset + 1, 0);
}

bool BestOffsetPrefetcher::in_ring(uint64_t block) const {
  for (size_t i = 0; i < ring_count_; ++i) {
    if (ring_[i] == block) return true;
  }
  return false;
}

std::vector<uint64_t> BestOffsetPrefetcher::on_access(uint64_t, uint64_t addr, bool) {
  uint64_t block = to_block_address(addr, addr_);

  // Score against the table as it stood before this access, then record it.
  for (uint32_t d = 1; d <= cfg_.max_offset; ++d) {
    if (block >= d && in_ring(block - d)) ++scores_[d];
  }
  ring_[ring_head_] = block;
  ring_head_ = (ring_head_ + 1) % ring_.size();
  ring_count_ = std::min(ring_count_ + 1, ring_.size());

  ++accesses_;
  if (accesses_ % cfg_.round_len == 0) {
    uint32_t best = 1;
    for (uint32_t d = 2; d <= cfg_.max_offset; ++d) {
      if (scores_[d] > scores_[best]) best = d;  // ties keep the smaller offset
    }
    best_offset_ = best;
    std::fill(scores_.begin(), scores_.end(), 0);
  }

  if (best_offset_ == 0) return {};  // still in the first round
  uint64_t target;
  if (!block_to_addr(block + best_offset_, addr_, target)) return {};
  return {target};
}

void IsbConfig::validate() const {
  if (last_table_entries == 0 || pair_table_entries == 0) {
    throw ConfigError("isb tables need at least one entry each");
  }
}

IsbPrefetcher::IsbPrefetcher(const AddressConfig& addr, const IsbConfig& cfg)
    : addr_(addr), last_(cfg.last_table_entries), pairs_(cfg.pair_table_entries) {
  addr_.validate();
  cfg.validate();
}

std::vector<uint64_t> IsbPrefetcher::on_access(uint64_t pc, uint64_t addr, bool) {
  uint64_t block = to_block_address(addr, addr_);
  if (uint64_t* prev = last_.find(pc)) {
    pairs_.put(PcBlock{pc, *prev}, block);
  }
  last_.put(pc, block);

  if (uint64_t* succ = pairs_.find(PcBlock{pc, block})) {
    uint64_t target;
    if (block_to_addr(*succ, addr_, target)) return {target};
  }
  return {};
}

PredictionPrefetcher::PredictionPrefetcher(const AddressConfig& addr,
                                           std::vector<PredictedLine> lines)
    : addr_(addr), lines_(std::move(lines)) {
  addr_.validate();
  for (size_t i = 1; i < lines_.size(); ++i) {
    if (lines_[i].position <= lines_[i - 1].position) {
      throw ContractError("prediction lines must have strictly ascending positions");
    }
  }
}

uint64_t PredictionPrefetcher::max_position() const {
  return lines_.empty() ? 0 : lines_.back().position;
}

std::vector<uint64_t> PredictionPrefetcher::on_access(uint64_t, uint64_t, bool) {
  uint64_t pos = access_index_++;
  while (cursor_ < lines_.size() && lines_[cursor_].position < pos) ++cursor_;
  if (cursor_ >= lines_.size() || lines_[cursor_].position != pos) return {};

  std::vector<uint64_t> out;
  out.reserve(lines_[cursor_].addrs.size());
  uint64_t mask = ~((uint64_t{1} << addr_.block_bits) - 1);
  for (uint64_t a : lines_[cursor_].addrs) out.push_back(a & mask);
  ++cursor_;
  return out;
}

}  // namespace tmap
