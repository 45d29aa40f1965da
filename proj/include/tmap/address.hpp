#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmap/errors.hpp"

namespace tmap {

// Bit geometry of a byte address, from most to least significant:
//
//   [ page address : m ][ block index : n ][ block offset ]
//
// with m = address_bits - page_bits and n = page_bits - block_bits. The model
// consumes block addresses (page address + block index, m+n bits) and predicts
// block indexes, so these two derived widths show up everywhere.
struct AddressConfig {
  uint32_t address_bits = 64;
  uint32_t page_bits = 12;  // 4 KiB pages
  uint32_t block_bits = 6;  // 64 B blocks

  void validate() const {
    if (block_bits == 0 || block_bits >= page_bits || page_bits >= address_bits ||
        address_bits > 64) {
      throw ConfigError("address geometry must satisfy 0 < block_bits < page_bits"
                        " < address_bits <= 64 (got " +
                        std::to_string(address_bits) + "/" + std::to_string(page_bits) +
                        "/" + std::to_string(block_bits) + ")");
    }
  }

  uint32_t block_index_bits() const { return page_bits - block_bits; }     // n
  uint32_t page_address_bits() const { return address_bits - page_bits; }  // m
  uint32_t block_address_bits() const { return address_bits - block_bits; }

  uint64_t block_index_space() const { return 1ull << block_index_bits(); }

  uint64_t max_address() const {
    return address_bits == 64 ? ~0ull : (1ull << address_bits) - 1;
  }
};

// Decoder vocabulary: the 2^n block indexes followed by three sentinels.
inline uint32_t begin_token(const AddressConfig& cfg) {
  return static_cast<uint32_t>(cfg.block_index_space());
}
inline uint32_t end_token(const AddressConfig& cfg) { return begin_token(cfg) + 1; }
inline uint32_t pad_token(const AddressConfig& cfg) { return begin_token(cfg) + 2; }
inline uint32_t output_vocab(const AddressConfig& cfg) { return begin_token(cfg) + 3; }

inline uint64_t to_block_address(uint64_t addr, const AddressConfig& cfg) {
  if (addr > cfg.max_address()) {
    throw InputError("address 0x" + [&] {
      char buf[32];
      snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(addr));
      return std::string(buf);
    }() + " exceeds " + std::to_string(cfg.address_bits) + "-bit address space");
  }
  return addr >> cfg.block_bits;
}

inline uint64_t page_of_block(uint64_t block_addr, const AddressConfig& cfg) {
  return block_addr >> cfg.block_index_bits();
}

inline uint32_t index_of_block(uint64_t block_addr, const AddressConfig& cfg) {
  return static_cast<uint32_t>(block_addr & (cfg.block_index_space() - 1));
}

// MSB-first bit expansion of a block address, width m+n. Each entry is 0 or 1;
// the model treats them as token ids over its two-symbol input vocabulary.
inline std::vector<uint8_t> encode_binary(uint64_t block_addr, const AddressConfig& cfg) {
  uint32_t width = cfg.block_address_bits();
  if (width < 64 && block_addr >= (1ull << width)) {
    throw InputError("block address does not fit in " + std::to_string(width) + " bits");
  }
  std::vector<uint8_t> bits(width);
  for (uint32_t i = 0; i < width; ++i) {
    bits[i] = static_cast<uint8_t>((block_addr >> (width - 1 - i)) & 1);
  }
  return bits;
}

// Inverse of encode_binary; used by round-trip checks.
inline uint64_t decode_binary(std::span<const uint8_t> bits) {
  uint64_t v = 0;
  for (uint8_t b : bits) {
    if (b > 1) throw ContractError("bit vector entries must be 0 or 1");
    v = (v << 1) | b;
  }
  return v;
}

// Concatenates the binary encodings of the last t block addresses, oldest
// first. Histories shorter than t are front-padded by repeating the oldest
// entry, so early trace positions still yield fixed-length model input.
inline std::vector<uint8_t> flatten_history(std::span<const uint64_t> history,
                                            uint32_t t, const AddressConfig& cfg) {
  if (history.empty()) throw ContractError("history must hold at least one address");
  if (history.size() > t) throw ContractError("history longer than configured depth");
  std::vector<uint8_t> flat;
  flat.reserve(static_cast<size_t>(t) * cfg.block_address_bits());
  for (size_t slot = 0; slot < t; ++slot) {
    size_t pad = t - history.size();
    uint64_t block = slot < pad ? history.front() : history[slot - pad];
    auto bits = encode_binary(block, cfg);
    flat.insert(flat.end(), bits.begin(), bits.end());
  }
  return flat;
}

// Rebuilds a full byte address from the triggering access and a predicted
// in-page block index: keep the page of the trigger, swap in the index, and
// zero the block offset.
inline uint64_t reconstruct_address(uint64_t current_addr, uint64_t block_index,
                                    const AddressConfig& cfg) {
  if (block_index >= cfg.block_index_space()) {
    throw InputError("block index " + std::to_string(block_index) + " out of range for " +
                     std::to_string(cfg.block_index_bits()) + " index bits");
  }
  if (current_addr > cfg.max_address()) {
    throw InputError("trigger address exceeds configured address space");
  }
  uint64_t page = current_addr >> cfg.page_bits;
  return ((page << cfg.block_index_bits()) | block_index) << cfg.block_bits;
}

}  // namespace tmap
