#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "tmap/address.hpp"
#include "tmap/trace.hpp"

namespace tmap {

// Which block indexes of the current page are touched in the near future.
struct OffsetBitmap {
  std::vector<bool> bits;  // width 2^n

  explicit OffsetBitmap(size_t width = 0) : bits(width, false) {}
  size_t width() const { return bits.size(); }
  bool test(size_t i) const { return bits[i]; }
  void set(size_t i) { bits[i] = true; }
  size_t count() const;
};

// One training sample: flattened binary history in, bitmap-derived label out.
struct Sample {
  std::vector<uint8_t> input_bits;    // t * (m+n) entries over {0,1}
  std::vector<uint32_t> target;       // ascending block indexes, then END
  uint64_t position = 0;              // trace index of the triggering access
  uint64_t page = 0;                  // page of the triggering access
};

// Scans the `window` accesses after `position` and marks the block indexes
// that fall in the same page as the triggering access. The trigger's own
// index is never marked: re-prefetching the line being accessed is useless.
OffsetBitmap collect_bitmap(std::span<const uint64_t> block_trace, size_t position,
                            size_t window, const AddressConfig& cfg);

// Ascending indexes of set bits, truncated to the k_max lowest, then END.
std::vector<uint32_t> bitmap_to_label(const OffsetBitmap& bitmap, size_t k_max,
                                      const AddressConfig& cfg);

// One sample per trace position in [t, len): the history is the t accesses
// ending at (and including) the position, the label comes from the window
// after it. Throws when the trace has no such position.
std::vector<Sample> build_dataset(std::span<const TraceRecord> records,
                                  const AddressConfig& cfg, uint32_t t,
                                  uint32_t window, uint32_t k_max);

// Dataset text format, one sample per line:
//
//   <input bits as a 0/1 string> TAB <comma-separated label indexes>
//
// The label field omits the END sentinel (it is implied) and is empty when
// the window held no same-page follower. Positions are not persisted; readers
// assign line numbers.
void write_dataset(std::ostream& out, std::span<const Sample> samples);
std::vector<Sample> read_dataset(std::istream& in, const AddressConfig& cfg,
                                 uint32_t t, uint32_t k_max);
std::vector<Sample> load_dataset(const std::string& path, const AddressConfig& cfg,
                                 uint32_t t, uint32_t k_max);

}  // namespace tmap
