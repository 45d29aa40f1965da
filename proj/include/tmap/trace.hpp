#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tmap/address.hpp"

namespace tmap {

// One demand access as seen by the last-level cache.
struct TraceRecord {
  uint64_t instr_id = 0;  // retired-instruction count at the access
  uint64_t pc = 0;
  uint64_t addr = 0;  // byte address

  bool operator==(const TraceRecord&) const = default;
};

struct ParsedTrace {
  std::vector<TraceRecord> records;
  // False when the file had two-column lines; instr_id was then filled with
  // the record index and per-kilo-instruction metrics degrade to per-kilo-
  // access, which the simulator flags in its report.
  bool has_instr_ids = true;
};

// Text trace format, one access per line:
//
//   instr_id pc addr      (3 columns)
//   pc addr               (2 columns; instr_id defaults to the record index)
//
// Values are unsigned decimal or 0x-prefixed hex. '#' starts a comment; blank
// lines are skipped. Column count must be consistent across the file.
ParsedTrace parse_trace(std::istream& in, const AddressConfig& cfg);
ParsedTrace load_trace(const std::string& path, const AddressConfig& cfg);
void serialize_trace(std::ostream& out, std::span<const TraceRecord> records);

enum class SynthKind { ConstantStride, PageLocalPermutation, TemporalStream, Random };

// Parameters for the synthetic trace generators. Each generator is a pure
// function of this struct, so a spec plus seed always replays byte-identically.
struct SyntheticSpec {
  SynthKind kind = SynthKind::ConstantStride;
  uint64_t length = 0;
  uint64_t seed = 1;
  uint32_t page_bits = 12;
  uint32_t block_bits = 6;

  // constant-stride: addr_i = start + i * stride
  uint64_t start = 0;
  int64_t stride = 64;

  // page-local-permutation: `pages` pages visited in groups of `interleave`;
  // each group is revisited for `period` steps, one access per grouped page
  // per step, and every page advances a private cursor through a permutation
  // of its 2^n block indexes. shuffle=false uses the +1 rotation; true draws
  // a seeded single-cycle permutation shared by all pages.
  uint64_t pages = 64;
  uint32_t interleave = 4;
  uint64_t period = 512;
  uint64_t base_page = 1;
  bool shuffle = false;

  // temporal-stream: a fixed sequence of `period` distinct block addresses
  // spread over `pages` pages, replayed cyclically.
  // random: uniform blocks over `pages` pages.
};

SynthKind parse_synth_kind(const std::string& name);
std::vector<TraceRecord> generate_synthetic(const SyntheticSpec& spec);

}  // namespace tmap
