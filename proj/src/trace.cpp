#include "tmap/trace.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tmap/errors.hpp"
#include "tmap/rng.hpp"

namespace tmap {

namespace {

uint64_t parse_u64(std::string_view tok, size_t line_no, const char* what) {
  uint64_t value = 0;
  std::from_chars_result res{};
  if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
    res = std::from_chars(tok.data() + 2, tok.data() + tok.size(), value, 16);
  } else {
    res = std::from_chars(tok.data(), tok.data() + tok.size(), value, 10);
  }
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size()) {
    throw InputError("line " + std::to_string(line_no) + ": non-numeric " + what +
                     " '" + std::string(tok) + "'");
  }
  return value;
}

}  // namespace

ParsedTrace parse_trace(std::istream& in, const AddressConfig& cfg) {
  cfg.validate();
  ParsedTrace out;
  int columns = 0;  // fixed by the first data line
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> toks;
    for (std::string tok; fields >> tok;) toks.push_back(tok);
    if (toks.empty()) continue;
    if (toks.size() != 2 && toks.size() != 3) {
      throw InputError("line " + std::to_string(line_no) + ": expected 2 or 3 columns, got " +
                       std::to_string(toks.size()));
    }
    if (columns == 0) {
      columns = static_cast<int>(toks.size());
      out.has_instr_ids = columns == 3;
    } else if (static_cast<int>(toks.size()) != columns) {
      throw InputError("line " + std::to_string(line_no) + ": column count changed mid-file");
    }
    TraceRecord rec;
    size_t at = 0;
    rec.instr_id = columns == 3 ? parse_u64(toks[at++], line_no, "instr_id")
                                : out.records.size();
    rec.pc = parse_u64(toks[at++], line_no, "pc");
    rec.addr = parse_u64(toks[at++], line_no, "address");
    if (rec.addr > cfg.max_address()) {
      throw InputError("line " + std::to_string(line_no) + ": address exceeds " +
                       std::to_string(cfg.address_bits) + "-bit address space");
    }
    if (!out.records.empty() && rec.instr_id < out.records.back().instr_id) {
      throw InputError("line " + std::to_string(line_no) + ": instr_id decreased");
    }
    out.records.push_back(rec);
  }
  return out;
}

ParsedTrace load_trace(const std::string& path, const AddressConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace file '" + path + "'");
  return parse_trace(in, cfg);
}

void serialize_trace(std::ostream& out, std::span<const TraceRecord> records) {
  for (const TraceRecord& r : records) {
    out << r.instr_id << ' ' << r.pc << ' ' << r.addr << '\n';
  }
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "constant-stride") return SynthKind::ConstantStride;
  if (name == "page-local") return SynthKind::PageLocalPermutation;
  if (name == "temporal-stream") return SynthKind::TemporalStream;
  if (name == "random") return SynthKind::Random;
  throw ConfigError("unknown synthetic kind '" + name +
                    "' (expected constant-stride|page-local|temporal-stream|random)");
}

namespace {

// Distinct pc per generator so pc-indexed prefetchers see stable streams.
constexpr uint64_t kSynthPcBase = 0x400100;

TraceRecord make_record(uint64_t i, uint64_t pc, uint64_t addr) {
  // Model an LLC access every 8 retired instructions; any fixed ratio works,
  // it only sets the scale of per-kilo-instruction metrics.
  return TraceRecord{8 * i, pc, addr};
}

std::vector<TraceRecord> gen_constant_stride(const SyntheticSpec& s) {
  std::vector<TraceRecord> out;
  out.reserve(s.length);
  for (uint64_t i = 0; i < s.length; ++i) {
    uint64_t addr = s.start + static_cast<uint64_t>(s.stride * static_cast<int64_t>(i));
    out.push_back(make_record(i, kSynthPcBase, addr));
  }
  return out;
}

std::vector<TraceRecord> gen_page_local(const SyntheticSpec& s) {
  if (s.pages == 0 || s.interleave == 0 || s.period == 0) {
    throw ConfigError("page-local generator needs pages, interleave, period > 0");
  }
  uint64_t index_space = 1ull << (s.page_bits - s.block_bits);
  Rng rng = Rng::substream(s.seed, "synth-page-local");

  // Successor permutation over block indexes: identity rotation, or a seeded
  // single cycle (Sattolo) so every index is still visited before repeating.
  std::vector<uint64_t> succ(index_space);
  if (s.shuffle) {
    std::vector<uint64_t> order(index_space);
    for (uint64_t j = 0; j < index_space; ++j) order[j] = j;
    for (uint64_t i = index_space - 1; i > 0; --i) {
      uint64_t j = rng.below(i);
      std::swap(order[i], order[j]);
    }
    for (uint64_t j = 0; j < index_space; ++j) {
      succ[order[j]] = order[(j + 1) % index_space];
    }
  } else {
    for (uint64_t j = 0; j < index_space; ++j) succ[j] = (j + 1) % index_space;
  }

  std::vector<uint64_t> cursor(s.pages);
  for (uint64_t p = 0; p < s.pages; ++p) cursor[p] = rng.below(index_space);

  std::vector<TraceRecord> out;
  out.reserve(s.length);
  uint64_t groups = (s.pages + s.interleave - 1) / s.interleave;
  uint64_t i = 0;
  while (i < s.length) {
    for (uint64_t g = 0; g < groups && i < s.length; ++g) {
      for (uint64_t step = 0; step < s.period && i < s.length; ++step) {
        for (uint32_t q = 0; q < s.interleave && i < s.length; ++q) {
          uint64_t p = g * s.interleave + q;
          if (p >= s.pages) continue;
          uint64_t page = s.base_page + p;
          uint64_t addr = ((page << (s.page_bits - s.block_bits)) | cursor[p]) << s.block_bits;
          out.push_back(make_record(i, kSynthPcBase + 0x10 + p % 4, addr));
          cursor[p] = succ[cursor[p]];
          ++i;
        }
      }
    }
  }
  return out;
}

std::vector<TraceRecord> gen_temporal_stream(const SyntheticSpec& s) {
  if (s.period == 0 || s.pages == 0) {
    throw ConfigError("temporal-stream generator needs period, pages > 0");
  }
  uint64_t index_space = 1ull << (s.page_bits - s.block_bits);
  if (s.period > s.pages * index_space) {
    throw ConfigError("temporal-stream period exceeds distinct blocks available");
  }
  Rng rng = Rng::substream(s.seed, "synth-temporal");
  std::vector<uint64_t> sequence;
  sequence.reserve(s.period);
  // Sample distinct (page, index) pairs; rejection is cheap at the densities
  // used here.
  std::vector<uint64_t> seen;
  while (sequence.size() < s.period) {
    uint64_t page = s.base_page + rng.below(s.pages);
    uint64_t idx = rng.below(index_space);
    uint64_t block = (page << (s.page_bits - s.block_bits)) | idx;
    bool dup = false;
    for (uint64_t b : seen) {
      if (b == block) { dup = true; break; }
    }
    if (dup) continue;
    seen.push_back(block);
    sequence.push_back(block << s.block_bits);
  }
  std::vector<TraceRecord> out;
  out.reserve(s.length);
  for (uint64_t i = 0; i < s.length; ++i) {
    out.push_back(make_record(i, kSynthPcBase + 0x20, sequence[i % s.period]));
  }
  return out;
}

std::vector<TraceRecord> gen_random(const SyntheticSpec& s) {
  if (s.pages == 0) throw ConfigError("random generator needs pages > 0");
  uint64_t index_space = 1ull << (s.page_bits - s.block_bits);
  Rng rng = Rng::substream(s.seed, "synth-random");
  std::vector<TraceRecord> out;
  out.reserve(s.length);
  for (uint64_t i = 0; i < s.length; ++i) {
    uint64_t page = s.base_page + rng.below(s.pages);
    uint64_t idx = rng.below(index_space);
    uint64_t addr = ((page << (s.page_bits - s.block_bits)) | idx) << s.block_bits;
    out.push_back(make_record(i, kSynthPcBase + 0x30, addr));
  }
  return out;
}

}  // namespace

std::vector<TraceRecord> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.block_bits == 0 || spec.block_bits >= spec.page_bits) {
    throw ConfigError("synthetic geometry needs 0 < block_bits < page_bits");
  }
  switch (spec.kind) {
    case SynthKind::ConstantStride: return gen_constant_stride(spec);
    case SynthKind::PageLocalPermutation: return gen_page_local(spec);
    case SynthKind::TemporalStream: return gen_temporal_stream(spec);
    case SynthKind::Random: return gen_random(spec);
  }
  throw ContractError("unreachable synth kind");
}

}  // namespace tmap
