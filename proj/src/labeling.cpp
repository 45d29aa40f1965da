#include "tmap/labeling.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "tmap/errors.hpp"

namespace tmap {

size_t OffsetBitmap::count() const {
  return static_cast<size_t>(std::count(bits.begin(), bits.end(), true));
}

OffsetBitmap collect_bitmap(std::span<const uint64_t> block_trace, size_t position,
                            size_t window, const AddressConfig& cfg) {
  if (position >= block_trace.size()) {
    throw ContractError("bitmap position past end of trace");
  }
  OffsetBitmap bitmap(cfg.block_index_space());
  uint64_t page = page_of_block(block_trace[position], cfg);
  size_t end = std::min(block_trace.size(), position + 1 + window);
  for (size_t j = position + 1; j < end; ++j) {
    if (page_of_block(block_trace[j], cfg) == page) {
      bitmap.set(index_of_block(block_trace[j], cfg));
    }
  }
  bitmap.bits[index_of_block(block_trace[position], cfg)] = false;
  return bitmap;
}

std::vector<uint32_t> bitmap_to_label(const OffsetBitmap& bitmap, size_t k_max,
                                      const AddressConfig& cfg) {
  if (bitmap.width() != cfg.block_index_space()) {
    throw ContractError("bitmap width does not match block index space");
  }
  std::vector<uint32_t> label;
  for (uint32_t i = 0; i < bitmap.width() && label.size() < k_max; ++i) {
    if (bitmap.test(i)) label.push_back(i);
  }
  label.push_back(end_token(cfg));
  return label;
}

std::vector<Sample> build_dataset(std::span<const TraceRecord> records,
                                  const AddressConfig& cfg, uint32_t t,
                                  uint32_t window, uint32_t k_max) {
  cfg.validate();
  if (t == 0) throw ConfigError("history depth must be positive");
  if (k_max == 0) throw ConfigError("k_max must be positive");
  if (records.size() <= t) {
    throw InputError("trace has " + std::to_string(records.size()) +
                     " accesses; need more than " + std::to_string(t) +
                     " to form a sample");
  }
  std::vector<uint64_t> blocks(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    blocks[i] = to_block_address(records[i].addr, cfg);
  }
  std::vector<Sample> samples;
  samples.reserve(records.size() - t);
  for (size_t pos = t; pos < records.size(); ++pos) {
    Sample s;
    s.position = pos;
    s.page = page_of_block(blocks[pos], cfg);
    std::span<const uint64_t> history(blocks.data() + (pos - t + 1), t);
    s.input_bits = flatten_history(history, t, cfg);
    s.target = bitmap_to_label(collect_bitmap(blocks, pos, window, cfg), k_max, cfg);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_dataset(std::ostream& out, std::span<const Sample> samples) {
  for (const Sample& s : samples) {
    for (uint8_t b : s.input_bits) out << static_cast<char>('0' + b);
    out << '\t';
    for (size_t i = 0; i + 1 < s.target.size(); ++i) {  // drop trailing END
      if (i) out << ',';
      out << s.target[i];
    }
    out << '\n';
  }
}

std::vector<Sample> read_dataset(std::istream& in, const AddressConfig& cfg,
                                 uint32_t t, uint32_t k_max) {
  cfg.validate();
  size_t expected_bits = static_cast<size_t>(t) * cfg.block_address_bits();
  uint32_t index_space = static_cast<uint32_t>(cfg.block_index_space());
  std::vector<Sample> samples;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw InputError("dataset line " + std::to_string(line_no) + ": missing tab separator");
    }
    Sample s;
    s.position = samples.size();
    s.input_bits.reserve(tab);
    for (size_t i = 0; i < tab; ++i) {
      char c = line[i];
      if (c != '0' && c != '1') {
        throw InputError("dataset line " + std::to_string(line_no) +
                         ": input field must be a 0/1 string");
      }
      s.input_bits.push_back(static_cast<uint8_t>(c - '0'));
    }
    if (s.input_bits.size() != expected_bits) {
      throw InputError("dataset line " + std::to_string(line_no) + ": expected " +
                       std::to_string(expected_bits) + " input bits, got " +
                       std::to_string(s.input_bits.size()));
    }
    size_t at = tab + 1;
    while (at < line.size()) {
      size_t comma = line.find(',', at);
      if (comma == std::string::npos) comma = line.size();
      uint32_t idx = 0;
      for (size_t i = at; i < comma; ++i) {
        char c = line[i];
        if (c < '0' || c > '9') {
          throw InputError("dataset line " + std::to_string(line_no) +
                           ": non-numeric label index");
        }
        idx = idx * 10 + static_cast<uint32_t>(c - '0');
      }
      if (at == comma) {
        throw InputError("dataset line " + std::to_string(line_no) + ": empty label index");
      }
      if (idx >= index_space) {
        throw InputError("dataset line " + std::to_string(line_no) + ": label index " +
                         std::to_string(idx) + " out of range");
      }
      if (!s.target.empty() && idx <= s.target.back()) {
        throw InputError("dataset line " + std::to_string(line_no) +
                         ": label indexes must be strictly ascending");
      }
      s.target.push_back(idx);
      at = comma + 1;
    }
    if (s.target.size() > k_max) {
      throw InputError("dataset line " + std::to_string(line_no) + ": more than " +
                       std::to_string(k_max) + " label indexes");
    }
    s.target.push_back(end_token(cfg));
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> load_dataset(const std::string& path, const AddressConfig& cfg,
                                 uint32_t t, uint32_t k_max) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset file '" + path + "'");
  return read_dataset(in, cfg, t, k_max);
}

}  // namespace tmap
