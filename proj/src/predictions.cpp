#include "tmap/beam.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "tmap/errors.hpp"

namespace tmap {

void write_predictions(std::ostream& out, std::span<const PredictedLine> lines) {
  char buf[32];
  for (const PredictedLine& line : lines) {
    out << line.position << '\t';
    for (size_t i = 0; i < line.addrs.size(); ++i) {
      if (i) out << ',';
      snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(line.addrs[i]));
      out << buf;
    }
    out << '\n';
  }
}

std::vector<PredictedLine> read_predictions(std::istream& in, const AddressConfig& cfg) {
  cfg.validate();
  std::vector<PredictedLine> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw InputError("predictions line " + std::to_string(line_no) + ": missing tab");
    }
    PredictedLine pl;
    auto res = std::from_chars(line.data(), line.data() + tab, pl.position, 10);
    if (res.ec != std::errc{} || res.ptr != line.data() + tab) {
      throw InputError("predictions line " + std::to_string(line_no) + ": bad position");
    }
    if (!out.empty() && pl.position <= out.back().position) {
      throw InputError("predictions line " + std::to_string(line_no) +
                       ": positions must be strictly ascending");
    }
    size_t at = tab + 1;
    while (at < line.size()) {
      size_t comma = line.find(',', at);
      if (comma == std::string::npos) comma = line.size();
      std::string_view tok(line.data() + at, comma - at);
      uint64_t addr = 0;
      bool ok = tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X');
      if (ok) {
        auto r = std::from_chars(tok.data() + 2, tok.data() + tok.size(), addr, 16);
        ok = r.ec == std::errc{} && r.ptr == tok.data() + tok.size();
      }
      if (!ok) {
        throw InputError("predictions line " + std::to_string(line_no) +
                         ": bad address '" + std::string(tok) + "'");
      }
      if (addr > cfg.max_address()) {
        throw InputError("predictions line " + std::to_string(line_no) +
                         ": address exceeds configured address space");
      }
      pl.addrs.push_back(addr);
      at = comma + 1;
    }
    out.push_back(std::move(pl));
  }
  return out;
}

std::vector<PredictedLine> load_predictions(const std::string& path, const AddressConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open predictions file '" + path + "'");
  return read_predictions(in, cfg);
}

}  // namespace tmap
