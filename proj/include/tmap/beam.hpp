#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tmap/address.hpp"
#include "tmap/model.hpp"
#include "tmap/trace.hpp"

namespace tmap {

// Beam search over any next-token distribution. `step` receives the tokens
// emitted so far (BEGIN handling is the caller's business) and returns
// log-probabilities over the vocabulary. A hypothesis finishes when it emits
// `end_token`; expansion stops once every beam slot is finished or max_len is
// reached. The best finished hypothesis wins; if none finished, the best
// truncated one does. Ties break toward lexicographically smaller token
// sequences, so equal-probability candidates resolve to lower token ids.
template <class StepFn>
std::vector<int> beam_search(StepFn&& step, int vocab_size, int end_token, int width,
                             int max_len) {
  if (width < 1) throw ConfigError("beam width must be at least 1");
  if (max_len < 1) throw ConfigError("beam max_len must be at least 1");
  if (vocab_size < 2 || end_token < 0 || end_token >= vocab_size) {
    throw ConfigError("beam vocabulary/end token configuration is invalid");
  }

  struct Hyp {
    std::vector<int> tokens;
    double score = 0;
    bool finished = false;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> beam{Hyp{}};
  for (int len = 0; len < max_len; ++len) {
    bool any_live = false;
    for (const Hyp& h : beam) any_live = any_live || !h.finished;
    if (!any_live) break;

    std::vector<Hyp> candidates;
    candidates.reserve(beam.size() * static_cast<size_t>(vocab_size));
    for (const Hyp& h : beam) {
      if (h.finished) {
        candidates.push_back(h);
        continue;
      }
      std::vector<double> lp = step(h.tokens);
      if (static_cast<int>(lp.size()) != vocab_size) {
        throw ContractError("beam step returned " + std::to_string(lp.size()) +
                            " log-probs for a vocabulary of " + std::to_string(vocab_size));
      }
      for (int tok = 0; tok < vocab_size; ++tok) {
        Hyp next;
        next.tokens = h.tokens;
        next.tokens.push_back(tok);
        next.score = h.score + lp[static_cast<size_t>(tok)];
        next.finished = tok == end_token;
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), better);
    if (static_cast<int>(candidates.size()) > width) candidates.resize(static_cast<size_t>(width));
    beam = std::move(candidates);
  }

  const Hyp* best = nullptr;
  for (const Hyp& h : beam) {
    if (!h.finished) continue;
    if (!best || better(h, *best)) best = &h;
  }
  if (!best) {
    for (const Hyp& h : beam) {
      if (!best || better(h, *best)) best = &h;
    }
  }
  return best->tokens;
}

// Decoded prefetch targets for one trace position, as in-page block indexes.
struct Prediction {
  uint64_t position = 0;
  std::vector<uint32_t> block_indexes;  // distinct, < 2^n, in emission order
};

namespace detail {

template <class S>
std::vector<double> to_log_probs(const Mat<S>& logits, Eigen::Index row) {
  // Normalized in double so beam scores stay comparable across steps.
  Eigen::Index v = logits.cols();
  std::vector<double> lp(static_cast<size_t>(v));
  double m = -1e300;
  for (Eigen::Index c = 0; c < v; ++c) m = std::max(m, static_cast<double>(logits(row, c)));
  double sum = 0;
  for (Eigen::Index c = 0; c < v; ++c) sum += std::exp(static_cast<double>(logits(row, c)) - m);
  double lse = std::log(sum) + m;
  for (Eigen::Index c = 0; c < v; ++c) lp[static_cast<size_t>(c)] =
      static_cast<double>(logits(row, c)) - lse;
  return lp;
}

}  // namespace detail

// Runs the model once over a history and beam-decodes prefetch targets. The
// encoder runs a single time; each beam step appends one decoder pass to the
// same tape. Sentinels are stripped from the result, duplicates keep their
// first occurrence, and at most k_max indexes survive.
template <class S>
Prediction predict_one(const ModelParams<S>& params, const ModelConfig& cfg, const Mat<S>& pe,
                       const AddressConfig& addr, std::span<const uint64_t> history_blocks,
                       uint64_t position, int beam_width = 2) {
  Tape<S> tape;
  BoundModel<S> bound = bind_params(tape, params);
  std::vector<uint8_t> bits = flatten_history(history_blocks, cfg.history_len, addr);
  std::vector<int> input(bits.begin(), bits.end());
  Var<S> memory = encode(tape, bound, cfg, pe, input);

  int begin = static_cast<int>(cfg.begin_id());
  auto step = [&](const std::vector<int>& emitted) {
    std::vector<int> prefix;
    prefix.reserve(emitted.size() + 1);
    prefix.push_back(begin);
    prefix.insert(prefix.end(), emitted.begin(), emitted.end());
    Var<S> logits = decode(tape, bound, cfg, pe, memory, prefix);
    return detail::to_log_probs(logits.value(), logits.rows() - 1);
  };
  std::vector<int> tokens = beam_search(step, static_cast<int>(cfg.vocab_out),
                                        static_cast<int>(cfg.end_id()), beam_width,
                                        static_cast<int>(cfg.k_max) + 1);

  Prediction pred;
  pred.position = position;
  uint32_t index_space = static_cast<uint32_t>(addr.block_index_space());
  for (int tok : tokens) {
    if (tok < 0 || tok >= static_cast<int>(index_space)) continue;  // sentinels
    uint32_t idx = static_cast<uint32_t>(tok);
    if (std::find(pred.block_indexes.begin(), pred.block_indexes.end(), idx) !=
        pred.block_indexes.end()) {
      continue;
    }
    pred.block_indexes.push_back(idx);
    if (pred.block_indexes.size() == cfg.k_max) break;
  }
  return pred;
}

// One output line of the predict stage: reconstructed byte addresses for the
// access at `position`.
struct PredictedLine {
  uint64_t position = 0;
  std::vector<uint64_t> addrs;
};

// Predicts at every trace position. Early positions with fewer than t prior
// accesses use the front-padded history, matching how a warm prefetcher would
// run from the first access. Predicted indexes are reconstructed into full
// byte addresses against the triggering access's page.
template <class S>
std::vector<PredictedLine> predict_trace(const ModelParams<S>& params, const ModelConfig& cfg,
                                         const AddressConfig& addr,
                                         std::span<const TraceRecord> records,
                                         int beam_width = 2, std::ostream* log = nullptr) {
  Mat<S> pe = positional_encoding<S>(std::max(cfg.max_in_len, cfg.max_out_len), cfg.d_model);
  std::vector<uint64_t> blocks(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    blocks[i] = to_block_address(records[i].addr, addr);
  }
  std::vector<PredictedLine> out;
  out.reserve(records.size());
  for (size_t pos = 0; pos < records.size(); ++pos) {
    size_t first = pos + 1 >= cfg.history_len ? pos + 1 - cfg.history_len : 0;
    std::span<const uint64_t> history(blocks.data() + first, pos + 1 - first);
    Prediction pred = predict_one(params, cfg, pe, addr, history, pos, beam_width);
    PredictedLine line;
    line.position = pos;
    line.addrs.reserve(pred.block_indexes.size());
    for (uint32_t idx : pred.block_indexes) {
      line.addrs.push_back(reconstruct_address(records[pos].addr, idx, addr));
    }
    out.push_back(std::move(line));
    if (log && (pos + 1) % 5000 == 0) {
      *log << "predicted " << (pos + 1) << "/" << records.size() << " positions\n";
    }
  }
  return out;
}

// Prediction text format, one line per trace position:
//
//   <position> TAB <comma-separated 0x-prefixed block-aligned addresses>
//
// The address list may be empty. Positions must be strictly ascending but
// need not be dense; the simulator treats missing positions as "no issue".
void write_predictions(std::ostream& out, std::span<const PredictedLine> lines);
std::vector<PredictedLine> read_predictions(std::istream& in, const AddressConfig& cfg);
std::vector<PredictedLine> load_predictions(const std::string& path, const AddressConfig& cfg);

}  // namespace tmap
