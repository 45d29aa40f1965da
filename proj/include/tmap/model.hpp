#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tmap/address.hpp"
#include "tmap/rng.hpp"
#include "tmap/tape.hpp"

namespace tmap {

struct ModelConfig {
  uint32_t d_model = 64;
  uint32_t heads = 4;
  uint32_t d_ff = 256;
  uint32_t n_layers = 2;  // encoder and decoder stacks are the same depth
  uint32_t vocab_in = 2;  // binary address digits
  uint32_t vocab_out = 0;
  uint32_t max_in_len = 0;   // t * (m+n) flattened history bits
  uint32_t max_out_len = 0;  // BEGIN + k_max indexes + END
  uint32_t history_len = 8;  // t, carried so checkpoints are self-describing
  uint32_t k_max = 8;

  void validate() const {
    if (d_model == 0 || d_model % 2 != 0) {
      throw ConfigError("d_model must be positive and even, got " + std::to_string(d_model));
    }
    if (heads == 0 || d_model % heads != 0) {
      throw ConfigError("heads must divide d_model (" + std::to_string(heads) + " vs " +
                        std::to_string(d_model) + ")");
    }
    if (d_ff == 0 || n_layers == 0) throw ConfigError("d_ff and n_layers must be positive");
    if (vocab_in < 2 || vocab_out < 4) {
      throw ConfigError("vocabulary too small: need >= 2 input and >= 4 output symbols");
    }
    if (max_in_len == 0 || max_out_len < 2) throw ConfigError("sequence limits too small");
  }

  uint32_t begin_id() const { return vocab_out - 3; }
  uint32_t end_id() const { return vocab_out - 2; }
  uint32_t pad_id() const { return vocab_out - 1; }
};

inline ModelConfig make_model_config(const AddressConfig& addr, uint32_t t, uint32_t k_max,
                                     uint32_t d_model, uint32_t heads, uint32_t d_ff,
                                     uint32_t n_layers) {
  addr.validate();
  ModelConfig cfg;
  cfg.d_model = d_model;
  cfg.heads = heads;
  cfg.d_ff = d_ff;
  cfg.n_layers = n_layers;
  cfg.vocab_in = 2;
  cfg.vocab_out = output_vocab(addr);
  cfg.max_in_len = t * addr.block_address_bits();
  cfg.max_out_len = k_max + 2;
  cfg.history_len = t;
  cfg.k_max = k_max;
  cfg.validate();
  return cfg;
}

// Parameter structs are templated on the leaf type so the same layout serves
// both storage (Mat<S>) and a tape-bound mirror (Var<S>).
template <class T>
struct AttentionParamsT {
  T wq, wk, wv, wo;  // each d x d; heads are column slices of the projections
};

template <class T>
struct EncoderLayerT {
  AttentionParamsT<T> attn;
  T w1, b1, w2, b2;  // position-wise feed-forward
  T ln1_g, ln1_b, ln2_g, ln2_b;
};

template <class T>
struct DecoderLayerT {
  AttentionParamsT<T> self_attn, cross_attn;
  T w1, b1, w2, b2;
  T ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
};

template <class T>
struct ModelParamsT {
  T in_embed;   // vocab_in x d
  T out_embed;  // vocab_out x d
  T out_proj;   // d x vocab_out
  std::vector<EncoderLayerT<T>> encoder;
  std::vector<DecoderLayerT<T>> decoder;
};

template <class S>
using ModelParams = ModelParamsT<Mat<S>>;
template <class S>
using BoundModel = ModelParamsT<Var<S>>;

// Visits every tensor with a stable name in a stable order. Checkpoints,
// optimizer state, and initialization all key off this single enumeration.
template <class P, class F>
void for_each_param(P&& params, F&& f) {
  f(std::string("in_embed"), params.in_embed);
  f(std::string("out_embed"), params.out_embed);
  f(std::string("out_proj"), params.out_proj);
  for (size_t l = 0; l < params.encoder.size(); ++l) {
    auto& e = params.encoder[l];
    std::string p = "encoder." + std::to_string(l) + ".";
    f(p + "attn.wq", e.attn.wq);
    f(p + "attn.wk", e.attn.wk);
    f(p + "attn.wv", e.attn.wv);
    f(p + "attn.wo", e.attn.wo);
    f(p + "ffn.w1", e.w1);
    f(p + "ffn.b1", e.b1);
    f(p + "ffn.w2", e.w2);
    f(p + "ffn.b2", e.b2);
    f(p + "ln1.gamma", e.ln1_g);
    f(p + "ln1.beta", e.ln1_b);
    f(p + "ln2.gamma", e.ln2_g);
    f(p + "ln2.beta", e.ln2_b);
  }
  for (size_t l = 0; l < params.decoder.size(); ++l) {
    auto& d = params.decoder[l];
    std::string p = "decoder." + std::to_string(l) + ".";
    f(p + "self.wq", d.self_attn.wq);
    f(p + "self.wk", d.self_attn.wk);
    f(p + "self.wv", d.self_attn.wv);
    f(p + "self.wo", d.self_attn.wo);
    f(p + "cross.wq", d.cross_attn.wq);
    f(p + "cross.wk", d.cross_attn.wk);
    f(p + "cross.wv", d.cross_attn.wv);
    f(p + "cross.wo", d.cross_attn.wo);
    f(p + "ffn.w1", d.w1);
    f(p + "ffn.b1", d.b1);
    f(p + "ffn.w2", d.w2);
    f(p + "ffn.b2", d.b2);
    f(p + "ln1.gamma", d.ln1_g);
    f(p + "ln1.beta", d.ln1_b);
    f(p + "ln2.gamma", d.ln2_g);
    f(p + "ln2.beta", d.ln2_b);
    f(p + "ln3.gamma", d.ln3_g);
    f(p + "ln3.beta", d.ln3_b);
  }
}

// Expected tensor shapes for a config, in for_each_param order. Shared by
// init, the parameter-count closed form, and checkpoint shape validation.
inline void shape_params(ModelParamsT<std::pair<uint32_t, uint32_t>>& shapes,
                         const ModelConfig& cfg) {
  using Shape = std::pair<uint32_t, uint32_t>;
  uint32_t d = cfg.d_model;
  shapes.in_embed = Shape{cfg.vocab_in, d};
  shapes.out_embed = Shape{cfg.vocab_out, d};
  shapes.out_proj = Shape{d, cfg.vocab_out};
  EncoderLayerT<Shape> e;
  e.attn = {Shape{d, d}, Shape{d, d}, Shape{d, d}, Shape{d, d}};
  e.w1 = Shape{d, cfg.d_ff};
  e.b1 = Shape{1, cfg.d_ff};
  e.w2 = Shape{cfg.d_ff, d};
  e.b2 = Shape{1, d};
  e.ln1_g = e.ln1_b = e.ln2_g = e.ln2_b = Shape{1, d};
  shapes.encoder.assign(cfg.n_layers, e);
  DecoderLayerT<Shape> dec;
  dec.self_attn = dec.cross_attn = e.attn;
  dec.w1 = e.w1;
  dec.b1 = e.b1;
  dec.w2 = e.w2;
  dec.b2 = e.b2;
  dec.ln1_g = dec.ln1_b = dec.ln2_g = dec.ln2_b = dec.ln3_g = dec.ln3_b = Shape{1, d};
  shapes.decoder.assign(cfg.n_layers, dec);
}

template <class S>
size_t parameter_count(const ModelParams<S>& params) {
  size_t n = 0;
  for_each_param(params, [&](const std::string&, const Mat<S>& m) {
    n += static_cast<size_t>(m.rows() * m.cols());
  });
  return n;
}

inline size_t expected_parameter_count(const ModelConfig& cfg) {
  size_t d = cfg.d_model, ff = cfg.d_ff, v = cfg.vocab_out, L = cfg.n_layers;
  size_t embeds = cfg.vocab_in * d + v * d + d * v;
  size_t ffn = d * ff + ff + ff * d + d;
  size_t enc = 4 * d * d + ffn + 4 * d;
  size_t dec = 8 * d * d + ffn + 6 * d;
  return embeds + L * (enc + dec);
}

// Glorot-uniform projections, normal embeddings at the 1/sqrt(d) scale, unit
// gains and zero offsets for the norms, zero biases. Tensor-by-tensor draw
// order follows for_each_param, so a seed pins every weight.
template <class S>
ModelParams<S> init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParamsT<std::pair<uint32_t, uint32_t>> shapes;
  shape_params(shapes, cfg);
  ModelParams<S> params;
  params.encoder.resize(cfg.n_layers);
  params.decoder.resize(cfg.n_layers);

  std::vector<std::pair<uint32_t, uint32_t>*> shape_list;
  for_each_param(shapes, [&](const std::string&, std::pair<uint32_t, uint32_t>& s) {
    shape_list.push_back(&s);
  });
  size_t at = 0;
  double embed_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  for_each_param(params, [&](const std::string& name, Mat<S>& m) {
    auto [rows, cols] = *shape_list[at++];
    m.resize(rows, cols);
    bool is_gain = name.ends_with(".gamma");
    bool is_zero = name.ends_with(".beta") || name.ends_with(".b1") || name.ends_with(".b2");
    bool is_embed = name.ends_with("embed");
    if (is_gain) {
      m.setOnes();
    } else if (is_zero) {
      m.setZero();
    } else if (is_embed) {
      for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c)
          m(r, c) = static_cast<S>(rng.normal() * embed_scale);
    } else {
      double limit = std::sqrt(6.0 / (static_cast<double>(rows) + cols));
      for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c)
          m(r, c) = static_cast<S>(rng.uniform(-limit, limit));
    }
  });
  return params;
}

// Mirrors every parameter onto a tape as a leaf. The two for_each_param walks
// enumerate identical structures, so positional pairing is safe.
template <class S>
BoundModel<S> bind_params(Tape<S>& tape, const ModelParams<S>& params) {
  BoundModel<S> bound;
  bound.encoder.resize(params.encoder.size());
  bound.decoder.resize(params.decoder.size());
  std::vector<const Mat<S>*> src;
  for_each_param(params, [&](const std::string&, const Mat<S>& m) { src.push_back(&m); });
  std::vector<Var<S>*> dst;
  for_each_param(bound, [&](const std::string&, Var<S>& v) { dst.push_back(&v); });
  for (size_t i = 0; i < src.size(); ++i) *dst[i] = tape.leaf(*src[i]);
  return bound;
}

// Interleaved sinusoids: column 2i is sin(pos / 10000^(2i/d)), column 2i+1 the
// matching cosine. Computed in double and cast once.
template <class S>
Mat<S> positional_encoding(uint32_t max_len, uint32_t d_model) {
  if (max_len == 0) throw ConfigError("positional encoding needs max_len > 0");
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("positional encoding needs even d_model, got " + std::to_string(d_model));
  }
  Mat<S> pe(max_len, d_model);
  for (uint32_t pos = 0; pos < max_len; ++pos) {
    for (uint32_t i = 0; i < d_model / 2; ++i) {
      double angle = pos / std::pow(10000.0, (2.0 * i) / d_model);
      pe(pos, 2 * i) = static_cast<S>(std::sin(angle));
      pe(pos, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  }
  return pe;
}

// Scores masked with a large negative finite value so softmax keeps masked
// weights at exactly zero without producing inf - inf anywhere.
template <class S>
Mat<S> causal_mask(Eigen::Index len) {
  Mat<S> m = Mat<S>::Zero(len, len);
  for (Eigen::Index i = 0; i < len; ++i)
    for (Eigen::Index j = i + 1; j < len; ++j) m(i, j) = S(-1e30);
  return m;
}

// softmax(q k^T / sqrt(d_k) + mask) v
template <class S>
Var<S> scaled_dot_attention(Var<S> q, Var<S> k, Var<S> v, const Mat<S>* mask = nullptr) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: query/key widths disagree: " +
                     detail::shape_str(q.rows(), q.cols()) + " vs " +
                     detail::shape_str(k.rows(), k.cols()));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: key/value counts disagree: " +
                     detail::shape_str(k.rows(), k.cols()) + " vs " +
                     detail::shape_str(v.rows(), v.cols()));
  }
  S inv_sqrt_dk = S(1) / static_cast<S>(std::sqrt(static_cast<double>(q.cols())));
  Var<S> scores = scale(matmul_nt(q, k), inv_sqrt_dk);
  if (mask) scores = add_const(scores, *mask);
  return matmul(softmax_rows(scores), v);
}

// Full d x d projections sliced into h column bands, one attention per band,
// concatenated and mixed by wo.
template <class S>
Var<S> multi_head_attention(Var<S> q_in, Var<S> kv_in, const AttentionParamsT<Var<S>>& p,
                            uint32_t heads, const Mat<S>* mask = nullptr) {
  Eigen::Index d = q_in.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention heads must divide model width");
  }
  Eigen::Index dh = d / heads;
  Var<S> q = matmul(q_in, p.wq);
  Var<S> k = matmul(kv_in, p.wk);
  Var<S> v = matmul(kv_in, p.wv);
  std::vector<Var<S>> outs;
  outs.reserve(heads);
  for (uint32_t h = 0; h < heads; ++h) {
    outs.push_back(scaled_dot_attention(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh),
                                        slice_cols(v, h * dh, dh), mask));
  }
  return matmul(concat_cols(std::span<const Var<S>>(outs)), p.wo);
}

// max(0, x w1 + b1) w2 + b2
template <class S>
Var<S> feed_forward(Var<S> x, Var<S> w1, Var<S> b1, Var<S> w2, Var<S> b2) {
  return add_rowvec(matmul(relu(add_rowvec(matmul(x, w1), b1)), w2), b2);
}

template <class S>
Var<S> encoder_layer(Var<S> x, const EncoderLayerT<Var<S>>& l, uint32_t heads) {
  x = layer_norm_rows(add(x, multi_head_attention(x, x, l.attn, heads)), l.ln1_g, l.ln1_b);
  x = layer_norm_rows(add(x, feed_forward(x, l.w1, l.b1, l.w2, l.b2)), l.ln2_g, l.ln2_b);
  return x;
}

template <class S>
Var<S> decoder_layer(Var<S> x, Var<S> memory, const DecoderLayerT<Var<S>>& l, uint32_t heads,
                     const Mat<S>& mask) {
  x = layer_norm_rows(add(x, multi_head_attention(x, x, l.self_attn, heads, &mask)),
                      l.ln1_g, l.ln1_b);
  x = layer_norm_rows(add(x, multi_head_attention(x, memory, l.cross_attn, heads)),
                      l.ln2_g, l.ln2_b);
  x = layer_norm_rows(add(x, feed_forward(x, l.w1, l.b1, l.w2, l.b2)), l.ln3_g, l.ln3_b);
  return x;
}

// Runs the encoder stack over a binary token sequence. `pe` must have at
// least as many rows as the sequence (see positional_encoding).
template <class S>
Var<S> encode(Tape<S>& tape, const BoundModel<S>& bound, const ModelConfig& cfg,
              const Mat<S>& pe, std::span<const int> tokens) {
  if (tokens.empty()) throw InputError("encoder input is empty");
  if (tokens.size() > cfg.max_in_len) {
    throw InputError("encoder input of " + std::to_string(tokens.size()) +
                     " tokens exceeds limit " + std::to_string(cfg.max_in_len));
  }
  for (int tok : tokens) {
    if (tok < 0 || tok >= static_cast<int>(cfg.vocab_in)) {
      throw InputError("encoder token " + std::to_string(tok) + " outside binary vocabulary");
    }
  }
  if (pe.rows() < static_cast<Eigen::Index>(tokens.size())) {
    throw ContractError("positional encoding table shorter than sequence");
  }
  S embed_scale = static_cast<S>(std::sqrt(static_cast<double>(cfg.d_model)));
  Var<S> x = scale(embed_rows(bound.in_embed, tokens), embed_scale);
  x = add_const(x, Mat<S>(pe.topRows(static_cast<Eigen::Index>(tokens.size()))));
  for (const auto& layer : bound.encoder) x = encoder_layer(x, layer, cfg.heads);
  (void)tape;
  return x;
}

// Runs the decoder stack over a BEGIN-led prefix against encoder memory and
// projects to logits, one row per prefix position.
template <class S>
Var<S> decode(Tape<S>& tape, const BoundModel<S>& bound, const ModelConfig& cfg,
              const Mat<S>& pe, Var<S> memory, std::span<const int> prefix) {
  if (prefix.empty() || prefix[0] != static_cast<int>(cfg.begin_id())) {
    throw ContractError("decoder prefix must start with the BEGIN sentinel");
  }
  if (prefix.size() >= cfg.max_out_len) {
    throw InputError("decoder prefix of " + std::to_string(prefix.size()) +
                     " tokens exceeds limit " + std::to_string(cfg.max_out_len - 1));
  }
  for (int tok : prefix) {
    if (tok < 0 || tok >= static_cast<int>(cfg.vocab_out)) {
      throw InputError("decoder token " + std::to_string(tok) + " outside output vocabulary");
    }
  }
  if (pe.rows() < static_cast<Eigen::Index>(prefix.size())) {
    throw ContractError("positional encoding table shorter than sequence");
  }
  S embed_scale = static_cast<S>(std::sqrt(static_cast<double>(cfg.d_model)));
  Var<S> x = scale(embed_rows(bound.out_embed, prefix), embed_scale);
  x = add_const(x, Mat<S>(pe.topRows(static_cast<Eigen::Index>(prefix.size()))));
  Mat<S> mask = causal_mask<S>(static_cast<Eigen::Index>(prefix.size()));
  for (const auto& layer : bound.decoder) {
    x = decoder_layer(x, memory, layer, cfg.heads, mask);
  }
  (void)tape;
  return matmul(x, bound.out_proj);
}

// Teacher-forced end-to-end pass: logits for every prefix position.
template <class S>
Var<S> forward_logits(Tape<S>& tape, const BoundModel<S>& bound, const ModelConfig& cfg,
                      const Mat<S>& pe, std::span<const int> input,
                      std::span<const int> prefix) {
  Var<S> memory = encode(tape, bound, cfg, pe, input);
  return decode(tape, bound, cfg, pe, memory, prefix);
}

}  // namespace tmap
