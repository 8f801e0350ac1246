#pragma once

// Temporal transformer over the token sequence.
//
// Adds sinusoidal positional encodings (base 10000, interleaved sin/cos),
// then applies post-norm encoder blocks: multi-head self-attention ->
// residual -> layer norm -> feed-forward (ReLU) -> residual -> layer norm.
// Attention is full (non-causal): every hour of a forecast run is available
// at once, so nothing is masked.

#include <cmath>
#include <cstdint>
#include <vector>

#include "wmt/error.hpp"
#include "wmt/tensor.hpp"
#include "wmt/util.hpp"

namespace wmt {

struct TransformerConfig {
  int64_t d_model = 128;
  int64_t n_blocks = 2;
  int64_t n_heads = 4;
  int64_t ffn_dim = 256;
  int64_t horizon = 45;
  bool use_positional_encoding = true;

  void validate() const {
    if (d_model < 2 || d_model % 2 != 0) throw ConfigError("transformer: d_model must be even");
    if (n_heads < 1 || d_model % n_heads != 0) {
      throw ConfigError("transformer: d_model must be divisible by n_heads");
    }
    if (n_blocks < 1) throw ConfigError("transformer: n_blocks must be >= 1");
    if (ffn_dim < 1) throw ConfigError("transformer: ffn_dim must be >= 1");
    if (horizon < 1) throw ConfigError("transformer: horizon must be >= 1");
  }
};

inline int64_t transformer_block_parameter_count(const TransformerConfig& cfg) {
  const int64_t d = cfg.d_model, f = cfg.ffn_dim;
  return 4 * (d * d + d)     // Q, K, V, output projections
         + (f * d + f)       // FFN expansion
         + (d * f + d)       // FFN contraction
         + 2 * (2 * d);      // two layer norms
}

inline int64_t transformer_parameter_count(const TransformerConfig& cfg) {
  cfg.validate();
  return cfg.n_blocks * transformer_block_parameter_count(cfg);
}

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same argument).
template <typename T>
TensorPtr<T> positional_encoding(int64_t length, int64_t d_model) {
  if (d_model < 2 || d_model % 2 != 0) {
    throw ConfigError("positional_encoding: d_model must be even");
  }
  if (length < 1) throw DimensionError("positional_encoding: length must be >= 1");
  auto pe = make_tensor<T>({length, d_model});
  for (int64_t pos = 0; pos < length; ++pos) {
    for (int64_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                                 static_cast<double>(d_model));
      pe->data[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      pe->data[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

// Softmaxed attention weights, captured per block and head for inspection.
template <typename T>
struct AttentionCapture {
  std::vector<TensorPtr<T>> weights;  // n_blocks * n_heads entries, block-major
};

template <typename T>
struct TransformerBlock {
  TensorPtr<T> wq, bq, wk, bk, wv, bv, wo, bo;
  TensorPtr<T> ffn1_w, ffn1_b, ffn2_w, ffn2_b;
  TensorPtr<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  TransformerBlock(const TransformerConfig& cfg, Rng& rng) {
    const int64_t d = cfg.d_model, f = cfg.ffn_dim;
    auto proj = [&](int64_t rows, int64_t cols) {
      auto w = make_tensor<T>({rows, cols}, true);
      detail::kaiming_uniform(w, cols, rng);
      return w;
    };
    wq = proj(d, d);
    bq = make_tensor<T>({d}, true);
    wk = proj(d, d);
    bk = make_tensor<T>({d}, true);
    wv = proj(d, d);
    bv = make_tensor<T>({d}, true);
    wo = proj(d, d);
    bo = make_tensor<T>({d}, true);
    ffn1_w = proj(f, d);
    ffn1_b = make_tensor<T>({f}, true);
    ffn2_w = proj(d, f);
    ffn2_b = make_tensor<T>({d}, true);
    ln1_gamma = make_tensor<T>({d}, true);
    ln1_beta = make_tensor<T>({d}, true);
    ln2_gamma = make_tensor<T>({d}, true);
    ln2_beta = make_tensor<T>({d}, true);
    std::fill(ln1_gamma->data.begin(), ln1_gamma->data.end(), T(1));
    std::fill(ln2_gamma->data.begin(), ln2_gamma->data.end(), T(1));
  }
};

template <typename T>
struct TemporalTransformer {
  TransformerConfig config;
  std::vector<TransformerBlock<T>> blocks;

  TemporalTransformer(const TransformerConfig& cfg, uint64_t seed) : config(cfg) {
    config.validate();
    Rng rng(seed);
    blocks.reserve(static_cast<size_t>(config.n_blocks));
    for (int64_t i = 0; i < config.n_blocks; ++i) blocks.emplace_back(config, rng);
  }

  // tokens: T x d_model -> embeddings T x d_model.
  TensorPtr<T> forward(Graph<T>* g, const TensorPtr<T>& tokens,
                       AttentionCapture<T>* capture = nullptr) const {
    if (tokens->shape.size() != 2 || tokens->shape[1] != config.d_model) {
      throw DimensionError("transformer: tokens must be T x " + std::to_string(config.d_model));
    }
    const int64_t len = tokens->shape[0];
    const int64_t dk = config.d_model / config.n_heads;
    TensorPtr<T> x = tokens;
    if (config.use_positional_encoding) {
      x = add<T>(g, x, positional_encoding<T>(len, config.d_model));
    }
    const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
    for (const TransformerBlock<T>& blk : blocks) {
      auto q = linear<T>(g, x, blk.wq, blk.bq);
      auto k = linear<T>(g, x, blk.wk, blk.bk);
      auto v = linear<T>(g, x, blk.wv, blk.bv);
      std::vector<TensorPtr<T>> heads;
      heads.reserve(static_cast<size_t>(config.n_heads));
      for (int64_t h = 0; h < config.n_heads; ++h) {
        auto qh = slice_cols<T>(g, q, h * dk, dk);
        auto kh = slice_cols<T>(g, k, h * dk, dk);
        auto vh = slice_cols<T>(g, v, h * dk, dk);
        auto scores = scale<T>(g, matmul<T>(g, qh, kh, true), inv_sqrt_dk);
        auto attn = softmax<T>(g, scores);
        if (capture) capture->weights.push_back(attn);
        heads.push_back(matmul<T>(g, attn, vh));
      }
      auto concat = concat_cols<T>(g, heads);
      auto attended = linear<T>(g, concat, blk.wo, blk.bo);
      x = layer_norm<T>(g, add<T>(g, x, attended), blk.ln1_gamma, blk.ln1_beta);
      auto hidden = relu<T>(g, linear<T>(g, x, blk.ffn1_w, blk.ffn1_b));
      auto ffn = linear<T>(g, hidden, blk.ffn2_w, blk.ffn2_b);
      x = layer_norm<T>(g, add<T>(g, x, ffn), blk.ln2_gamma, blk.ln2_beta);
    }
    return x;
  }
};

}  // namespace wmt
