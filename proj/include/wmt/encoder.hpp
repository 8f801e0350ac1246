#pragma once

// Spatial encoder: each multi-channel weather grid becomes one 128-d token.
//
// Pipeline per map: conv(16 filters) -> batch norm -> ReLU -> conv(32
// filters) -> batch norm -> ReLU -> adaptive global average pool -> linear
// 32 -> 128. Global pooling makes the token dimension independent of the
// input's spatial extent, so the same parameters serve any grid size not
// smaller than the kernel.

#include <cstdint>
#include <string>
#include <vector>

#include "wmt/error.hpp"
#include "wmt/tensor.hpp"
#include "wmt/util.hpp"

namespace wmt {

struct EncoderConfig {
  int64_t in_channels = 2;  // 2 for wind (u10, v10); 3 for solar
  int64_t kernel_size = 3;

  static constexpr int64_t conv1_filters = 16;
  static constexpr int64_t conv2_filters = 32;
  static constexpr int64_t token_dim = 128;

  void validate() const {
    if (in_channels < 1) throw ConfigError("encoder: in_channels must be >= 1");
    if (kernel_size < 1) throw ConfigError("encoder: kernel_size must be >= 1");
    if (kernel_size % 2 == 0) {
      throw ConfigError("encoder: kernel_size must be odd for symmetric same-padding");
    }
  }
};

inline int64_t encoder_parameter_count(const EncoderConfig& cfg) {
  cfg.validate();
  const int64_t k2 = cfg.kernel_size * cfg.kernel_size;
  const int64_t conv1 = EncoderConfig::conv1_filters * (cfg.in_channels * k2 + 1);
  const int64_t bn1 = 2 * EncoderConfig::conv1_filters;
  const int64_t conv2 =
      EncoderConfig::conv2_filters * (EncoderConfig::conv1_filters * k2 + 1);
  const int64_t bn2 = 2 * EncoderConfig::conv2_filters;
  const int64_t fc = EncoderConfig::token_dim * EncoderConfig::conv2_filters +
                     EncoderConfig::token_dim;
  return conv1 + bn1 + conv2 + bn2 + fc;
}

template <typename T>
struct SpatialEncoder {
  EncoderConfig config;
  TensorPtr<T> conv1_w, conv1_b, bn1_gamma, bn1_beta, bn1_mean, bn1_var;
  TensorPtr<T> conv2_w, conv2_b, bn2_gamma, bn2_beta, bn2_mean, bn2_var;
  TensorPtr<T> fc_w, fc_b;

  SpatialEncoder(const EncoderConfig& cfg, uint64_t seed) : config(cfg) {
    config.validate();
    const int64_t c1 = EncoderConfig::conv1_filters;
    const int64_t c2 = EncoderConfig::conv2_filters;
    const int64_t k = config.kernel_size;
    const int64_t d = EncoderConfig::token_dim;
    conv1_w = make_tensor<T>({c1, config.in_channels, k, k}, true);
    conv1_b = make_tensor<T>({c1}, true);
    bn1_gamma = make_tensor<T>({c1}, true);
    bn1_beta = make_tensor<T>({c1}, true);
    bn1_mean = make_tensor<T>({c1});
    bn1_var = make_tensor<T>({c1});
    conv2_w = make_tensor<T>({c2, c1, k, k}, true);
    conv2_b = make_tensor<T>({c2}, true);
    bn2_gamma = make_tensor<T>({c2}, true);
    bn2_beta = make_tensor<T>({c2}, true);
    bn2_mean = make_tensor<T>({c2});
    bn2_var = make_tensor<T>({c2});
    fc_w = make_tensor<T>({d, c2}, true);
    fc_b = make_tensor<T>({d}, true);

    Rng rng(seed);
    detail::kaiming_uniform(conv1_w, config.in_channels * k * k, rng);
    detail::kaiming_uniform(conv2_w, c1 * k * k, rng);
    detail::kaiming_uniform(fc_w, c2, rng);
    std::fill(bn1_gamma->data.begin(), bn1_gamma->data.end(), T(1));
    std::fill(bn2_gamma->data.begin(), bn2_gamma->data.end(), T(1));
    std::fill(bn1_var->data.begin(), bn1_var->data.end(), T(1));
    std::fill(bn2_var->data.begin(), bn2_var->data.end(), T(1));
  }

  // maps: N x C x H x W -> tokens N x token_dim. Training mode uses batch
  // statistics (and updates the running ones); eval mode uses running stats.
  TensorPtr<T> forward(Graph<T>* g, const TensorPtr<T>& maps, bool training,
                       int threads = 1) const {
    if (maps->shape.size() != 4) throw DimensionError("encoder: input must be rank-4");
    if (maps->shape[1] != config.in_channels) {
      throw ConfigError("encoder: input has " + std::to_string(maps->shape[1]) +
                        " channels, config expects " + std::to_string(config.in_channels));
    }
    if (maps->shape[2] < config.kernel_size || maps->shape[3] < config.kernel_size) {
      throw DimensionError("encoder: spatial extent smaller than kernel");
    }
    const int64_t pad = config.kernel_size / 2;
    auto x = conv2d<T>(g, maps, conv1_w, conv1_b, 1, pad, threads);
    x = batch_norm2d<T>(g, x, bn1_gamma, bn1_beta, bn1_mean, bn1_var, training);
    x = relu<T>(g, x);
    x = conv2d<T>(g, x, conv2_w, conv2_b, 1, pad, threads);
    x = batch_norm2d<T>(g, x, bn2_gamma, bn2_beta, bn2_mean, bn2_var, training);
    x = relu<T>(g, x);
    x = adaptive_avg_pool2d<T>(g, x);
    x = reshape<T>(g, x, {maps->shape[0], EncoderConfig::conv2_filters});
    return linear<T>(g, x, fc_w, fc_b, threads);
  }

  // One C x H x W map -> a single 128-d token (eval mode, no tape).
  std::vector<T> encode_map(const TensorPtr<T>& field) const {
    if (field->shape.size() != 3) throw DimensionError("encode_map: input must be rank-3");
    auto batched = make_tensor<T>({1, field->shape[0], field->shape[1], field->shape[2]});
    batched->data = field->data;
    auto tok = forward(nullptr, batched, false);
    return tok->data;
  }

  // T x C x H x W -> T x 128 token matrix (eval mode, maps independent).
  TensorPtr<T> encode_sequence(const TensorPtr<T>& fields) const {
    if (fields->shape.size() != 4) throw DimensionError("encode_sequence: input must be rank-4");
    return forward(nullptr, fields, false);
  }
};

}  // namespace wmt
