#pragma once

// Full forecasting model: spatial encoder -> temporal transformer -> linear
// head mapping each temporal embedding to one normalized production value.
//
// All learnable tensors (and the batch-norm running statistics, which are
// state but not trainable) are listed in a named parameter registry; the
// optimizer and the checkpoint format both key off those names.

#include <cstdint>
#include <string>
#include <vector>

#include "wmt/encoder.hpp"
#include "wmt/error.hpp"
#include "wmt/tensor.hpp"
#include "wmt/transformer.hpp"

namespace wmt {

template <typename T>
struct ParamEntry {
  std::string name;
  TensorPtr<T> tensor;
  bool trainable;
};

template <typename T>
class ParamRegistry {
 public:
  void add(const std::string& name, const TensorPtr<T>& tensor, bool trainable) {
    for (const auto& e : entries_) {
      if (e.name == name) throw ContractError("duplicate parameter name: " + name);
    }
    entries_.push_back(ParamEntry<T>{name, tensor, trainable});
  }

  const std::vector<ParamEntry<T>>& entries() const { return entries_; }

  TensorPtr<T> find(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return e.tensor;
    }
    return nullptr;
  }

  int64_t trainable_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) {
      if (e.trainable) n += e.tensor->numel();
    }
    return n;
  }

 private:
  std::vector<ParamEntry<T>> entries_;
};

inline int64_t model_parameter_count(const EncoderConfig& enc, const TransformerConfig& tr) {
  // Head: d_model weights + 1 bias.
  return encoder_parameter_count(enc) + transformer_parameter_count(tr) + tr.d_model + 1;
}

template <typename T>
struct ForecastModel {
  EncoderConfig enc_cfg;
  TransformerConfig tr_cfg;
  SpatialEncoder<T> encoder;
  TemporalTransformer<T> transformer;
  TensorPtr<T> head_w, head_b;
  ParamRegistry<T> params;

  ForecastModel(const EncoderConfig& enc, const TransformerConfig& tr, uint64_t seed)
      : enc_cfg(enc), tr_cfg(tr), encoder(enc, mix_seed(seed, 1)),
        transformer(tr, mix_seed(seed, 2)) {
    head_w = make_tensor<T>({1, tr.d_model}, true);
    head_b = make_tensor<T>({1}, true);
    Rng rng(mix_seed(seed, 3));
    detail::kaiming_uniform(head_w, tr.d_model, rng);

    params.add("encoder.conv1.weight", encoder.conv1_w, true);
    params.add("encoder.conv1.bias", encoder.conv1_b, true);
    params.add("encoder.bn1.gamma", encoder.bn1_gamma, true);
    params.add("encoder.bn1.beta", encoder.bn1_beta, true);
    params.add("encoder.bn1.running_mean", encoder.bn1_mean, false);
    params.add("encoder.bn1.running_var", encoder.bn1_var, false);
    params.add("encoder.conv2.weight", encoder.conv2_w, true);
    params.add("encoder.conv2.bias", encoder.conv2_b, true);
    params.add("encoder.bn2.gamma", encoder.bn2_gamma, true);
    params.add("encoder.bn2.beta", encoder.bn2_beta, true);
    params.add("encoder.bn2.running_mean", encoder.bn2_mean, false);
    params.add("encoder.bn2.running_var", encoder.bn2_var, false);
    params.add("encoder.fc.weight", encoder.fc_w, true);
    params.add("encoder.fc.bias", encoder.fc_b, true);
    for (size_t i = 0; i < transformer.blocks.size(); ++i) {
      const auto& b = transformer.blocks[i];
      const std::string p = "transformer.block" + std::to_string(i) + ".";
      params.add(p + "attn.q.weight", b.wq, true);
      params.add(p + "attn.q.bias", b.bq, true);
      params.add(p + "attn.k.weight", b.wk, true);
      params.add(p + "attn.k.bias", b.bk, true);
      params.add(p + "attn.v.weight", b.wv, true);
      params.add(p + "attn.v.bias", b.bv, true);
      params.add(p + "attn.out.weight", b.wo, true);
      params.add(p + "attn.out.bias", b.bo, true);
      params.add(p + "ln1.gamma", b.ln1_gamma, true);
      params.add(p + "ln1.beta", b.ln1_beta, true);
      params.add(p + "ffn1.weight", b.ffn1_w, true);
      params.add(p + "ffn1.bias", b.ffn1_b, true);
      params.add(p + "ffn2.weight", b.ffn2_w, true);
      params.add(p + "ffn2.bias", b.ffn2_b, true);
      params.add(p + "ln2.gamma", b.ln2_gamma, true);
      params.add(p + "ln2.beta", b.ln2_beta, true);
    }
    params.add("head.weight", head_w, true);
    params.add("head.bias", head_b, true);

    const int64_t expected = model_parameter_count(enc_cfg, tr_cfg);
    if (params.trainable_count() != expected) {
      throw ContractError("parameter enumeration (" + std::to_string(params.trainable_count()) +
                          ") disagrees with analytic count (" + std::to_string(expected) + ")");
    }
  }

  // Training/eval forward over a packed batch: maps is (B*T) x C x H x W with
  // the T hours of each sample contiguous. Returns raw (unclamped)
  // predictions of shape (B*T). The encoder sees the whole packed batch at
  // once (batch-norm statistics span all maps); the transformer runs per
  // sample over its 45 rows.
  TensorPtr<T> forward_batch(Graph<T>* g, const TensorPtr<T>& maps, int64_t batch,
                             bool training, int threads = 1) const {
    const int64_t horizon = tr_cfg.horizon;
    if (maps->shape.size() != 4 || maps->shape[0] != batch * horizon) {
      throw DimensionError("forward_batch: maps must be (batch*horizon) x C x H x W");
    }
    auto tokens = encoder.forward(g, maps, training, threads);
    std::vector<TensorPtr<T>> preds;
    preds.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
      auto seq = batch == 1 ? tokens : slice_rows<T>(g, tokens, b * horizon, horizon);
      auto emb = transformer.forward(g, seq);
      preds.push_back(linear<T>(g, emb, head_w, head_b));
    }
    auto stacked = batch == 1 ? preds[0] : concat_rows<T>(g, preds);
    return reshape<T>(g, stacked, {batch * horizon});
  }

  // Inference on one sample: maps T x C x H x W -> length-T forecast of
  // capacity fractions, clamped to [0, 1]. Eval-mode batch norm, no tape.
  std::vector<T> predict(const TensorPtr<T>& maps) const {
    if (maps->shape.size() != 4) throw DimensionError("predict: maps must be rank-4");
    auto tokens = encoder.forward(nullptr, maps, false);
    auto emb = transformer.forward(nullptr, tokens);
    auto raw = linear<T>(nullptr, emb, head_w, head_b);
    std::vector<T> out(raw->data.size());
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = std::min(T(1), std::max(T(0), raw->data[i]));
    }
    return out;
  }
};

}  // namespace wmt
