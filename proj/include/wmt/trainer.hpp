#pragma once

// Training loop: Adam with bias correction, MSE loss, seeded per-epoch
// shuffling, strict-improvement early stopping with best-epoch snapshot
// restoration, and a binary checkpoint format ("WMTK") that round-trips the
// named parameter table, the normalization statistics, and (optionally) the
// optimizer moments bit-exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "wmt/data.hpp"
#include "wmt/error.hpp"
#include "wmt/model.hpp"
#include "wmt/synthetic.hpp"
#include "wmt/tensor.hpp"
#include "wmt/util.hpp"

namespace wmt {

struct TrainConfig {
  double learning_rate = 1e-4;
  int64_t batch_size = 8;
  int64_t max_epochs = 500;
  int64_t patience = 20;
  uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("train: learning rate must be positive");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max epochs must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (threads < 1) throw ConfigError("train: thread count must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<T>> m, v;  // aligned with the registry's trainable entries

  template <typename U>
  void init(const ParamRegistry<U>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& e : params.entries()) {
      if (!e.trainable) continue;
      m.emplace_back(e.tensor->data.size(), T(0));
      v.emplace_back(e.tensor->data.size(), T(0));
    }
  }
};

// One bias-corrected Adam update over a single tensor's accumulated gradient.
template <typename T>
void adam_update_tensor(const std::string& name, const TensorPtr<T>& param, std::vector<T>& m,
                        std::vector<T>& v, int64_t step, double lr, double beta1 = 0.9,
                        double beta2 = 0.999, double eps = 1e-8) {
  if (step < 1) throw ContractError("adam: step must be >= 1");
  param->ensure_grad();
  if (m.size() != param->data.size() || v.size() != param->data.size()) {
    throw ContractError("adam: moment buffers do not match parameter " + name);
  }
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (size_t i = 0; i < param->data.size(); ++i) {
    const double g = static_cast<double>(param->grad[i]);
    if (!std::isfinite(g)) {
      throw NumericError("non-finite gradient in parameter '" + name + "' at index " +
                         std::to_string(i));
    }
    const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
    const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    param->data[i] = static_cast<T>(static_cast<double>(param->data[i]) -
                                    lr * mhat / (std::sqrt(vhat) + eps));
  }
}

// Applies one Adam step to every trainable parameter in registry order.
template <typename T>
void adam_step(const ParamRegistry<T>& params, AdamState<T>& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  ++state.step;
  size_t slot = 0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    adam_update_tensor<T>(e.name, e.tensor, state.m[slot], state.v[slot], state.step, lr, beta1,
                          beta2, eps);
    ++slot;
  }
}

// ---------------------------------------------------------------------------
// Early stopping (strict improvement, best-epoch snapshot)
// ---------------------------------------------------------------------------

class EarlyStopper {
 public:
  explicit EarlyStopper(int64_t patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("early stopping: patience must be >= 1");
  }

  // Call once per epoch with that epoch's validation loss. Returns true when
  // the loss strictly improved on the best seen so far.
  bool observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch_;
      since_improvement_ = 0;
      return true;
    }
    ++since_improvement_;
    return false;
  }

  bool should_stop() const { return since_improvement_ >= patience_; }
  int64_t epoch() const { return epoch_; }
  int64_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int64_t epochs_since_improvement() const { return since_improvement_; }

 private:
  int64_t patience_;
  int64_t epoch_ = 0;
  int64_t best_epoch_ = 0;
  int64_t since_improvement_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLoss {
  int64_t epoch;
  double train_mse, val_mse;
};

struct TrainResult {
  int64_t epochs_run = 0;
  int64_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochLoss> log;

  std::string log_csv() const {
    std::string out = "epoch,train_mse,val_mse\n";
    for (const auto& e : log) {
      out += std::to_string(e.epoch) + "," + fmt_g(e.train_mse, 17) + "," +
             fmt_g(e.val_mse, 17) + "\n";
    }
    return out;
  }
};

namespace detail {

// Packs samples [first, first+count) of `order` into one (count*horizon) x
// C x H x W tensor plus the flat target vector.
template <typename T>
void pack_batch(const std::vector<ForecastSample>& samples, const std::vector<size_t>& order,
                size_t first, size_t count, int64_t horizon, const TensorPtr<T>& maps,
                const TensorPtr<T>& targets) {
  const int64_t fsz = samples[order[first]].channels * samples[order[first]].height *
                      samples[order[first]].width;
  for (size_t b = 0; b < count; ++b) {
    const ForecastSample& s = samples[order[first + b]];
    T* dst = maps->data.data() + static_cast<int64_t>(b) * horizon * fsz;
    for (size_t i = 0; i < s.weather.size(); ++i) dst[i] = static_cast<T>(s.weather[i]);
    T* tg = targets->data.data() + static_cast<int64_t>(b) * horizon;
    for (int64_t k = 0; k < horizon; ++k) tg[k] = static_cast<T>(s.target_frac[k]);
  }
}

}  // namespace detail

// Mean squared validation error in normalized units, eval-mode batch norm.
template <typename T>
double evaluate_mse(const ForecastModel<T>& model, const std::vector<ForecastSample>& samples,
                    int64_t batch_size, int threads = 1) {
  if (samples.empty()) throw ConfigError("evaluate: empty sample set");
  const int64_t horizon = model.tr_cfg.horizon;
  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  double sum_sq = 0.0;
  int64_t n_vals = 0;
  for (size_t first = 0; first < samples.size(); first += static_cast<size_t>(batch_size)) {
    const size_t count = std::min(static_cast<size_t>(batch_size), samples.size() - first);
    const ForecastSample& s0 = samples[order[first]];
    auto maps = make_tensor<T>({static_cast<int64_t>(count) * horizon, s0.channels, s0.height,
                                s0.width});
    auto targets = make_tensor<T>({static_cast<int64_t>(count) * horizon});
    detail::pack_batch<T>(samples, order, first, count, horizon, maps, targets);
    auto pred = model.forward_batch(nullptr, maps, static_cast<int64_t>(count), false, threads);
    for (int64_t i = 0; i < pred->numel(); ++i) {
      const double d = static_cast<double>(pred->data[i]) - static_cast<double>(targets->data[i]);
      sum_sq += d * d;
    }
    n_vals += pred->numel();
  }
  return sum_sq / static_cast<double>(n_vals);
}

// Snapshot of every registry tensor (parameters and running stats) plus the
// optimizer, taken at the best validation epoch and restored at the end.
template <typename T>
struct ModelSnapshot {
  std::vector<std::vector<T>> tensors;
  AdamState<T> opt;

  void capture(const ParamRegistry<T>& params, const AdamState<T>& state) {
    tensors.clear();
    for (const auto& e : params.entries()) tensors.push_back(e.tensor->data);
    opt = state;
  }
  void restore(const ParamRegistry<T>& params, AdamState<T>& state) const {
    for (size_t i = 0; i < params.entries().size(); ++i) {
      params.entries()[i].tensor->data = tensors[i];
    }
    state = opt;
  }
  bool empty() const { return tensors.empty(); }
};

template <typename T>
TrainResult train(ForecastModel<T>& model, AdamState<T>& opt,
                  const std::vector<ForecastSample>& train_samples,
                  const std::vector<ForecastSample>& val_samples, const TrainConfig& cfg,
                  std::ostream* progress = nullptr) {
  cfg.validate();
  if (train_samples.empty()) throw ConfigError("train: empty training split");
  if (val_samples.empty()) throw ConfigError("train: empty validation split");
  if (opt.m.empty()) opt.init(model.params);
  const int64_t horizon = model.tr_cfg.horizon;
  for (const auto& s : train_samples) {
    if (static_cast<int64_t>(s.target_frac.size()) != horizon) {
      throw DimensionError("train: sample horizon does not match model horizon");
    }
  }

  TrainResult result;
  EarlyStopper stopper(cfg.patience);
  ModelSnapshot<T> best;
  const size_t n = train_samples.size();

  for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const std::vector<size_t> order = shuffled_indices(n, mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
    double train_sq_sum = 0.0;
    int64_t train_vals = 0;
    int64_t batch_index = 0;
    for (size_t first = 0; first < n; first += static_cast<size_t>(cfg.batch_size)) {
      const size_t count = std::min(static_cast<size_t>(cfg.batch_size), n - first);
      const ForecastSample& s0 = train_samples[order[first]];
      auto maps = make_tensor<T>({static_cast<int64_t>(count) * horizon, s0.channels, s0.height,
                                  s0.width});
      auto targets = make_tensor<T>({static_cast<int64_t>(count) * horizon});
      detail::pack_batch<T>(train_samples, order, first, count, horizon, maps, targets);

      Graph<T> graph;
      auto pred = model.forward_batch(&graph, maps, static_cast<int64_t>(count), true,
                                      cfg.threads);
      auto loss = mse_loss<T>(&graph, pred, targets);
      const double loss_value = static_cast<double>(loss->data[0]);
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      graph.backward(loss);
      adam_step<T>(model.params, opt, cfg.learning_rate);
      for (const auto& e : model.params.entries()) e.tensor->zero_grad();

      train_sq_sum += loss_value * static_cast<double>(pred->numel());
      train_vals += pred->numel();
      ++batch_index;
    }
    const double train_mse = train_sq_sum / static_cast<double>(train_vals);
    const double val_mse = evaluate_mse<T>(model, val_samples, cfg.batch_size, cfg.threads);
    if (!std::isfinite(val_mse)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.log.push_back(EpochLoss{epoch, train_mse, val_mse});
    if (progress) {
      (*progress) << "epoch " << epoch << " train_mse " << fmt_g(train_mse, 6) << " val_mse "
                  << fmt_g(val_mse, 6) << "\n";
    }
    if (stopper.observe(val_mse)) best.capture(model.params, opt);
    if (stopper.should_stop()) break;
  }

  if (!best.empty()) best.restore(model.params, opt);
  result.epochs_run = stopper.epoch();
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints ("WMTK")
// ---------------------------------------------------------------------------

constexpr uint16_t kCheckpointVersion = 1;

// Canonical model description embedded in checkpoints; its FNV-1a digest is
// the fingerprint that guards against shape/config drift.
inline std::string canonical_config_text(VariableSet variables, const EncoderConfig& enc,
                                         const TransformerConfig& tr,
                                         const NormalizationStats& stats) {
  std::string out = "WMTKCONFIG 1\n";
  out += "variables " + variable_set_name(variables) + "\n";
  out += "encoder.in_channels " + std::to_string(enc.in_channels) + "\n";
  out += "encoder.kernel_size " + std::to_string(enc.kernel_size) + "\n";
  out += "transformer.d_model " + std::to_string(tr.d_model) + "\n";
  out += "transformer.n_blocks " + std::to_string(tr.n_blocks) + "\n";
  out += "transformer.n_heads " + std::to_string(tr.n_heads) + "\n";
  out += "transformer.ffn_dim " + std::to_string(tr.ffn_dim) + "\n";
  out += "transformer.horizon " + std::to_string(tr.horizon) + "\n";
  out += "transformer.use_pe " + std::to_string(tr.use_positional_encoding ? 1 : 0) + "\n";
  out += serialize_stats(stats);
  return out;
}

struct CheckpointData {
  VariableSet variables = VariableSet::wind;
  EncoderConfig encoder;
  TransformerConfig transformer;
  NormalizationStats stats;
  std::string config_text;

  struct Entry {
    std::string name;
    bool trainable;
    std::vector<int64_t> shape;
    std::vector<float> values;
  };
  std::vector<Entry> entries;

  bool has_optimizer = false;
  int64_t opt_step = 0;
  std::vector<std::vector<float>> opt_m, opt_v;  // aligned with trainable entries
};

template <typename T>
std::string serialize_checkpoint(const ForecastModel<T>& model, VariableSet variables,
                                 const NormalizationStats& stats,
                                 const AdamState<T>* opt = nullptr) {
  const std::string config = canonical_config_text(variables, model.enc_cfg, model.tr_cfg, stats);
  std::string out = "WMTK";
  put_u16(out, kCheckpointVersion);
  put_u64(out, fnv1a64(config));
  put_u32(out, static_cast<uint32_t>(config.size()));
  out += config;
  put_u32(out, static_cast<uint32_t>(model.params.entries().size()));
  for (const auto& e : model.params.entries()) {
    put_u16(out, static_cast<uint16_t>(e.name.size()));
    out += e.name;
    out.push_back(e.trainable ? 1 : 0);
    out.push_back(static_cast<char>(e.tensor->shape.size()));
    for (int64_t ext : e.tensor->shape) put_u32(out, static_cast<uint32_t>(ext));
    for (T v : e.tensor->data) put_f32(out, static_cast<float>(v));
  }
  out.push_back(opt ? 1 : 0);
  if (opt) {
    put_u64(out, static_cast<uint64_t>(opt->step));
    for (size_t slot = 0; slot < opt->m.size(); ++slot) {
      for (T v : opt->m[slot]) put_f32(out, static_cast<float>(v));
      for (T v : opt->v[slot]) put_f32(out, static_cast<float>(v));
    }
  }
  return out;
}

inline CheckpointData parse_checkpoint(const std::string& bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.raw(4) != "WMTK") throw FormatError(what + ": bad magic (not a checkpoint)");
  const uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  const uint64_t stored_digest = r.u64();
  const uint32_t config_len = r.u32();
  CheckpointData ck;
  ck.config_text = r.raw(config_len);
  if (fnv1a64(ck.config_text) != stored_digest) {
    throw CorruptionError(what + ": config fingerprint mismatch (stored " + hex64(stored_digest) +
                          ", recomputed " + hex64(fnv1a64(ck.config_text)) + ")");
  }

  // Parse the canonical config text.
  {
    std::map<std::string, std::string> kv;
    std::string stats_text;
    size_t pos = 0;
    bool first_line = true;
    while (pos < ck.config_text.size()) {
      size_t end = ck.config_text.find('\n', pos);
      if (end == std::string::npos) end = ck.config_text.size();
      const std::string line = ck.config_text.substr(pos, end - pos);
      pos = end + 1;
      if (first_line) {
        if (line != "WMTKCONFIG 1") throw FormatError(what + ": bad embedded config header");
        first_line = false;
        continue;
      }
      if (line.rfind(std::string(kStatsMagic), 0) == 0 || !stats_text.empty()) {
        stats_text += line + "\n";
        continue;
      }
      const size_t sp = line.find(' ');
      if (sp == std::string::npos) throw FormatError(what + ": malformed config line");
      kv[line.substr(0, sp)] = line.substr(sp + 1);
    }
    auto need = [&](const std::string& key) {
      auto it = kv.find(key);
      if (it == kv.end()) throw FormatError(what + ": config missing key " + key);
      return it->second;
    };
    const std::string vs = need("variables");
    if (vs == "wind") {
      ck.variables = VariableSet::wind;
    } else if (vs == "solar") {
      ck.variables = VariableSet::solar;
    } else {
      throw FormatError(what + ": unknown variable set " + vs);
    }
    ck.encoder.in_channels = std::stoll(need("encoder.in_channels"));
    ck.encoder.kernel_size = std::stoll(need("encoder.kernel_size"));
    ck.transformer.d_model = std::stoll(need("transformer.d_model"));
    ck.transformer.n_blocks = std::stoll(need("transformer.n_blocks"));
    ck.transformer.n_heads = std::stoll(need("transformer.n_heads"));
    ck.transformer.ffn_dim = std::stoll(need("transformer.ffn_dim"));
    ck.transformer.horizon = std::stoll(need("transformer.horizon"));
    ck.transformer.use_positional_encoding = need("transformer.use_pe") == "1";
    ck.stats = parse_stats(stats_text);
  }

  const uint32_t n_entries = r.u32();
  for (uint32_t i = 0; i < n_entries; ++i) {
    CheckpointData::Entry e;
    const uint16_t name_len = r.u16();
    e.name = r.raw(name_len);
    e.trainable = r.raw(1)[0] != 0;
    const uint8_t ndim = static_cast<uint8_t>(r.raw(1)[0]);
    if (ndim > kMaxRank) throw CorruptionError(what + ": parameter rank exceeds limit");
    int64_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      e.shape.push_back(r.u32());
      numel *= e.shape.back();
    }
    if (numel < 1 || numel > (int64_t(1) << 32)) {
      throw CorruptionError(what + ": implausible parameter size");
    }
    e.values.resize(static_cast<size_t>(numel));
    r.read_into(e.values.data(), static_cast<size_t>(numel) * 4);
    ck.entries.push_back(std::move(e));
  }
  ck.has_optimizer = r.raw(1)[0] != 0;
  if (ck.has_optimizer) {
    ck.opt_step = static_cast<int64_t>(r.u64());
    for (const auto& e : ck.entries) {
      if (!e.trainable) continue;
      std::vector<float> m(e.values.size()), v(e.values.size());
      r.read_into(m.data(), m.size() * 4);
      r.read_into(v.data(), v.size() * 4);
      ck.opt_m.push_back(std::move(m));
      ck.opt_v.push_back(std::move(v));
    }
  }
  if (!r.at_end()) throw CorruptionError(what + ": trailing bytes after checkpoint payload");
  return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ForecastModel<T>& model,
                     VariableSet variables, const NormalizationStats& stats,
                     const AdamState<T>* opt = nullptr) {
  atomic_write_file(path, serialize_checkpoint(model, variables, stats, opt));
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.filename().string());
}

// Builds a model from checkpoint configs and copies every named tensor in.
template <typename T>
ForecastModel<T> restore_model(const CheckpointData& ck, AdamState<T>* opt = nullptr) {
  ForecastModel<T> model(ck.encoder, ck.transformer, /*seed=*/0);
  if (ck.entries.size() != model.params.entries().size()) {
    throw CorruptionError("checkpoint parameter table has " + std::to_string(ck.entries.size()) +
                          " entries, model expects " +
                          std::to_string(model.params.entries().size()));
  }
  for (const auto& e : ck.entries) {
    TensorPtr<T> t = model.params.find(e.name);
    if (!t) throw CorruptionError("checkpoint names unknown parameter '" + e.name + "'");
    if (t->shape != e.shape) {
      throw CorruptionError("checkpoint parameter '" + e.name + "' has mismatched shape");
    }
    for (size_t i = 0; i < e.values.size(); ++i) t->data[i] = static_cast<T>(e.values[i]);
  }
  if (opt) {
    opt->init(model.params);
    if (ck.has_optimizer) {
      opt->step = ck.opt_step;
      for (size_t s = 0; s < ck.opt_m.size(); ++s) {
        for (size_t i = 0; i < ck.opt_m[s].size(); ++i) {
          opt->m[s][i] = static_cast<T>(ck.opt_m[s][i]);
          opt->v[s][i] = static_cast<T>(ck.opt_v[s][i]);
        }
      }
    }
  }
  return model;
}

}  // namespace wmt
