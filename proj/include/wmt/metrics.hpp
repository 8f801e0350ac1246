#pragma once

// Evaluation statistics for hourly power forecasts: RMSE/MAE/R²/CVRMSE/NRMSE,
// per-lead-hour error profiles, climatology and persistence baselines, and a
// side-by-side comparison report with CSV emission. All metrics operate on
// series in MW (after capacity denormalization).

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wmt/data.hpp"
#include "wmt/error.hpp"
#include "wmt/timeutil.hpp"
#include "wmt/util.hpp"

namespace wmt {

namespace detail {

inline void require_same_length(const std::vector<double>& pred, const std::vector<double>& actual,
                                const char* what) {
  if (pred.size() != actual.size()) {
    throw DimensionError(std::string(what) + ": series length mismatch (" +
                         std::to_string(pred.size()) + " vs " + std::to_string(actual.size()) +
                         ")");
  }
  if (pred.empty()) throw DimensionError(std::string(what) + ": empty series");
}

}  // namespace detail

inline double rmse(const std::vector<double>& pred, const std::vector<double>& actual) {
  detail::require_same_length(pred, actual, "rmse");
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& actual) {
  detail::require_same_length(pred, actual, "mae");
  double sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) sum += std::fabs(pred[i] - actual[i]);
  return sum / static_cast<double>(pred.size());
}

// 1 - SS_res/SS_tot with SS_tot centered on the mean of `actual` over the
// evaluation set. Negative values are meaningful (worse than the mean
// predictor) and are returned unchanged.
inline double r_squared(const std::vector<double>& pred, const std::vector<double>& actual) {
  detail::require_same_length(pred, actual, "r_squared");
  double mean = 0.0;
  for (double a : actual) mean += a;
  mean /= static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t i = 0; i < actual.size(); ++i) {
    const double r = pred[i] - actual[i];
    const double t = actual[i] - mean;
    ss_res += r * r;
    ss_tot += t * t;
  }
  if (ss_tot <= 0.0) throw DegenerateError("r_squared: actuals have zero variance");
  return 1.0 - ss_res / ss_tot;
}

inline double cvrmse(const std::vector<double>& pred, const std::vector<double>& actual) {
  detail::require_same_length(pred, actual, "cvrmse");
  double mean = 0.0;
  for (double a : actual) mean += a;
  mean /= static_cast<double>(actual.size());
  if (mean <= 0.0) throw DegenerateError("cvrmse: mean of actuals must be positive");
  return 100.0 * rmse(pred, actual) / mean;
}

inline double nrmse(const std::vector<double>& pred, const std::vector<double>& actual) {
  detail::require_same_length(pred, actual, "nrmse");
  double lo = actual[0], hi = actual[0];
  for (double a : actual) {
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  if (hi <= lo) throw DegenerateError("nrmse: actuals have zero range");
  return 100.0 * rmse(pred, actual) / (hi - lo);
}

// Relative error reduction for lower-is-better metrics.
inline double improvement_pct(double model_metric, double baseline_metric) {
  if (baseline_metric <= 0.0) {
    throw DegenerateError("improvement_pct: baseline metric must be positive");
  }
  return 100.0 * (baseline_metric - model_metric) / baseline_metric;
}

// ---------------------------------------------------------------------------
// Per-lead-hour profiles
// ---------------------------------------------------------------------------

struct HorizonProfile {
  std::vector<double> mae, rmse;  // length = horizon; 0 where count == 0
  std::vector<int64_t> count;
};

// Aggregates errors at each lead hour across samples. `valid` (same shape as
// the series, or empty for all-valid) masks out cells without a defined
// baseline reference so model and baseline stay comparable.
inline HorizonProfile horizon_profile(const std::vector<std::vector<double>>& pred,
                                      const std::vector<std::vector<double>>& actual,
                                      int64_t horizon,
                                      const std::vector<std::vector<uint8_t>>& valid = {}) {
  if (pred.size() != actual.size()) {
    throw DimensionError("horizon_profile: sample count mismatch");
  }
  HorizonProfile p;
  p.mae.assign(static_cast<size_t>(horizon), 0.0);
  p.rmse.assign(static_cast<size_t>(horizon), 0.0);
  p.count.assign(static_cast<size_t>(horizon), 0);
  for (size_t s = 0; s < pred.size(); ++s) {
    if (static_cast<int64_t>(pred[s].size()) != horizon ||
        static_cast<int64_t>(actual[s].size()) != horizon) {
      throw DimensionError("horizon_profile: sample " + std::to_string(s) +
                           " does not have horizon length " + std::to_string(horizon));
    }
    for (int64_t h = 0; h < horizon; ++h) {
      if (!valid.empty() && !valid[s][static_cast<size_t>(h)]) continue;
      const double d = pred[s][static_cast<size_t>(h)] - actual[s][static_cast<size_t>(h)];
      p.mae[static_cast<size_t>(h)] += std::fabs(d);
      p.rmse[static_cast<size_t>(h)] += d * d;
      ++p.count[static_cast<size_t>(h)];
    }
  }
  for (int64_t h = 0; h < horizon; ++h) {
    const auto n = static_cast<double>(p.count[static_cast<size_t>(h)]);
    if (n > 0) {
      p.mae[static_cast<size_t>(h)] /= n;
      p.rmse[static_cast<size_t>(h)] = std::sqrt(p.rmse[static_cast<size_t>(h)] / n);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TargetSummary {
  double min = 0, max = 0, mean = 0, stddev = 0;
};

inline TargetSummary summarize(const std::vector<double>& values) {
  if (values.empty()) throw DimensionError("summarize: empty series");
  TargetSummary s;
  s.min = s.max = values[0];
  double sum = 0.0, sum2 = 0.0;
  for (double v : values) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(values.size());
  s.mean = sum / n;
  s.stddev = std::sqrt(std::max(0.0, sum2 / n - s.mean * s.mean));
  return s;
}

struct MetricsReport {
  double rmse_mw = 0, mae_mw = 0, r2 = 0, cvrmse_pct = 0, nrmse_pct = 0;
  std::vector<double> horizon_mae, horizon_rmse;
  std::vector<int64_t> horizon_count;
  int64_t sample_count = 0;
  TargetSummary target;
};

// Evaluation inputs: per-sample hourly sequences in MW, all of `horizon`
// length, plus an optional validity mask (empty = every cell valid).
struct AlignedEval {
  int64_t horizon = 0;
  std::vector<uint64_t> start_hours;
  std::vector<std::vector<double>> pred, actual;
  std::vector<std::vector<uint8_t>> valid;
};

inline MetricsReport compute_report(const std::vector<std::vector<double>>& pred,
                                    const std::vector<std::vector<double>>& actual,
                                    int64_t horizon,
                                    const std::vector<std::vector<uint8_t>>& valid = {}) {
  std::vector<double> flat_pred, flat_actual;
  for (size_t s = 0; s < pred.size(); ++s) {
    if (static_cast<int64_t>(pred[s].size()) != horizon ||
        static_cast<int64_t>(actual[s].size()) != horizon) {
      throw DimensionError("report: sample " + std::to_string(s) + " does not have horizon length");
    }
    for (int64_t h = 0; h < horizon; ++h) {
      if (!valid.empty() && !valid[s][static_cast<size_t>(h)]) continue;
      flat_pred.push_back(pred[s][static_cast<size_t>(h)]);
      flat_actual.push_back(actual[s][static_cast<size_t>(h)]);
    }
  }
  if (flat_pred.empty()) throw DegenerateError("report: no valid evaluation cells");
  MetricsReport r;
  r.rmse_mw = rmse(flat_pred, flat_actual);
  r.mae_mw = mae(flat_pred, flat_actual);
  r.r2 = r_squared(flat_pred, flat_actual);
  r.cvrmse_pct = cvrmse(flat_pred, flat_actual);
  r.nrmse_pct = nrmse(flat_pred, flat_actual);
  HorizonProfile p = horizon_profile(pred, actual, horizon, valid);
  r.horizon_mae = std::move(p.mae);
  r.horizon_rmse = std::move(p.rmse);
  r.horizon_count = std::move(p.count);
  r.sample_count = static_cast<int64_t>(pred.size());
  r.target = summarize(flat_actual);
  return r;
}

struct CompareReport {
  MetricsReport model, baseline;
  // Improvement column of the five-row report; R² uses the higher-is-better
  // sign convention and is "-" when the baseline R² is not positive.
  std::string improvement_rmse, improvement_mae, improvement_r2, improvement_cvrmse,
      improvement_nrmse;
};

inline CompareReport compare_report(const std::vector<std::vector<double>>& model_preds,
                                    const std::vector<std::vector<double>>& baseline_preds,
                                    const std::vector<std::vector<double>>& actuals,
                                    int64_t horizon,
                                    const std::vector<std::vector<uint8_t>>& valid = {}) {
  if (model_preds.size() != actuals.size() || baseline_preds.size() != actuals.size()) {
    throw DimensionError("compare_report: sample count mismatch across series");
  }
  CompareReport c;
  c.model = compute_report(model_preds, actuals, horizon, valid);
  c.baseline = compute_report(baseline_preds, actuals, horizon, valid);
  auto pct = [](double v) { return fmt_g(v, 6); };
  c.improvement_rmse = pct(improvement_pct(c.model.rmse_mw, c.baseline.rmse_mw));
  c.improvement_mae = pct(improvement_pct(c.model.mae_mw, c.baseline.mae_mw));
  c.improvement_cvrmse = pct(improvement_pct(c.model.cvrmse_pct, c.baseline.cvrmse_pct));
  c.improvement_nrmse = pct(improvement_pct(c.model.nrmse_pct, c.baseline.nrmse_pct));
  c.improvement_r2 = c.baseline.r2 > 0
                         ? pct(100.0 * (c.model.r2 - c.baseline.r2) / c.baseline.r2)
                         : "-";
  return c;
}

inline std::string report_csv(const CompareReport& c) {
  auto g = [](double v) { return fmt_g(v, 10); };
  std::string out = "metric,model,baseline,improvement_pct\n";
  out += "rmse_mw," + g(c.model.rmse_mw) + "," + g(c.baseline.rmse_mw) + "," +
         c.improvement_rmse + "\n";
  out += "mae_mw," + g(c.model.mae_mw) + "," + g(c.baseline.mae_mw) + "," + c.improvement_mae +
         "\n";
  out += "r2," + g(c.model.r2) + "," + g(c.baseline.r2) + "," + c.improvement_r2 + "\n";
  out += "cvrmse_pct," + g(c.model.cvrmse_pct) + "," + g(c.baseline.cvrmse_pct) + "," +
         c.improvement_cvrmse + "\n";
  out += "nrmse_pct," + g(c.model.nrmse_pct) + "," + g(c.baseline.nrmse_pct) + "," +
         c.improvement_nrmse + "\n";
  return out;
}

inline std::string horizon_csv(const CompareReport& c) {
  std::string out = "lead_hour,model_mae,baseline_mae,model_rmse,baseline_rmse\n";
  for (size_t h = 0; h < c.model.horizon_mae.size(); ++h) {
    out += std::to_string(h + 1) + "," + fmt_g(c.model.horizon_mae[h], 10) + "," +
           fmt_g(c.baseline.horizon_mae[h], 10) + "," + fmt_g(c.model.horizon_rmse[h], 10) + "," +
           fmt_g(c.baseline.horizon_rmse[h], 10) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

// Per hour-of-day mean production over the training period only.
struct ClimatologyTable {
  std::array<double, 24> mean_mw{};
};

inline ClimatologyTable build_climatology(const HourlySeries& production, int64_t period_start,
                                          int64_t period_end) {
  std::array<double, 24> sum{};
  std::array<int64_t, 24> count{};
  for (size_t i = 0; i < production.size(); ++i) {
    const int64_t hour = production.hours[i];
    if (hour < period_start || hour >= period_end) continue;
    const int hod = hour_of_day(static_cast<uint64_t>(hour));
    sum[hod] += production.values[i];
    ++count[hod];
  }
  ClimatologyTable t;
  for (int h = 0; h < 24; ++h) {
    if (count[h] == 0) {
      throw ConfigError("climatology: no training data for hour-of-day " + std::to_string(h));
    }
    t.mean_mw[static_cast<size_t>(h)] = sum[h] / static_cast<double>(count[h]);
  }
  return t;
}

// Climatology prediction for each (sample, lead hour) cell.
inline std::vector<std::vector<double>> climatology_forecast(const ClimatologyTable& table,
                                                             const std::vector<uint64_t>& starts,
                                                             int64_t horizon) {
  std::vector<std::vector<double>> out(starts.size());
  for (size_t s = 0; s < starts.size(); ++s) {
    out[s].resize(static_cast<size_t>(horizon));
    for (int64_t h = 0; h < horizon; ++h) {
      out[s][static_cast<size_t>(h)] = table.mean_mw[hour_of_day(starts[s] + static_cast<uint64_t>(h))];
    }
  }
  return out;
}

// Persistence baseline: the measured production 24 hours earlier. Cells whose
// reference hour is absent from the series are marked invalid (and must then
// be excluded from both model and baseline scoring).
struct PersistenceForecast {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<uint8_t>> valid;
  int64_t missing_cells = 0;
};

inline PersistenceForecast persistence_forecast(const HourlySeries& production,
                                                const std::vector<uint64_t>& starts,
                                                int64_t horizon) {
  PersistenceForecast out;
  out.values.resize(starts.size());
  out.valid.resize(starts.size());
  for (size_t s = 0; s < starts.size(); ++s) {
    out.values[s].assign(static_cast<size_t>(horizon), 0.0);
    out.valid[s].assign(static_cast<size_t>(horizon), 0);
    for (int64_t h = 0; h < horizon; ++h) {
      const uint64_t t = starts[s] + static_cast<uint64_t>(h);
      if (t >= 24 && production.has(t - 24)) {
        out.values[s][static_cast<size_t>(h)] = production.at(t - 24);
        out.valid[s][static_cast<size_t>(h)] = 1;
      } else {
        ++out.missing_cells;
      }
    }
  }
  return out;
}

// External baseline from an imported forecast series; a missing timestamp is
// a hard alignment failure, reported by its first occurrence.
inline std::vector<std::vector<double>> baseline_from_series(const HourlySeries& series,
                                                             const std::vector<uint64_t>& starts,
                                                             int64_t horizon) {
  std::vector<std::vector<double>> out(starts.size());
  for (size_t s = 0; s < starts.size(); ++s) {
    out[s].resize(static_cast<size_t>(horizon));
    for (int64_t h = 0; h < horizon; ++h) {
      const uint64_t t = starts[s] + static_cast<uint64_t>(h);
      if (!series.has(t)) {
        throw DataError("baseline series is missing timestamp " + format_iso8601(t));
      }
      out[s][static_cast<size_t>(h)] = series.at(t);
    }
  }
  return out;
}

// Restricts scoring to a subset of lead hours (e.g. day-ahead vs intraday
// segments); combines with an existing validity mask.
inline std::vector<std::vector<uint8_t>> apply_lead_mask(
    const std::vector<std::vector<uint8_t>>& valid, const std::vector<uint8_t>& lead_mask,
    size_t n_samples, int64_t horizon) {
  if (static_cast<int64_t>(lead_mask.size()) != horizon) {
    throw DimensionError("lead-hour mask length must equal horizon");
  }
  std::vector<std::vector<uint8_t>> out(n_samples);
  for (size_t s = 0; s < n_samples; ++s) {
    out[s].resize(static_cast<size_t>(horizon));
    for (int64_t h = 0; h < horizon; ++h) {
      const uint8_t base = valid.empty() ? 1 : valid[s][static_cast<size_t>(h)];
      out[s][static_cast<size_t>(h)] = static_cast<uint8_t>(base && lead_mask[static_cast<size_t>(h)]);
    }
  }
  return out;
}

}  // namespace wmt
