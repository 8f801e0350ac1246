#pragma once

// Seeded synthetic weather generator with a known field-to-power oracle.
//
// Each channel is a sum of random Fourier modes (wavelengths no shorter than
// the configured length scale, plus one spatially constant "regional" mode)
// whose amplitudes follow an AR(1) process with coefficient 0.9. Innovations
// come from a counter-based hash of (seed, channel, mode, hour), and each
// amplitude is materialized from a truncated moving-average window, so any
// sub-range of hours can be generated independently and still agree bit for
// bit with any other chunking of the same timeline.
//
// The oracle maps fields to capacity fractions through spatial means only —
// exactly the statistic global average pooling exposes — so the task is
// learnable at desk scale by construction, while the cube law keeps it
// non-linear.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wmt/data.hpp"
#include "wmt/error.hpp"
#include "wmt/timeutil.hpp"
#include "wmt/util.hpp"

namespace wmt {

enum class VariableSet { wind, solar };

inline std::string variable_set_name(VariableSet v) {
  return v == VariableSet::wind ? "wind" : "solar";
}

struct SyntheticConfig {
  uint64_t seed = 0;
  int64_t days = 300;  // split 80/10/10 across train/validation/test blocks
  int64_t height = 16, width = 16;
  VariableSet variables = VariableSet::wind;
  double length_scale = 5.0;       // minimum spatial wavelength, pixels
  double diurnal_amplitude = 900;  // peak clear-sky radiation scale, W/m2

  void validate() const {
    if (height < 4 || width < 4) throw ConfigError("synthetic: grid must be at least 4x4");
    if (days < 1) throw ConfigError("synthetic: days must be >= 1");
    if (length_scale <= 1.0) throw ConfigError("synthetic: length scale must exceed 1 pixel");
    if (diurnal_amplitude <= 0) throw ConfigError("synthetic: diurnal amplitude must be positive");
  }
};

constexpr double kArCoefficient = 0.9;
constexpr int kArWindow = 200;  // rho^200 ~ 7e-10: window truncation is below f32 noise
constexpr double kRatedWindSpeed = 12.0;     // m/s
constexpr double kReferenceIrradiance = 1000.0;  // W/m2

namespace detail {

// Standard normal from a counter-based hash: no sequential state, so the
// value at (seed, channel, mode, hour) never depends on evaluation order.
inline double counter_normal(uint64_t seed, uint64_t channel, uint64_t mode, uint64_t hour) {
  const uint64_t key = mix_seed(seed, channel, mode, hour);
  const double u1 = std::max(
      static_cast<double>(splitmix64(key ^ 0x9e3779b97f4a7c15ULL) >> 11) * 0x1.0p-53, 1e-300);
  const double u2 =
      static_cast<double>(splitmix64(key + 0x9e3779b97f4a7c15ULL) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Truncated moving-average form of the stationary AR(1) amplitude.
inline double ar1_amplitude(uint64_t seed, uint64_t channel, uint64_t mode, uint64_t hour) {
  const double s = std::sqrt(1.0 - kArCoefficient * kArCoefficient);
  double acc = 0.0;
  double w = s;
  for (int k = 0; k < kArWindow; ++k) {
    acc += w * counter_normal(seed, channel, mode, hour - static_cast<uint64_t>(k));
    w *= kArCoefficient;
  }
  return acc;
}

}  // namespace detail

// Diurnal half-sine: zero outside (6, 18), peaking at local noon.
inline double diurnal_factor(int hour_of_day_utc) {
  if (hour_of_day_utc <= 6 || hour_of_day_utc >= 18) return 0.0;
  return std::sin(3.14159265358979323846 * (hour_of_day_utc - 6) / 12.0);
}

class FieldSynthesizer {
 public:
  explicit FieldSynthesizer(const SyntheticConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    struct ChannelSpec {
      const char* name;
      double base, dc_sigma, spatial_sigma;
    };
    std::vector<ChannelSpec> specs;
    if (cfg_.variables == VariableSet::wind) {
      specs = {{"u10", 7.0, 2.4, 1.6}, {"v10", 0.0, 2.4, 1.6}};
    } else {
      // Radiation is synthesized in relative units and scaled by the diurnal
      // factor times the configured amplitude.
      specs = {{"radiation", 0.75, 0.22, 0.12},
               {"cloud", 0.45, 0.28, 0.18},
               {"temperature", 293.0, 5.0, 2.0}};
    }
    const double kmax = 2.0 * 3.14159265358979323846 / cfg_.length_scale;
    const int n_spatial = 12;
    for (size_t c = 0; c < specs.size(); ++c) {
      Channel ch;
      ch.name = specs[c].name;
      ch.base = specs[c].base;
      // Mode 0 is the spatially constant regional mode.
      ch.modes.push_back(Mode{specs[c].dc_sigma,
                              std::vector<double>(static_cast<size_t>(cfg_.height * cfg_.width), 1.0)});
      Rng rng(mix_seed(cfg_.seed, 0x5eedF1e1dULL, c));
      const double per_mode = specs[c].spatial_sigma / std::sqrt(static_cast<double>(n_spatial));
      for (int m = 0; m < n_spatial; ++m) {
        const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        // Square-law bias toward long wavelengths keeps fields smooth.
        const double mag = kmax * std::pow(rng.uniform(), 2.0);
        const double kx = mag * std::cos(angle), ky = mag * std::sin(angle);
        const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        Mode mode;
        mode.sigma = per_mode;
        mode.pattern.resize(static_cast<size_t>(cfg_.height * cfg_.width));
        for (int64_t y = 0; y < cfg_.height; ++y) {
          for (int64_t x = 0; x < cfg_.width; ++x) {
            mode.pattern[static_cast<size_t>(y * cfg_.width + x)] =
                std::cos(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
          }
        }
        ch.modes.push_back(std::move(mode));
      }
      channels_.push_back(std::move(ch));
    }
  }

  // Any [start_hour, start_hour + hours) chunk of the global timeline.
  GridSeries generate(int64_t start_hour, int64_t hours) const {
    if (hours < 1) throw ConfigError("synthetic: chunk must span at least one hour");
    GridSeries g;
    g.start_hour = start_hour;
    g.frames = hours;
    g.channels = static_cast<int64_t>(channels_.size());
    g.height = cfg_.height;
    g.width = cfg_.width;
    for (const auto& ch : channels_) g.channel_names.push_back(ch.name);
    const int64_t plane = cfg_.height * cfg_.width;
    g.values.resize(static_cast<size_t>(hours * g.channels * plane));
    std::vector<double> buf(static_cast<size_t>(plane));
    for (int64_t t = 0; t < hours; ++t) {
      const uint64_t hour = static_cast<uint64_t>(start_hour + t);
      for (size_t c = 0; c < channels_.size(); ++c) {
        const Channel& ch = channels_[c];
        std::fill(buf.begin(), buf.end(), ch.base);
        for (size_t m = 0; m < ch.modes.size(); ++m) {
          const double a =
              ch.modes[m].sigma * detail::ar1_amplitude(cfg_.seed, c, m, hour);
          const double* p = ch.modes[m].pattern.data();
          for (int64_t i = 0; i < plane; ++i) buf[static_cast<size_t>(i)] += a * p[i];
        }
        if (cfg_.variables == VariableSet::solar) {
          if (ch.name == "radiation") {
            const double d = diurnal_factor(hour_of_day(hour)) * cfg_.diurnal_amplitude;
            for (auto& v : buf) v = d * std::max(0.0, v);
          } else if (ch.name == "cloud") {
            for (auto& v : buf) v = std::min(1.0, std::max(0.0, v));
          }
        }
        float* dst = g.values.data() + (t * g.channels + static_cast<int64_t>(c)) * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(buf[static_cast<size_t>(i)]);
      }
    }
    return g;
  }

 private:
  struct Mode {
    double sigma;
    std::vector<double> pattern;  // H*W, unit amplitude
  };
  struct Channel {
    std::string name;
    double base;
    std::vector<Mode> modes;
  };
  SyntheticConfig cfg_;
  std::vector<Channel> channels_;
};

// ---------------------------------------------------------------------------
// Power oracles (capacity fractions from spatial means)
// ---------------------------------------------------------------------------

inline double oracle_wind_hour(const float* u, const float* v, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    s += std::sqrt(static_cast<double>(u[i]) * u[i] + static_cast<double>(v[i]) * v[i]);
  }
  const double mean_speed = s / static_cast<double>(n);
  const double f = std::pow(mean_speed / kRatedWindSpeed, 3.0);
  return std::min(1.0, std::max(0.0, f));
}

inline double oracle_solar_hour(const float* rad, const float* cloud, const float* temp,
                                int64_t n) {
  double r = 0.0, c = 0.0, t = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    r += rad[i];
    c += cloud[i];
    t += temp[i];
  }
  const double nn = static_cast<double>(n);
  const double rm = r / nn, cm = c / nn, tm = t / nn;
  const double f = (rm / kReferenceIrradiance) * (1.0 - 0.75 * cm * cm * cm) *
                   (1.0 - 0.004 * std::max(0.0, tm - 298.15));
  return std::min(1.0, std::max(0.0, f));
}

inline std::vector<double> oracle_wind_power(const GridSeries& g) {
  if (g.channel_names != std::vector<std::string>{"u10", "v10"}) {
    throw ConfigError("wind oracle expects channels u10, v10");
  }
  const int64_t plane = g.height * g.width;
  std::vector<double> out(static_cast<size_t>(g.frames));
  for (int64_t t = 0; t < g.frames; ++t) {
    const float* f = g.frame(t);
    out[static_cast<size_t>(t)] = oracle_wind_hour(f, f + plane, plane);
  }
  return out;
}

inline std::vector<double> oracle_solar_power(const GridSeries& g) {
  if (g.channel_names != std::vector<std::string>{"radiation", "cloud", "temperature"}) {
    throw ConfigError("solar oracle expects channels radiation, cloud, temperature");
  }
  const int64_t plane = g.height * g.width;
  std::vector<double> out(static_cast<size_t>(g.frames));
  for (int64_t t = 0; t < g.frames; ++t) {
    const float* f = g.frame(t);
    out[static_cast<size_t>(t)] = oracle_solar_hour(f, f + plane, f + 2 * plane, plane);
  }
  return out;
}

inline std::vector<double> oracle_power(const GridSeries& g, VariableSet v) {
  return v == VariableSet::wind ? oracle_wind_power(g) : oracle_solar_power(g);
}

// ---------------------------------------------------------------------------
// Full dataset emission (WGRD + targets.csv + capacity.csv)
// ---------------------------------------------------------------------------

struct GeneratedDataset {
  std::vector<std::filesystem::path> weather_files;
  std::filesystem::path targets_csv;
  std::filesystem::path capacity_csv;
  int64_t train_days = 0, validation_days = 0, test_days = 0;
};

// Day counts per split: 80/10/10 by rounding, remainder to test. The train
// block ends on 2022-12-31, validation starts 2023-01-01 and test starts
// 2024-01-01, so year-based splitting is exercised. Each block carries one
// extra calendar day of hours because a window starting at day d needs hours
// from day d+1. Train and validation are calendar-adjacent, so the train
// block's last start day (2022-12-31) completes across the boundary and is
// assigned to train by its start year; the validation and test blocks each
// end with one incomplete start day that sample assembly drops and logs.
inline GeneratedDataset generate_dataset(const SyntheticConfig& cfg,
                                         const std::filesystem::path& out_dir) {
  cfg.validate();
  const int64_t d_train = static_cast<int64_t>(std::llround(0.8 * static_cast<double>(cfg.days)));
  const int64_t d_val = static_cast<int64_t>(std::llround(0.1 * static_cast<double>(cfg.days)));
  const int64_t d_test = cfg.days - d_train - d_val;
  if (d_train < 1 || d_val < 1 || d_test < 1) {
    throw ConfigError("synthetic: need at least ~10 days so every split gets data");
  }
  if (d_val + 1 > 365 || d_test + 1 > 365) {
    throw ConfigError("synthetic: validation/test blocks must fit within their year");
  }
  const int64_t train_last_day = days_from_civil(2022, 12, 31);
  const int64_t train_first_day = train_last_day - d_train;  // d_train + 1 days inclusive
  if (train_first_day < days_from_civil(kTrainYearFirst, 1, 1)) {
    throw ConfigError("synthetic: train block would start before 2017; reduce --days");
  }

  FieldSynthesizer synth(cfg);

  // Capacity anchors on each January 1 with mild year-over-year growth.
  std::vector<std::pair<int64_t, double>> anchors;
  std::string cap_csv = "timestamp_utc,value_mw\n";
  for (int year = kTrainYearFirst; year <= kTestYear + 1; ++year) {
    const int64_t hour = static_cast<int64_t>(epoch_hour(year, 1, 1));
    const double mw = 1000.0 + 60.0 * (year - kTrainYearFirst);
    anchors.emplace_back(hour, mw);
    cap_csv += format_iso8601(static_cast<uint64_t>(hour)) + "," + fmt_g(mw, 17) + "\n";
  }
  const CapacitySeries capacity = interpolate_capacity(anchors);

  struct Block {
    int64_t first_day, days_with_extra;
  };
  const std::vector<Block> blocks = {
      {train_first_day, d_train + 1},
      {days_from_civil(kValidationYear, 1, 1), d_val + 1},
      {days_from_civil(kTestYear, 1, 1), d_test + 1},
  };

  GeneratedDataset out;
  out.train_days = d_train;
  out.validation_days = d_val;
  out.test_days = d_test;
  std::filesystem::create_directories(out_dir);
  std::string targets_csv = "timestamp_utc,value_mw\n";
  for (const Block& blk : blocks) {
    int64_t day = blk.first_day;
    int64_t remaining = blk.days_with_extra;
    while (remaining > 0) {
      // Slice the block at year boundaries so each file covers one year.
      const int year = year_of(static_cast<uint64_t>(day * 24));
      const int64_t year_end_day = days_from_civil(year, 12, 31);
      const int64_t take = std::min(remaining, year_end_day - day + 1);
      const GridSeries g = synth.generate(day * 24, take * 24);
      const auto path = out_dir / ("weather_" + std::to_string(year) + ".wgrd");
      write_grid_file(path, g);
      out.weather_files.push_back(path);
      const std::vector<double> frac = oracle_power(g, cfg.variables);
      for (int64_t t = 0; t < g.frames; ++t) {
        const int64_t hour = g.hour_of_frame(t);
        const double mw = frac[static_cast<size_t>(t)] * capacity.at(hour);
        targets_csv += format_iso8601(static_cast<uint64_t>(hour)) + "," + fmt_g(mw, 17) + "\n";
      }
      day += take;
      remaining -= take;
    }
  }
  out.targets_csv = out_dir / "targets.csv";
  out.capacity_csv = out_dir / "capacity.csv";
  atomic_write_file(out.targets_csv, targets_csv);
  atomic_write_file(out.capacity_csv, cap_csv);
  return out;
}

}  // namespace wmt
