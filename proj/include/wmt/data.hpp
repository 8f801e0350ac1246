#pragma once

// Data pipeline: gridded weather ingestion (WGRD binary format), power and
// capacity series (CSV), training-year normalization statistics, 45-hour
// sample assembly, and leak-free year-based splits.
//
// Timestamps are UTC epoch hours throughout. Weather grids live in memory as
// T x C x H x W float arrays with an implicit hourly time axis anchored at
// the first frame's hour.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "wmt/error.hpp"
#include "wmt/timeutil.hpp"
#include "wmt/util.hpp"

namespace wmt {

// ---------------------------------------------------------------------------
// GridSeries and the WGRD file format
// ---------------------------------------------------------------------------

struct GridSeries {
  int64_t start_hour = 0;  // epoch hour of frame 0; frame t is at start_hour + t
  int64_t frames = 0, channels = 0, height = 0, width = 0;
  std::vector<std::string> channel_names;
  std::vector<float> values;  // frames*channels*height*width, row-major (t,c,h,w)

  int64_t frame_size() const { return channels * height * width; }
  int64_t hour_of_frame(int64_t t) const { return start_hour + t; }
  int64_t end_hour() const { return start_hour + frames - 1; }

  const float* frame(int64_t t) const { return values.data() + t * frame_size(); }

  void validate() const {
    if (frames < 1 || channels < 1 || height < 1 || width < 1) {
      throw CorruptionError("grid series has a non-positive extent");
    }
    if (static_cast<int64_t>(channel_names.size()) != channels) {
      throw CorruptionError("grid series channel-name count mismatch");
    }
    if (static_cast<int64_t>(values.size()) != frames * channels * height * width) {
      throw CorruptionError("grid series payload size mismatch");
    }
  }
};

inline std::string channel_unit(const std::string& name) {
  if (name == "u10" || name == "v10") return "m/s";
  if (name == "radiation") return "W/m2";
  if (name == "cloud") return "fraction";
  if (name == "temperature") return "K";
  return "unknown";
}

constexpr uint16_t kWgrdVersion = 1;

inline std::string serialize_grid(const GridSeries& g) {
  g.validate();
  for (const auto& name : g.channel_names) {
    if (name.size() > 16) throw FormatError("channel name longer than 16 bytes: " + name);
  }
  std::string out;
  out.reserve(28 + g.channel_names.size() * 16 + g.values.size() * 4);
  out += "WGRD";
  put_u16(out, kWgrdVersion);
  put_u16(out, static_cast<uint16_t>(g.channels));
  put_u32(out, static_cast<uint32_t>(g.frames));
  put_u32(out, static_cast<uint32_t>(g.height));
  put_u32(out, static_cast<uint32_t>(g.width));
  put_u64(out, static_cast<uint64_t>(g.start_hour));
  for (const auto& name : g.channel_names) {
    std::string padded = name;
    padded.resize(16, '\0');
    out += padded;
  }
  for (float v : g.values) put_f32(out, v);
  return out;
}

inline GridSeries deserialize_grid(const std::string& bytes, const std::string& what) {
  ByteReader r(bytes, what);
  if (r.raw(4) != "WGRD") throw FormatError(what + ": bad magic (not a WGRD file)");
  const uint16_t version = r.u16();
  if (version != kWgrdVersion) {
    throw FormatError(what + ": unsupported WGRD version " + std::to_string(version));
  }
  GridSeries g;
  g.channels = r.u16();
  g.frames = r.u32();
  g.height = r.u32();
  g.width = r.u32();
  g.start_hour = static_cast<int64_t>(r.u64());
  if (g.frames < 1 || g.channels < 1 || g.height < 1 || g.width < 1) {
    throw CorruptionError(what + ": non-positive extent in header");
  }
  const unsigned __int128 total = static_cast<unsigned __int128>(g.frames) * g.channels *
                                  g.height * g.width;
  if (total > (static_cast<unsigned __int128>(1) << 40)) {
    throw CorruptionError(what + ": extent overflow (header declares an implausible size)");
  }
  for (int64_t c = 0; c < g.channels; ++c) {
    std::string raw = r.raw(16);
    g.channel_names.push_back(raw.substr(0, raw.find('\0')));
  }
  const size_t count = static_cast<size_t>(total);
  if (r.remaining() != count * 4) {
    throw CorruptionError(what + ": payload holds " + std::to_string(r.remaining() / 4) +
                          " values, header declares " + std::to_string(count));
  }
  g.values.resize(count);
  r.read_into(g.values.data(), count * 4);
  return g;
}

inline void write_grid_file(const std::filesystem::path& path, const GridSeries& g) {
  atomic_write_file(path, serialize_grid(g));
}

inline GridSeries load_grid_file(const std::filesystem::path& path) {
  return deserialize_grid(read_file(path), path.filename().string());
}

// ---------------------------------------------------------------------------
// Normalization statistics (training years only)
// ---------------------------------------------------------------------------

struct NormalizationStats {
  std::vector<std::string> channels;
  std::vector<double> mean;
  std::vector<double> stddev;  // population convention (divide by N)
  int64_t period_start_hour = 0;  // span of the contributing data
  int64_t period_end_hour = 0;
};

constexpr int kTrainYearFirst = 2017;
constexpr int kTrainYearLast = 2022;
constexpr int kValidationYear = 2023;
constexpr int kTestYear = 2024;

inline std::set<int> default_train_years() {
  std::set<int> y;
  for (int v = kTrainYearFirst; v <= kTrainYearLast; ++v) y.insert(v);
  return y;
}

inline NormalizationStats compute_norm_stats(const std::vector<const GridSeries*>& series,
                                             const std::set<int>& train_years) {
  if (train_years.empty()) throw ConfigError("normalization: empty training-year set");
  if (series.empty()) throw ConfigError("normalization: no input series");
  const GridSeries* first = series.front();
  NormalizationStats stats;
  stats.channels = first->channel_names;
  const int64_t ch = first->channels;
  std::vector<double> sum(static_cast<size_t>(ch), 0.0), sum2(static_cast<size_t>(ch), 0.0);
  int64_t frames_used = 0;
  int64_t lo = 0, hi = 0;
  bool any = false;
  for (const GridSeries* g : series) {
    if (g->channel_names != stats.channels) {
      throw ConfigError("normalization: input series disagree on channels");
    }
    const int64_t plane = g->height * g->width;
    for (int64_t t = 0; t < g->frames; ++t) {
      const int64_t hour = g->hour_of_frame(t);
      if (!train_years.count(year_of(hour))) continue;
      const float* f = g->frame(t);
      for (int64_t c = 0; c < ch; ++c) {
        const float* p = f + c * plane;
        double s = 0.0, s2 = 0.0;
        for (int64_t i = 0; i < plane; ++i) {
          s += p[i];
          s2 += static_cast<double>(p[i]) * p[i];
        }
        sum[c] += s;
        sum2[c] += s2;
      }
      ++frames_used;
      if (!any) {
        lo = hi = hour;
        any = true;
      } else {
        lo = std::min(lo, hour);
        hi = std::max(hi, hour);
      }
    }
  }
  if (frames_used == 0) {
    throw ConfigError("normalization: no data inside the training years");
  }
  const double n = static_cast<double>(frames_used) *
                   static_cast<double>(first->height * first->width);
  stats.mean.resize(static_cast<size_t>(ch));
  stats.stddev.resize(static_cast<size_t>(ch));
  for (int64_t c = 0; c < ch; ++c) {
    const double mu = sum[c] / n;
    const double var = std::max(0.0, sum2[c] / n - mu * mu);
    if (var <= 1e-12 * std::max(1.0, mu * mu)) {
      throw DegenerateError("normalization: channel '" + stats.channels[c] +
                            "' has zero variance in the training years");
    }
    stats.mean[c] = mu;
    stats.stddev[c] = std::sqrt(var);
  }
  stats.period_start_hour = lo;
  stats.period_end_hour = hi;
  return stats;
}

inline GridSeries normalize_fields(const GridSeries& g, const NormalizationStats& stats) {
  if (g.channel_names != stats.channels) {
    throw ConfigError("normalization: series channels do not match stats");
  }
  GridSeries out = g;
  const int64_t plane = g.height * g.width;
  for (int64_t t = 0; t < g.frames; ++t) {
    for (int64_t c = 0; c < g.channels; ++c) {
      float* p = out.values.data() + (t * g.channels + c) * plane;
      const float mu = static_cast<float>(stats.mean[c]);
      const float inv = static_cast<float>(1.0 / stats.stddev[c]);
      for (int64_t i = 0; i < plane; ++i) p[i] = (p[i] - mu) * inv;
    }
  }
  return out;
}

inline GridSeries denormalize_fields(const GridSeries& g, const NormalizationStats& stats) {
  if (g.channel_names != stats.channels) {
    throw ConfigError("normalization: series channels do not match stats");
  }
  GridSeries out = g;
  const int64_t plane = g.height * g.width;
  for (int64_t t = 0; t < g.frames; ++t) {
    for (int64_t c = 0; c < g.channels; ++c) {
      float* p = out.values.data() + (t * g.channels + c) * plane;
      const float mu = static_cast<float>(stats.mean[c]);
      const float sd = static_cast<float>(stats.stddev[c]);
      for (int64_t i = 0; i < plane; ++i) p[i] = p[i] * sd + mu;
    }
  }
  return out;
}

constexpr const char* kStatsMagic = "WMTSTATS";
constexpr int kStatsVersion = 1;

inline std::string serialize_stats(const NormalizationStats& s) {
  std::string out = std::string(kStatsMagic) + " " + std::to_string(kStatsVersion) + "\n";
  out += "period " + format_iso8601(s.period_start_hour) + " " +
         format_iso8601(s.period_end_hour) + "\n";
  for (size_t c = 0; c < s.channels.size(); ++c) {
    out += "channel " + s.channels[c] + " " + fmt_g(s.mean[c], 17) + " " +
           fmt_g(s.stddev[c], 17) + "\n";
  }
  return out;
}

inline NormalizationStats parse_stats(const std::string& text) {
  NormalizationStats s;
  size_t pos = 0;
  int line_no = 0;
  bool saw_header = false, saw_period = false;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> tok;
    size_t p = 0;
    while (p < line.size()) {
      size_t sp = line.find(' ', p);
      if (sp == std::string::npos) sp = line.size();
      tok.push_back(line.substr(p, sp - p));
      p = sp + 1;
    }
    if (line_no == 1) {
      if (tok.size() != 2 || tok[0] != kStatsMagic || tok[1] != std::to_string(kStatsVersion)) {
        throw FormatError("stats file: bad header line");
      }
      saw_header = true;
    } else if (tok[0] == "period") {
      if (tok.size() != 3) throw FormatError("stats file: malformed period line");
      s.period_start_hour = parse_iso8601_hour(tok[1]);
      s.period_end_hour = parse_iso8601_hour(tok[2]);
      saw_period = true;
    } else if (tok[0] == "channel") {
      if (tok.size() != 4) throw FormatError("stats file: malformed channel line");
      s.channels.push_back(tok[1]);
      try {
        s.mean.push_back(std::stod(tok[2]));
        s.stddev.push_back(std::stod(tok[3]));
      } catch (const std::exception&) {
        throw FormatError("stats file: unparsable number on line " + std::to_string(line_no));
      }
      if (s.stddev.back() <= 0) throw FormatError("stats file: non-positive std");
    } else {
      throw FormatError("stats file: unknown line " + std::to_string(line_no));
    }
  }
  if (!saw_header || !saw_period || s.channels.empty()) {
    throw FormatError("stats file: incomplete");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Power and capacity series (ENTSO-E-style CSV)
// ---------------------------------------------------------------------------

struct HourlySeries {
  std::vector<int64_t> hours;   // strictly increasing
  std::vector<double> values;   // MW

  bool has(int64_t hour) const {
    auto it = std::lower_bound(hours.begin(), hours.end(), hour);
    return it != hours.end() && *it == hour;
  }
  double at(int64_t hour) const {
    auto it = std::lower_bound(hours.begin(), hours.end(), hour);
    if (it == hours.end() || *it != hour) {
      throw DataError("no value at " + format_iso8601(hour));
    }
    return values[static_cast<size_t>(it - hours.begin())];
  }
  size_t size() const { return hours.size(); }
};

enum class CsvKind { production, forecast, capacity };

inline double parse_mw(const std::string& tok, int line_no) {
  if (tok.empty()) throw DataError("csv: empty value on line " + std::to_string(line_no));
  size_t consumed = 0;
  double v = 0;
  try {
    v = std::stod(tok, &consumed);
  } catch (const std::exception&) {
    throw DataError("csv: unparsable value '" + tok + "' on line " + std::to_string(line_no));
  }
  if (consumed != tok.size()) {
    throw DataError("csv: trailing junk in value '" + tok + "' on line " + std::to_string(line_no));
  }
  if (!std::isfinite(v)) {
    throw DataError("csv: non-finite value on line " + std::to_string(line_no));
  }
  return v;
}

inline HourlySeries import_entsoe_csv(const std::filesystem::path& path, CsvKind kind) {
  const std::string text = read_file(path);
  std::map<int64_t, double> points;
  size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "timestamp_utc,value_mw") {
        throw DataError(path.filename().string() + ": bad csv header '" + line + "'");
      }
      continue;
    }
    const size_t comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw DataError(path.filename().string() + ": malformed row on line " +
                      std::to_string(line_no));
    }
    int64_t hour = 0;
    try {
      hour = parse_iso8601_hour(line.substr(0, comma));
    } catch (const DataError& e) {
      throw DataError(path.filename().string() + ": line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    const double mw = parse_mw(line.substr(comma + 1), line_no);
    if (kind == CsvKind::production && mw < 0) {
      throw DataError(path.filename().string() + ": negative production " + fmt_g(mw) + " at " +
                      format_iso8601(hour));
    }
    if (!points.emplace(hour, mw).second) {
      throw DataError(path.filename().string() + ": duplicate timestamp " + format_iso8601(hour));
    }
  }
  HourlySeries s;
  s.hours.reserve(points.size());
  s.values.reserve(points.size());
  for (const auto& [h, v] : points) {
    s.hours.push_back(h);
    s.values.push_back(v);
  }
  return s;
}

struct CapacitySeries {
  std::vector<int64_t> anchor_hours;  // strictly increasing
  std::vector<double> anchor_mw;      // all positive

  // Linear interpolation between neighboring anchors; constant beyond ends.
  double at(int64_t hour) const {
    if (anchor_hours.empty()) throw DataError("capacity series has no anchors");
    if (hour <= anchor_hours.front()) return anchor_mw.front();
    if (hour >= anchor_hours.back()) return anchor_mw.back();
    const auto it = std::upper_bound(anchor_hours.begin(), anchor_hours.end(), hour);
    const size_t hi = static_cast<size_t>(it - anchor_hours.begin());
    const size_t lo = hi - 1;
    const double t = static_cast<double>(hour - anchor_hours[lo]) /
                     static_cast<double>(anchor_hours[hi] - anchor_hours[lo]);
    return anchor_mw[lo] + t * (anchor_mw[hi] - anchor_mw[lo]);
  }
};

inline CapacitySeries interpolate_capacity(const std::vector<std::pair<int64_t, double>>& anchors) {
  if (anchors.size() < 2) throw DataError("capacity: need at least 2 anchors");
  CapacitySeries s;
  for (const auto& [hour, mw] : anchors) {
    if (!s.anchor_hours.empty() && hour <= s.anchor_hours.back()) {
      throw DataError("capacity: anchors must be strictly increasing in time");
    }
    if (mw <= 0) {
      throw DataError("capacity: non-positive anchor " + fmt_g(mw) + " at " +
                      format_iso8601(hour));
    }
    s.anchor_hours.push_back(hour);
    s.anchor_mw.push_back(mw);
  }
  return s;
}

inline CapacitySeries capacity_from_series(const HourlySeries& anchors) {
  std::vector<std::pair<int64_t, double>> pts;
  pts.reserve(anchors.size());
  for (size_t i = 0; i < anchors.size(); ++i) pts.emplace_back(anchors.hours[i], anchors.values[i]);
  return interpolate_capacity(pts);
}

// fraction = production / capacity, clipped to [0, 1]; clips are counted, not
// rejected (real production occasionally exceeds registered capacity).
inline double normalize_target(double production_mw, double capacity_mw, int64_t* clip_counter) {
  if (capacity_mw <= 0) {
    throw DataError("normalize_target: non-positive capacity " + fmt_g(capacity_mw));
  }
  const double f = production_mw / capacity_mw;
  if (f < 0.0 || f > 1.0) {
    if (clip_counter) ++*clip_counter;
    return f < 0.0 ? 0.0 : 1.0;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Sample assembly and splits
// ---------------------------------------------------------------------------

struct ForecastSample {
  int64_t start_hour = 0;  // first lead hour (03:00 of the forecast day by default)
  int64_t channels = 0, height = 0, width = 0;
  std::vector<float> weather;      // horizon * C * H * W, normalized
  std::vector<double> target_frac;  // horizon values in [0, 1]
  std::vector<double> target_mw;    // horizon values
  std::vector<double> capacity_mw;  // horizon values
};

struct AssemblyReport {
  std::vector<std::string> dropped;  // human-readable drop log, never imputed
  int64_t clipped_targets = 0;
};

// grids must already be normalized. One candidate sample per calendar day
// whose window start lies inside the weather data range; any missing weather
// or target hour drops the whole sample with a log entry.
inline std::vector<ForecastSample> assemble_samples(
    const std::vector<const GridSeries*>& grids, const HourlySeries& production,
    const CapacitySeries& capacity, AssemblyReport* report, int64_t horizon = 45,
    int64_t start_hour_of_day = 3) {
  if (horizon < 1) throw ConfigError("assemble_samples: horizon must be >= 1");
  if (start_hour_of_day < 0 || start_hour_of_day > 23) {
    throw ConfigError("assemble_samples: start hour must be in [0, 23]");
  }
  if (grids.empty()) return {};

  // Hour -> (series, frame) lookup across all input files.
  std::map<int64_t, std::pair<const GridSeries*, int64_t>> index;
  const GridSeries* first = grids.front();
  for (const GridSeries* g : grids) {
    if (g->channel_names != first->channel_names || g->height != first->height ||
        g->width != first->width) {
      throw ConfigError("assemble_samples: input grids disagree on channels or extent");
    }
    for (int64_t t = 0; t < g->frames; ++t) index[g->hour_of_frame(t)] = {g, t};
  }
  const int64_t first_hour = index.begin()->first;
  const int64_t last_hour = index.rbegin()->first;

  std::vector<ForecastSample> samples;
  const int64_t first_day = day_of(static_cast<uint64_t>(first_hour));
  const int64_t last_day = day_of(static_cast<uint64_t>(last_hour));
  for (int64_t day = first_day; day <= last_day; ++day) {
    const int64_t start = day * 24 + start_hour_of_day;
    if (start < first_hour || start > last_hour) continue;
    // A day with no weather at the window start at all (e.g. the gap between
    // two data blocks) is not a candidate; partially covered windows are
    // candidates and are dropped with a log entry, never imputed.
    if (!index.count(start)) continue;
    std::string missing;
    for (int64_t k = 0; k < horizon; ++k) {
      const int64_t hour = start + k;
      if (!index.count(hour)) {
        missing = "missing weather hour " + format_iso8601(hour);
        break;
      }
      if (!production.has(hour)) {
        missing = "missing target hour " + format_iso8601(hour);
        break;
      }
    }
    if (!missing.empty()) {
      if (report) {
        report->dropped.push_back("dropped sample " + format_iso8601(start) + ": " + missing);
      }
      continue;
    }
    ForecastSample s;
    s.start_hour = start;
    s.channels = first->channels;
    s.height = first->height;
    s.width = first->width;
    const int64_t fsz = first->frame_size();
    s.weather.resize(static_cast<size_t>(horizon * fsz));
    s.target_frac.resize(static_cast<size_t>(horizon));
    s.target_mw.resize(static_cast<size_t>(horizon));
    s.capacity_mw.resize(static_cast<size_t>(horizon));
    for (int64_t k = 0; k < horizon; ++k) {
      const auto& [g, t] = index[start + k];
      std::memcpy(s.weather.data() + k * fsz, g->frame(t),
                  static_cast<size_t>(fsz) * sizeof(float));
      const double mw = production.at(start + k);
      const double cap = capacity.at(start + k);
      int64_t clips = 0;
      s.target_frac[k] = normalize_target(mw, cap, &clips);
      if (report) report->clipped_targets += clips;
      s.target_mw[k] = mw;
      s.capacity_mw[k] = cap;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

struct DatasetSplit {
  std::vector<ForecastSample> train, validation, test, unassigned;
  std::vector<std::string> warnings;
};

inline DatasetSplit split_by_year(std::vector<ForecastSample> samples) {
  DatasetSplit split;
  for (auto& s : samples) {
    const int year = year_of(s.start_hour);
    if (year >= kTrainYearFirst && year <= kTrainYearLast) {
      split.train.push_back(std::move(s));
    } else if (year == kValidationYear) {
      split.validation.push_back(std::move(s));
    } else if (year == kTestYear) {
      split.test.push_back(std::move(s));
    } else {
      split.warnings.push_back("sample " + format_iso8601(s.start_hour) + " (year " +
                               std::to_string(year) + ") is outside 2017-2024; unassigned");
      split.unassigned.push_back(std::move(s));
    }
  }
  return split;
}

}  // namespace wmt
