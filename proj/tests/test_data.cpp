// Data pipeline: binary grid serialization, timestamp parsing, CSV ingestion,
// capacity interpolation, normalization statistics (with the leakage
// invariant), sample assembly, and year-based splitting.

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wmt/data.hpp"
#include "wmt/timeutil.hpp"
#include "wmt/util.hpp"

using namespace wmt;
namespace fs = std::filesystem;

namespace {

GridSeries make_series(int64_t start_hour, int64_t frames, std::vector<std::string> channels,
                       uint64_t seed, int64_t h = 4, int64_t w = 5) {
  GridSeries g;
  g.start_hour = start_hour;
  g.frames = frames;
  g.channels = static_cast<int64_t>(channels.size());
  g.height = h;
  g.width = w;
  g.channel_names = std::move(channels);
  g.values.resize(static_cast<size_t>(frames * g.channels * h * w));
  Rng rng(seed);
  for (auto& v : g.values) v = static_cast<float>(rng.uniform(-3, 9));
  return g;
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "wmt_data_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(TimeUtil, EpochHourRoundTrip) {
  const uint64_t h = epoch_hour(2022, 12, 31, 23);
  const CivilDateTime c = civil_of(h);
  EXPECT_EQ(c.year, 2022);
  EXPECT_EQ(c.month, 12);
  EXPECT_EQ(c.day, 31);
  EXPECT_EQ(c.hour, 23);
  EXPECT_EQ(h + 1, epoch_hour(2023, 1, 1, 0));  // year boundary is contiguous
  EXPECT_EQ(year_of(h), 2022);
  EXPECT_EQ(year_of(h + 1), 2023);
  EXPECT_EQ(hour_of_day(h), 23);
}

TEST(TimeUtil, Iso8601FormatParseRoundTrip) {
  const uint64_t h = epoch_hour(2024, 2, 29, 7);  // leap day
  EXPECT_EQ(format_iso8601(h), "2024-02-29T07:00:00Z");
  EXPECT_EQ(parse_iso8601_hour("2024-02-29T07:00:00Z"), h);
}

TEST(TimeUtil, ParserRejectsMalformedTimestamps) {
  EXPECT_THROW(parse_iso8601_hour("2024-02-29T07:30:00Z"), DataError);  // not a whole hour
  EXPECT_THROW(parse_iso8601_hour("2024-02-29T07:00:00"), DataError);   // missing zone
  EXPECT_THROW(parse_iso8601_hour("2024-13-01T00:00:00Z"), DataError);  // bad month
  EXPECT_THROW(parse_iso8601_hour("2023-02-29T00:00:00Z"), DataError);  // not a leap year
  EXPECT_THROW(parse_iso8601_hour("2024-02-29T07:00:00Zx"), DataError); // trailing junk
  EXPECT_THROW(parse_iso8601_hour("garbage"), DataError);
}

TEST(GridFormat, RoundTripIsBitExact) {
  const GridSeries g = make_series(epoch_hour(2020, 6, 1), 7, {"u10", "v10"}, 3);
  const std::string bytes = serialize_grid(g);
  const GridSeries back = deserialize_grid(bytes, "test");
  EXPECT_EQ(back.start_hour, g.start_hour);
  EXPECT_EQ(back.frames, g.frames);
  EXPECT_EQ(back.channel_names, g.channel_names);
  EXPECT_EQ(back.height, g.height);
  EXPECT_EQ(back.width, g.width);
  EXPECT_EQ(back.values, g.values);
  EXPECT_EQ(serialize_grid(back), bytes);
}

TEST(GridFormat, RejectsBadMagicVersionAndTruncation) {
  const GridSeries g = make_series(0, 2, {"u10"}, 4);
  std::string bytes = serialize_grid(g);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_grid(bad_magic, "t"), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_grid(bad_version, "t"), FormatError);
  EXPECT_THROW(deserialize_grid(bytes.substr(0, bytes.size() - 5), "t"), CorruptionError);
  std::string extra = bytes + "xx";
  EXPECT_THROW(deserialize_grid(extra, "t"), CorruptionError);
}

TEST(GridFormat, FileRoundTrip) {
  const fs::path path = temp_dir() / "grid_roundtrip.wgrd";
  const GridSeries g = make_series(epoch_hour(2021, 1, 1), 3, {"radiation", "cloud", "temperature"}, 5);
  write_grid_file(path, g);
  const GridSeries back = load_grid_file(path);
  EXPECT_EQ(back.values, g.values);
  fs::remove(path);
}

TEST(CsvImport, ParsesHeaderAndRows) {
  const fs::path path = temp_dir() / "prod.csv";
  atomic_write_file(path,
                    "timestamp_utc,value_mw\n"
                    "2022-01-01T00:00:00Z,123.5\n"
                    "2022-01-01T01:00:00Z,0\n");
  const HourlySeries s = import_entsoe_csv(path, CsvKind::production);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s.at(epoch_hour(2022, 1, 1, 0)), 123.5);
  EXPECT_DOUBLE_EQ(s.at(epoch_hour(2022, 1, 1, 1)), 0.0);
  EXPECT_TRUE(s.has(epoch_hour(2022, 1, 1, 1)));
  EXPECT_FALSE(s.has(epoch_hour(2022, 1, 1, 2)));
  fs::remove(path);
}

TEST(CsvImport, RejectsBadHeaderDuplicatesNegativesAndJunk) {
  const fs::path dir = temp_dir();
  auto expect_throw = [&](const std::string& content, const std::string& needle) {
    const fs::path p = dir / "bad.csv";
    atomic_write_file(p, content);
    try {
      import_entsoe_csv(p, CsvKind::production);
      FAIL() << "expected DataError for: " << needle;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos)
          << "message was: " << e.what();
    }
    fs::remove(p);
  };
  expect_throw("time,power\n", "header");
  expect_throw("timestamp_utc,value_mw\n2022-01-01T00:00:00Z,5\n2022-01-01T00:00:00Z,6\n",
               "duplicate");
  expect_throw("timestamp_utc,value_mw\n2022-01-01T00:00:00Z,-4\n", "negative");
  expect_throw("timestamp_utc,value_mw\n2022-01-01T00:00:00Z,12x\n", "line 2");
  expect_throw("timestamp_utc,value_mw\n2022-01-01T00:30:00Z,12\n", "line 2");
  expect_throw("timestamp_utc,value_mw\n2022-01-01T00:00:00Z,1,2\n", "line 2");
}

TEST(CsvImport, ForecastKindAllowsNegativeValues) {
  const fs::path p = temp_dir() / "fc.csv";
  atomic_write_file(p, "timestamp_utc,value_mw\n2022-01-01T00:00:00Z,-4\n");
  const HourlySeries s = import_entsoe_csv(p, CsvKind::forecast);
  EXPECT_DOUBLE_EQ(s.at(epoch_hour(2022, 1, 1, 0)), -4.0);
  fs::remove(p);
}

TEST(Capacity, InterpolatesLinearlyAndExtrapolatesConstant) {
  const int64_t h0 = static_cast<int64_t>(epoch_hour(2020, 1, 1));
  const CapacitySeries cap = interpolate_capacity({{h0, 1000.0}, {h0 + 100, 1100.0}});
  EXPECT_DOUBLE_EQ(cap.at(h0), 1000.0);
  EXPECT_DOUBLE_EQ(cap.at(h0 + 100), 1100.0);
  EXPECT_DOUBLE_EQ(cap.at(h0 + 50), 1050.0);
  EXPECT_DOUBLE_EQ(cap.at(h0 + 25), 1025.0);
  EXPECT_DOUBLE_EQ(cap.at(h0 - 500), 1000.0);   // before first anchor
  EXPECT_DOUBLE_EQ(cap.at(h0 + 999), 1100.0);   // after last anchor
}

TEST(Capacity, RejectsBadAnchors) {
  const int64_t h0 = 1000;
  EXPECT_THROW(interpolate_capacity({{h0, 1000.0}}), DataError);
  EXPECT_THROW(interpolate_capacity({{h0, 1000.0}, {h0, 1100.0}}), DataError);
  EXPECT_THROW(interpolate_capacity({{h0, 1000.0}, {h0 - 1, 1100.0}}), DataError);
  EXPECT_THROW(interpolate_capacity({{h0, 0.0}, {h0 + 1, 1.0}}), DataError);
}

TEST(Targets, NormalizeClipsAndCounts) {
  int64_t clips = 0;
  EXPECT_DOUBLE_EQ(normalize_target(500, 1000, &clips), 0.5);
  EXPECT_EQ(clips, 0);
  EXPECT_DOUBLE_EQ(normalize_target(1200, 1000, &clips), 1.0);
  EXPECT_EQ(clips, 1);
  EXPECT_THROW(normalize_target(1, 0, &clips), DataError);
}

TEST(NormStats, MatchesDirectComputationOnTrainYearsOnly) {
  // One series inside the training years, one in the test year. The stats
  // must equal a direct recomputation over the 2022 series alone.
  GridSeries train_g = make_series(static_cast<int64_t>(epoch_hour(2022, 3, 1)), 50, {"u10", "v10"}, 7);
  GridSeries test_g = make_series(static_cast<int64_t>(epoch_hour(2024, 3, 1)), 50, {"u10", "v10"}, 8);
  const NormalizationStats stats =
      compute_norm_stats({&train_g, &test_g}, default_train_years());

  const int64_t plane = train_g.height * train_g.width;
  for (int64_t c = 0; c < 2; ++c) {
    double sum = 0, sum2 = 0;
    int64_t n = 0;
    for (int64_t t = 0; t < train_g.frames; ++t) {
      const float* p = train_g.frame(t) + c * plane;
      for (int64_t i = 0; i < plane; ++i) {
        sum += p[i];
        sum2 += p[i] * p[i];
        ++n;
      }
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    // One-pass vs two-pass accumulation differ in the last few ulps only;
    // anything structural (wrong years, n vs n-1) is off by far more.
    EXPECT_NEAR(stats.mean[static_cast<size_t>(c)], mean, 1e-6);
    EXPECT_NEAR(stats.stddev[static_cast<size_t>(c)], std::sqrt(var), 1e-6);
  }

  // Leakage invariant: perturbing validation/test-year data changes nothing.
  GridSeries test_mutated = test_g;
  for (auto& v : test_mutated.values) v = v * 3.0f + 100.0f;
  const NormalizationStats stats2 =
      compute_norm_stats({&train_g, &test_mutated}, default_train_years());
  EXPECT_EQ(stats.mean, stats2.mean);
  EXPECT_EQ(stats.stddev, stats2.stddev);
}

TEST(NormStats, ErrorsOnDegenerateOrMissingData) {
  GridSeries flat = make_series(static_cast<int64_t>(epoch_hour(2020, 1, 1)), 10, {"u10"}, 9);
  for (auto& v : flat.values) v = 5.0f;
  EXPECT_THROW(compute_norm_stats({&flat}, default_train_years()), DegenerateError);

  GridSeries outside = make_series(static_cast<int64_t>(epoch_hour(2024, 1, 1)), 10, {"u10"}, 10);
  EXPECT_THROW(compute_norm_stats({&outside}, default_train_years()), ConfigError);
  EXPECT_THROW(compute_norm_stats({}, default_train_years()), ConfigError);
}

TEST(NormStats, SerializeParseRoundTrip) {
  NormalizationStats s;
  s.channels = {"u10", "v10"};
  s.mean = {3.25, -0.5};
  s.stddev = {2.5, 1.75};
  s.period_start_hour = epoch_hour(2017, 1, 1);
  s.period_end_hour = epoch_hour(2023, 1, 1);
  const std::string text = serialize_stats(s);
  const NormalizationStats back = parse_stats(text);
  EXPECT_EQ(back.channels, s.channels);
  EXPECT_EQ(back.mean, s.mean);
  EXPECT_EQ(back.stddev, s.stddev);
  EXPECT_EQ(back.period_start_hour, s.period_start_hour);
  EXPECT_EQ(back.period_end_hour, s.period_end_hour);
  EXPECT_THROW(parse_stats("WMTSTATS 9\n"), FormatError);
  EXPECT_THROW(parse_stats("nonsense\n"), FormatError);
}

TEST(NormStats, NormalizeDenormalizeRoundTrip) {
  GridSeries g = make_series(static_cast<int64_t>(epoch_hour(2022, 5, 1)), 20, {"u10", "v10"}, 11);
  const NormalizationStats stats = compute_norm_stats({&g}, default_train_years());
  const GridSeries n = normalize_fields(g, stats);
  const GridSeries back = denormalize_fields(n, stats);
  for (size_t i = 0; i < g.values.size(); ++i) EXPECT_NEAR(back.values[i], g.values[i], 1e-3);
  // Normalized training data has mean ~0, std ~1 per channel.
  const int64_t plane = g.height * g.width;
  for (int64_t c = 0; c < 2; ++c) {
    double sum = 0;
    for (int64_t t = 0; t < n.frames; ++t) {
      const float* p = n.frame(t) + c * plane;
      for (int64_t i = 0; i < plane; ++i) sum += p[i];
    }
    EXPECT_NEAR(sum / (n.frames * plane), 0.0, 1e-5);
  }
}

TEST(Assembly, BuildsSamplesAndDropsIncompleteWindows) {
  // Three days of weather; production missing one hour on the second day.
  const int64_t day0 = day_of(epoch_hour(2022, 6, 1));
  GridSeries g = make_series(day0 * 24, 3 * 24, {"u10", "v10"}, 12);
  HourlySeries prod;
  for (int64_t h = g.start_hour; h <= g.end_hour(); ++h) {
    if (h == day0 * 24 + 30) continue;  // hole inside day-1's window
    prod.hours.push_back(h);
    prod.values.push_back(100.0 + (h % 7));
  }
  const CapacitySeries cap = interpolate_capacity(
      {{g.start_hour, 1000.0}, {g.end_hour(), 1000.0}});

  AssemblyReport report;
  const auto samples = assemble_samples({&g}, prod, cap, &report, /*horizon=*/45);
  // The hole at day1 06:00 sits inside both the day-0 window (day0 03:00 ..
  // day1 23:00) and the day-1 window (day1 03:00 .. day2 23:00); the day-2
  // window runs past the end of the weather block.
  ASSERT_EQ(samples.size(), 0u);
  ASSERT_EQ(report.dropped.size(), 3u);
  EXPECT_NE(report.dropped[0].find("missing target hour"), std::string::npos);
  EXPECT_NE(report.dropped[1].find("missing target hour"), std::string::npos);
  EXPECT_NE(report.dropped[2].find("missing weather hour"), std::string::npos);

  // With a complete production series and a short horizon every day fits.
  HourlySeries full;
  for (int64_t h = g.start_hour; h <= g.end_hour(); ++h) {
    full.hours.push_back(h);
    full.values.push_back(50.0);
  }
  AssemblyReport report2;
  const auto samples2 = assemble_samples({&g}, full, cap, &report2, /*horizon=*/12);
  ASSERT_EQ(samples2.size(), 3u);
  EXPECT_TRUE(report2.dropped.empty());
  EXPECT_EQ(samples2[0].start_hour, day0 * 24 + 3);
  EXPECT_EQ(samples2[1].start_hour, (day0 + 1) * 24 + 3);
  ASSERT_EQ(samples2[0].target_frac.size(), 12u);
  EXPECT_DOUBLE_EQ(samples2[0].target_frac[0], 0.05);
  EXPECT_DOUBLE_EQ(samples2[0].target_mw[0], 50.0);
  EXPECT_DOUBLE_EQ(samples2[0].capacity_mw[0], 1000.0);
  // Weather payload is copied frame-by-frame from the right hours.
  const int64_t fsz = g.frame_size();
  const float* frame3 = g.frame(3 + 24);  // sample 1, lead hour 0 = day1 03:00
  for (int64_t i = 0; i < fsz; ++i) EXPECT_EQ(samples2[1].weather[static_cast<size_t>(i)], frame3[i]);
}

TEST(Assembly, GridsMustAgreeOnLayout) {
  GridSeries a = make_series(0, 24, {"u10", "v10"}, 13);
  GridSeries b = make_series(24 * 24, 24, {"u10"}, 14);
  HourlySeries prod;
  prod.hours.push_back(0);
  prod.values.push_back(1.0);
  const CapacitySeries cap = interpolate_capacity({{0, 1.0}, {1000, 1.0}});
  EXPECT_THROW(assemble_samples({&a, &b}, prod, cap, nullptr), ConfigError);
}

TEST(Split, ExactYearBoundaries) {
  auto sample_at = [](int year, int month, int day) {
    ForecastSample s;
    s.start_hour = static_cast<int64_t>(epoch_hour(year, month, day, 3));
    return s;
  };
  std::vector<ForecastSample> samples;
  samples.push_back(sample_at(2017, 1, 1));
  samples.push_back(sample_at(2022, 12, 31));  // last train start day
  samples.push_back(sample_at(2023, 1, 1));    // first validation day
  samples.push_back(sample_at(2023, 12, 31));
  samples.push_back(sample_at(2024, 1, 1));    // first test day
  samples.push_back(sample_at(2016, 12, 31));  // outside the dataset contract
  samples.push_back(sample_at(2025, 1, 1));

  DatasetSplit split = split_by_year(std::move(samples));
  ASSERT_EQ(split.train.size(), 2u);
  ASSERT_EQ(split.validation.size(), 2u);
  ASSERT_EQ(split.test.size(), 1u);
  ASSERT_EQ(split.unassigned.size(), 2u);
  EXPECT_EQ(split.warnings.size(), 2u);
  EXPECT_EQ(year_of(static_cast<uint64_t>(split.train[1].start_hour)), 2022);
  EXPECT_EQ(year_of(static_cast<uint64_t>(split.validation[0].start_hour)), 2023);
  EXPECT_EQ(year_of(static_cast<uint64_t>(split.test[0].start_hour)), 2024);
}
