// Command-line pipeline for grid-weather power forecasting:
//   gen-data   synthesize a seeded dataset (WGRD weather + target/capacity CSVs)
//   train      fit the encoder-transformer model, write checkpoint + loss log
//   evaluate   score a checkpoint on a split against a baseline, emit reports
//   forecast   produce a 45-hour MW forecast from a weather file
//
// Exit codes: 0 success, 1 usage/config error, 2 data/format error,
// 3 numerical abort.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wmt/data.hpp"
#include "wmt/manifest.hpp"
#include "wmt/metrics.hpp"
#include "wmt/model.hpp"
#include "wmt/svg.hpp"
#include "wmt/synthetic.hpp"
#include "wmt/trainer.hpp"

namespace fs = std::filesystem;
using namespace wmt;

namespace {

std::vector<std::string> expected_channels(VariableSet v) {
  if (v == VariableSet::wind) return {"u10", "v10"};
  return {"radiation", "cloud", "temperature"};
}

VariableSet parse_variables(const std::string& s) {
  if (s == "wind") return VariableSet::wind;
  if (s == "solar") return VariableSet::solar;
  throw UsageError("--variables must be 'wind' or 'solar', got '" + s + "'");
}

// HxW, e.g. "16x16".
void parse_grid(const std::string& s, int64_t& height, int64_t& width) {
  const size_t x = s.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= s.size()) {
    throw UsageError("--grid must look like HxW (e.g. 16x16), got '" + s + "'");
  }
  try {
    size_t c1 = 0, c2 = 0;
    height = std::stoll(s.substr(0, x), &c1);
    width = std::stoll(s.substr(x + 1), &c2);
    if (c1 != x || c2 != s.size() - x - 1) throw std::invalid_argument("junk");
  } catch (const std::exception&) {
    throw UsageError("--grid must look like HxW (e.g. 16x16), got '" + s + "'");
  }
}

// "A-B" or "N", 1-based inclusive lead hours.
std::vector<uint8_t> parse_lead_mask(const std::string& s, int64_t horizon) {
  int64_t lo = 0, hi = 0;
  const size_t dash = s.find('-');
  try {
    if (dash == std::string::npos) {
      lo = hi = std::stoll(s);
    } else {
      lo = std::stoll(s.substr(0, dash));
      hi = std::stoll(s.substr(dash + 1));
    }
  } catch (const std::exception&) {
    throw UsageError("--lead-hours must be 'A-B' or 'N', got '" + s + "'");
  }
  if (lo < 1 || hi > horizon || lo > hi) {
    throw UsageError("--lead-hours range must lie within 1-" + std::to_string(horizon));
  }
  std::vector<uint8_t> mask(static_cast<size_t>(horizon), 0);
  for (int64_t h = lo; h <= hi; ++h) mask[static_cast<size_t>(h - 1)] = 1;
  return mask;
}

struct LoadedData {
  std::vector<GridSeries> grids;
  HourlySeries production;
  CapacitySeries capacity;
  std::vector<fs::path> files;  // everything read, for the manifest
};

LoadedData load_data_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir.string());
  LoadedData d;
  std::vector<fs::path> weather;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("weather_", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".wgrd") {
      weather.push_back(entry.path());
    }
  }
  if (weather.empty()) throw DataError("no weather_*.wgrd files in " + dir.string());
  std::sort(weather.begin(), weather.end());
  for (const auto& p : weather) {
    d.grids.push_back(load_grid_file(p));
    d.files.push_back(p);
  }
  const fs::path targets = dir / "targets.csv";
  const fs::path capacity = dir / "capacity.csv";
  d.production = import_entsoe_csv(targets, CsvKind::production);
  d.capacity = capacity_from_series(import_entsoe_csv(capacity, CsvKind::capacity));
  d.files.push_back(targets);
  d.files.push_back(capacity);
  return d;
}

std::vector<ForecastSample>& pick_split(DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw UsageError("--split must be train, validation or test, got '" + name + "'");
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenOptions {
  uint64_t seed = 0;
  int64_t days = 300;
  std::string grid = "16x16";
  std::string variables = "wind";
  std::string out;
};

int cmd_gen_data(const GenOptions& o) {
  RunManifest manifest("gen-data");
  SyntheticConfig cfg;
  cfg.seed = o.seed;
  cfg.days = o.days;
  parse_grid(o.grid, cfg.height, cfg.width);
  cfg.variables = parse_variables(o.variables);
  cfg.validate();
  manifest.set_config("seed", cfg.seed);
  manifest.set_config("days", cfg.days);
  manifest.set_config("grid", std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  manifest.set_config("variables", variable_set_name(cfg.variables));

  const GeneratedDataset ds = generate_dataset(cfg, o.out);
  for (const auto& p : ds.weather_files) manifest.add_output(p);
  manifest.add_output(ds.targets_csv);
  manifest.add_output(ds.capacity_csv);
  manifest.write(fs::path(o.out) / "manifest.txt");

  std::cout << "dataset " << o.out << "\n";
  std::cout << "train_days " << ds.train_days << "\n";
  std::cout << "validation_days " << ds.validation_days << "\n";
  std::cout << "test_days " << ds.test_days << "\n";
  for (const auto& p : ds.weather_files) std::cout << "weather " << p.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string variables = "wind";
  int64_t epochs = 500;
  int64_t patience = 20;
  double lr = 1e-4;
  int64_t batch = 8;
  uint64_t seed = 0;
  int threads = 1;
  int64_t horizon = 45;
  int64_t kernel = 3;
  std::string out;
  std::string loss_log;  // default derived from --out
};

int cmd_train(const TrainOptions& o) {
  if (o.patience < 1) throw UsageError("--patience must be >= 1");
  if (o.epochs < 1) throw UsageError("--epochs must be >= 1");
  if (o.batch < 1) throw UsageError("--batch must be >= 1");
  if (o.lr <= 0) throw UsageError("--lr must be positive");
  RunManifest manifest("train");
  const VariableSet variables = parse_variables(o.variables);

  LoadedData data = load_data_dir(o.data);
  for (const auto& p : data.files) manifest.add_input(p);
  const std::vector<std::string> want = expected_channels(variables);
  if (data.grids.front().channel_names != want) {
    std::string got;
    for (const auto& c : data.grids.front().channel_names) got += c + " ";
    throw DataError("data channels (" + got + ") do not match --variables " + o.variables);
  }

  std::vector<const GridSeries*> ptrs;
  for (const auto& g : data.grids) ptrs.push_back(&g);
  const NormalizationStats stats = compute_norm_stats(ptrs, default_train_years());
  std::vector<GridSeries> normalized;
  normalized.reserve(data.grids.size());
  for (const auto& g : data.grids) normalized.push_back(normalize_fields(g, stats));
  std::vector<const GridSeries*> nptrs;
  for (const auto& g : normalized) nptrs.push_back(&g);

  AssemblyReport report;
  std::vector<ForecastSample> samples =
      assemble_samples(nptrs, data.production, data.capacity, &report, o.horizon);
  for (const auto& msg : report.dropped) std::cerr << msg << "\n";
  DatasetSplit split = split_by_year(std::move(samples));
  for (const auto& msg : split.warnings) std::cerr << msg << "\n";
  if (split.train.empty()) throw DataError("training split is empty");
  if (split.validation.empty()) throw DataError("validation split is empty");
  std::cout << "samples train " << split.train.size() << " validation "
            << split.validation.size() << " test " << split.test.size() << "\n";

  EncoderConfig enc;
  enc.in_channels = data.grids.front().channels;
  enc.kernel_size = o.kernel;
  TransformerConfig tr;
  tr.horizon = o.horizon;
  ForecastModel<float> model(enc, tr, o.seed);
  std::cout << "parameter_count " << model.params.trainable_count() << "\n";

  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.batch_size = o.batch;
  cfg.max_epochs = o.epochs;
  cfg.patience = o.patience;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  manifest.set_config("variables", o.variables);
  manifest.set_config("lr", cfg.learning_rate);
  manifest.set_config("batch", cfg.batch_size);
  manifest.set_config("epochs", cfg.max_epochs);
  manifest.set_config("patience", cfg.patience);
  manifest.set_config("seed", cfg.seed);
  manifest.set_config("threads", static_cast<int64_t>(cfg.threads));
  manifest.set_config("horizon", o.horizon);
  manifest.set_config("kernel", o.kernel);

  AdamState<float> opt;
  const TrainResult result = train(model, opt, split.train, split.validation, cfg, &std::cout);

  const fs::path out_path(o.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_checkpoint(out_path, model, variables, stats, &opt);
  fs::path log_path = o.loss_log.empty()
                          ? out_path.parent_path() / (out_path.stem().string() + "_loss.csv")
                          : fs::path(o.loss_log);
  atomic_write_file(log_path, result.log_csv());
  manifest.add_output(out_path);
  manifest.add_output(log_path);
  manifest.write(out_path.parent_path() / (out_path.stem().string() + "_manifest.txt"));

  std::cout << "final_epoch " << result.epochs_run << "\n";
  std::cout << "best_epoch " << result.best_epoch << "\n";
  std::cout << "best_val_mse " << fmt_g(result.best_val_loss, 10) << "\n";
  std::cout << "checkpoint " << out_path.string() << "\n";
  std::cout << "loss_log " << log_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  std::string baseline = "climatology";
  std::string report_dir;
  std::string lead_hours;  // optional "A-B" segment restriction
};

int cmd_evaluate(const EvalOptions& o) {
  RunManifest manifest("evaluate");
  manifest.add_input(o.ckpt);
  const CheckpointData ck = load_checkpoint(o.ckpt);
  ForecastModel<float> model = restore_model<float>(ck);

  LoadedData data = load_data_dir(o.data);
  for (const auto& p : data.files) manifest.add_input(p);
  if (data.grids.front().channel_names != ck.stats.channels) {
    std::string got;
    for (const auto& c : data.grids.front().channel_names) got += c + " ";
    throw DataError("data channels (" + got + ") do not match checkpoint variable set " +
                    variable_set_name(ck.variables));
  }

  std::vector<GridSeries> normalized;
  normalized.reserve(data.grids.size());
  for (const auto& g : data.grids) normalized.push_back(normalize_fields(g, ck.stats));
  std::vector<const GridSeries*> nptrs;
  for (const auto& g : normalized) nptrs.push_back(&g);
  AssemblyReport areport;
  const int64_t horizon = model.tr_cfg.horizon;
  std::vector<ForecastSample> samples =
      assemble_samples(nptrs, data.production, data.capacity, &areport, horizon);
  DatasetSplit split = split_by_year(std::move(samples));
  const std::vector<ForecastSample>& eval_set = pick_split(split, o.split);
  if (eval_set.empty()) throw DataError("split '" + o.split + "' is empty");

  // Model predictions (clamped fraction x hourly capacity) and actuals, MW.
  std::vector<uint64_t> starts;
  std::vector<std::vector<double>> model_mw, actual_mw;
  for (const ForecastSample& s : eval_set) {
    auto maps = make_tensor<float>({horizon, s.channels, s.height, s.width});
    for (size_t i = 0; i < s.weather.size(); ++i) maps->data[i] = s.weather[i];
    const std::vector<float> frac = model.predict(maps);
    std::vector<double> mw(static_cast<size_t>(horizon)), act(static_cast<size_t>(horizon));
    for (int64_t h = 0; h < horizon; ++h) {
      mw[static_cast<size_t>(h)] =
          static_cast<double>(frac[static_cast<size_t>(h)]) * s.capacity_mw[static_cast<size_t>(h)];
      act[static_cast<size_t>(h)] = s.target_mw[static_cast<size_t>(h)];
    }
    starts.push_back(static_cast<uint64_t>(s.start_hour));
    model_mw.push_back(std::move(mw));
    actual_mw.push_back(std::move(act));
  }

  // Baseline series over the same cells.
  std::vector<std::vector<double>> baseline_mw;
  std::vector<std::vector<uint8_t>> valid;  // empty = all cells valid
  std::string baseline_label = o.baseline;
  if (o.baseline == "climatology") {
    const ClimatologyTable table =
        build_climatology(data.production, static_cast<int64_t>(ck.stats.period_start_hour),
                          static_cast<int64_t>(ck.stats.period_end_hour));
    baseline_mw = climatology_forecast(table, starts, horizon);
  } else if (o.baseline == "persistence") {
    PersistenceForecast p = persistence_forecast(data.production, starts, horizon);
    baseline_mw = std::move(p.values);
    valid = std::move(p.valid);
    if (p.missing_cells > 0) {
      std::cerr << "persistence: " << p.missing_cells
                << " cells lack a 24h-earlier reference; excluded from both series\n";
    }
  } else if (o.baseline.rfind("csv:", 0) == 0) {
    const fs::path path = o.baseline.substr(4);
    manifest.add_input(path);
    const HourlySeries series = import_entsoe_csv(path, CsvKind::forecast);
    baseline_mw = baseline_from_series(series, starts, horizon);
    baseline_label = "csv:" + path.filename().string();
  } else {
    throw UsageError("--baseline must be climatology, persistence or csv:PATH, got '" +
                     o.baseline + "'");
  }

  if (!o.lead_hours.empty()) {
    valid = apply_lead_mask(valid, parse_lead_mask(o.lead_hours, horizon), starts.size(), horizon);
  }

  const CompareReport cmp = compare_report(model_mw, baseline_mw, actual_mw, horizon, valid);

  fs::create_directories(o.report_dir);
  const fs::path dir(o.report_dir);
  atomic_write_file(dir / "report.csv", report_csv(cmp));
  atomic_write_file(dir / "horizon.csv", horizon_csv(cmp));

  // Full per-cell diagnostic plus a flat freshest-lead series (for each
  // timestamp, the value from the most recently issued window) usable as a
  // csv: baseline in a later run.
  {
    std::string diag = "sample_start_utc,lead_hour,timestamp_utc,actual_mw,model_mw,baseline_mw\n";
    std::map<uint64_t, double> freshest;
    for (size_t s = 0; s < starts.size(); ++s) {
      for (int64_t h = 0; h < horizon; ++h) {
        const uint64_t t = starts[s] + static_cast<uint64_t>(h);
        const bool cell_valid = valid.empty() || valid[s][static_cast<size_t>(h)];
        diag += format_iso8601(starts[s]) + "," + std::to_string(h + 1) + "," +
                format_iso8601(t) + "," + fmt_g(actual_mw[s][static_cast<size_t>(h)], 10) + "," +
                fmt_g(model_mw[s][static_cast<size_t>(h)], 10) + "," +
                (cell_valid ? fmt_g(baseline_mw[s][static_cast<size_t>(h)], 10) : std::string()) +
                "\n";
        freshest[t] = model_mw[s][static_cast<size_t>(h)];  // later samples overwrite
      }
    }
    atomic_write_file(dir / "predictions.csv", diag);
    std::string flat = "timestamp_utc,value_mw\n";
    // 17 significant digits so a re-imported series is bit-identical.
    for (const auto& [t, v] : freshest) flat += format_iso8601(t) + "," + fmt_g(v, 17) + "\n";
    atomic_write_file(dir / "model_series.csv", flat);
  }

  // Horizon SVG plots: lead hour vs MW, model against baseline.
  {
    std::vector<double> x(static_cast<size_t>(horizon));
    for (int64_t h = 0; h < horizon; ++h) x[static_cast<size_t>(h)] = static_cast<double>(h + 1);
    SvgChartOptions copt;
    copt.x_label = "lead hour";
    copt.y_label = "MAE [MW]";
    copt.title = "Per-lead-hour MAE (model vs " + baseline_label + ")";
    atomic_write_file(dir / "horizon_mae.svg",
                      svg_line_chart(x,
                                     {{"model", "#1f77b4", cmp.model.horizon_mae},
                                      {baseline_label, "#d62728", cmp.baseline.horizon_mae}},
                                     copt));
    copt.y_label = "RMSE [MW]";
    copt.title = "Per-lead-hour RMSE (model vs " + baseline_label + ")";
    atomic_write_file(dir / "horizon_rmse.svg",
                      svg_line_chart(x,
                                     {{"model", "#1f77b4", cmp.model.horizon_rmse},
                                      {baseline_label, "#d62728", cmp.baseline.horizon_rmse}},
                                     copt));
  }

  manifest.set_config("split", o.split);
  manifest.set_config("baseline", baseline_label);
  if (!o.lead_hours.empty()) manifest.set_config("lead_hours", o.lead_hours);
  for (const char* f : {"report.csv", "horizon.csv", "predictions.csv", "model_series.csv",
                        "horizon_mae.svg", "horizon_rmse.svg"}) {
    manifest.add_output(dir / f);
  }
  manifest.write(dir / "manifest.txt");

  std::cout << "samples " << cmp.model.sample_count << "\n";
  std::cout << report_csv(cmp);
  std::cout << "report_dir " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

struct ForecastOptions {
  std::string ckpt;
  std::string input;
  std::string capacity;
  std::string out;
};

int cmd_forecast(const ForecastOptions& o) {
  RunManifest manifest("forecast");
  manifest.add_input(o.ckpt);
  manifest.add_input(o.input);
  manifest.add_input(o.capacity);
  const CheckpointData ck = load_checkpoint(o.ckpt);
  ForecastModel<float> model = restore_model<float>(ck);
  const int64_t horizon = model.tr_cfg.horizon;

  GridSeries grid = load_grid_file(o.input);
  if (grid.frames < horizon) {
    throw DataError("forecast input holds " + std::to_string(grid.frames) +
                    " hourly frames; the model requires at least " + std::to_string(horizon));
  }
  if (grid.channel_names != ck.stats.channels) {
    throw DataError("forecast input channels do not match checkpoint variable set " +
                    variable_set_name(ck.variables));
  }
  const GridSeries normalized = normalize_fields(grid, ck.stats);

  const HourlySeries cap_anchor = import_entsoe_csv(o.capacity, CsvKind::capacity);
  const CapacitySeries capacity = capacity_from_series(cap_anchor);
  const int64_t first = grid.start_hour;
  const int64_t last = first + horizon - 1;
  if (first < capacity.anchor_hours.front() || last > capacity.anchor_hours.back()) {
    throw DataError("capacity series does not cover the forecast window " +
                    format_iso8601(static_cast<uint64_t>(first)) + " to " +
                    format_iso8601(static_cast<uint64_t>(last)));
  }

  auto maps = make_tensor<float>({horizon, grid.channels, grid.height, grid.width});
  const size_t n = static_cast<size_t>(maps->numel());
  for (size_t i = 0; i < n; ++i) maps->data[i] = normalized.values[i];
  const std::vector<float> frac = model.predict(maps);

  std::string csv = "timestamp_utc,forecast_mw\n";
  for (int64_t h = 0; h < horizon; ++h) {
    const int64_t hour = first + h;
    const double mw = static_cast<double>(frac[static_cast<size_t>(h)]) * capacity.at(hour);
    csv += format_iso8601(static_cast<uint64_t>(hour)) + "," + fmt_g(mw, 10) + "\n";
  }
  const fs::path out_path(o.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  atomic_write_file(out_path, csv);
  manifest.add_output(out_path);
  manifest.write(out_path.parent_path() / (out_path.stem().string() + "_manifest.txt"));
  std::cout << "forecast " << out_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-weather power forecasting pipeline"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* sg = app.add_subcommand("gen-data", "Generate a seeded synthetic dataset");
  sg->add_option("--seed", gen.seed, "Random seed");
  sg->add_option("--days", gen.days, "Total dataset days (80/10/10 split)");
  sg->add_option("--grid", gen.grid, "Grid extent HxW (default 16x16)");
  sg->add_option("--variables", gen.variables, "wind|solar");
  sg->add_option("--out", gen.out, "Output directory")->required();

  TrainOptions tro;
  CLI::App* st = app.add_subcommand("train", "Train a model on a dataset directory");
  st->add_option("--data", tro.data, "Dataset directory")->required();
  st->add_option("--variables", tro.variables, "wind|solar");
  st->add_option("--epochs", tro.epochs, "Maximum epochs");
  st->add_option("--patience", tro.patience, "Early-stopping patience");
  st->add_option("--lr", tro.lr, "Learning rate");
  st->add_option("--batch", tro.batch, "Batch size");
  st->add_option("--seed", tro.seed, "Random seed");
  st->add_option("--threads", tro.threads, "Worker threads");
  st->add_option("--horizon", tro.horizon, "Forecast horizon, hours");
  st->add_option("--kernel", tro.kernel, "Encoder kernel size");
  st->add_option("--out", tro.out, "Checkpoint output path")->required();
  st->add_option("--loss-log", tro.loss_log, "Loss log CSV path (default <out>_loss.csv)");

  EvalOptions evo;
  CLI::App* se = app.add_subcommand("evaluate", "Evaluate a checkpoint on a split");
  se->add_option("--ckpt", evo.ckpt, "Checkpoint path")->required();
  se->add_option("--data", evo.data, "Dataset directory")->required();
  se->add_option("--split", evo.split, "train|validation|test");
  se->add_option("--baseline", evo.baseline, "climatology|persistence|csv:PATH");
  se->add_option("--report", evo.report_dir, "Report output directory")->required();
  se->add_option("--lead-hours", evo.lead_hours, "Restrict scoring to lead hours A-B (1-based)");

  ForecastOptions fo;
  CLI::App* sf = app.add_subcommand("forecast", "Forecast from a weather file");
  sf->add_option("--ckpt", fo.ckpt, "Checkpoint path")->required();
  sf->add_option("--input", fo.input, "WGRD weather input")->required();
  sf->add_option("--capacity", fo.capacity, "Capacity anchor CSV")->required();
  sf->add_option("--out", fo.out, "Forecast CSV output path")->required();

  try {
    app.parse(argc, argv);
    if (sg->parsed()) return cmd_gen_data(gen);
    if (st->parsed()) return cmd_train(tro);
    if (se->parsed()) return cmd_evaluate(evo);
    if (sf->parsed()) return cmd_forecast(fo);
    throw UsageError("no subcommand given");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
