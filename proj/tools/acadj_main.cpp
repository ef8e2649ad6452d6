// Copyright 2026 The acadj Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// acadj command-line entry point.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acadj/adjust.hpp"
#include "acadj/bench.hpp"
#include "acadj/classical.hpp"
#include "acadj/error.hpp"
#include "acadj/series.hpp"
#include "acadj/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOutEnv = "ACADJ_OUT_DIR";

// Options registered on a subcommand. Each set flag becomes one key of the
// override object, applied on top of the config file.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& flag, const std::string& key, const std::string& desc) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app_->add_option(flag, *value, desc);
    setters_.push_back([o, value, key](json& j) {
      if (o->count()) j[key] = *value;
    });
    keys_.insert(key);
    return o;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, const std::string& desc,
                    bool value_when_set = true) {
    CLI::Option* o = app_->add_flag(flag, desc);
    setters_.push_back([o, key, value_when_set](json& j) {
      if (o->count()) j[key] = value_when_set;
    });
    keys_.insert(key);
    return o;
  }

  void config_file_option() {
    app_->add_option("--config", config_path_, "JSON file of settings; flags take precedence")
        ->check(CLI::ExistingFile);
  }

  // defaults < config file < flags
  json resolve(const json& defaults) const {
    json merged = defaults;
    if (!config_path_.empty()) {
      std::ifstream f(config_path_);
      json file;
      try {
        file = json::parse(f);
      } catch (const json::parse_error& e) {
        throw acadj::InputError("config file " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw acadj::InputError("config file must hold a JSON object");
      for (const auto& [k, v] : file.items()) {
        if (!keys_.count(k)) throw acadj::InputError("unknown config key '" + k + "'");
        merged[k] = v;
      }
    }
    json flags = json::object();
    for (const auto& s : setters_) s(flags);
    for (const auto& [k, v] : flags.items()) merged[k] = v;
    return merged;
  }

  std::string config_path() const { return config_path_; }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> setters_;
  std::set<std::string> keys_;
  std::string config_path_;
};

void add_seed(Settings& s) { s.add<std::uint64_t>("--seed", "seed", "Root seed"); }

void add_out(Settings& s) {
  s.add<std::string>("--out", "out",
                     std::string("Output directory (default: $") + kOutEnv + " or ./acadj_out)");
}

void add_training(Settings& s) {
  s.add<std::string>("--mode", "mode", "Adjustment mode {none|input|output|both}");
  s.add<double>("--freeze-rho", "freeze_rho", "Hold rho fixed at this value");
  s.add<std::string>("--rho-dim", "rho_dim", "rho dimension {auto|scalar|vector}; auto is per-series from 300 series");
  s.add<std::size_t>("--window", "window", "Window length W");
  s.add<std::size_t>("--epochs", "epochs", "Maximum epochs");
  s.add<std::size_t>("--patience", "patience", "Early-stopping patience in epochs");
  s.add<std::size_t>("--batch", "batch_size", "Mini-batch size");
  s.add<double>("--lr-model", "lr_model", "Adam learning rate for the model");
  s.add<double>("--lr-rho", "lr_rho", "Adam learning rate for rho");
  s.add<std::size_t>("--hidden", "hidden", "Hidden width of the forecaster");
  s.add<std::size_t>("--layers", "layers", "Layers of the forecaster");
  s.add<double>("--train-frac", "train_frac", "Chronological training fraction");
  s.add<double>("--valid-frac", "valid_frac", "Chronological validation fraction");
  s.add<std::size_t>("--ignore-epochs", "ignore_initial_valid_epochs",
                     "Validation losses of the first k epochs never become the best");
  s.add<std::size_t>("--mpw-max-outer", "mpw_max_outer", "Outer iterations of the alternating baseline");
  s.add<double>("--mpw-tol", "mpw_tol", "Stop the alternating baseline when |delta rho| is below this");
  s.flag("--timing", "record_timing", "Record wall-clock seconds in outputs (breaks bit-for-bit output)");
  s.flag("--no-header", "header", "Input CSV has no header row", false);
}

json forecast_defaults() {
  json j = acadj::TrainConfig{}.to_json();
  j["seed"] = 1;
  j["hidden"] = 64;
  j["layers"] = 4;
  j["train_frac"] = 0.6;
  j["valid_frac"] = 0.2;
  j["header"] = true;
  j["workers"] = 1;
  return j;
}

acadj::TrainConfig train_config(const json& s) {
  acadj::TrainConfig c = acadj::TrainConfig::from_json(s);
  c.validate();
  return c;
}

acadj::SplitSpec split_spec(const json& s) {
  acadj::SplitSpec sp;
  sp.train_frac = s.at("train_frac").get<double>();
  sp.valid_frac = s.at("valid_frac").get<double>();
  sp.test_frac = 1.0 - sp.train_frac - sp.valid_frac;
  sp.validate();
  return sp;
}

fs::path out_dir(const json& s) {
  fs::path p;
  if (s.contains("out")) {
    p = s.at("out").get<std::string>();
  } else if (const char* env = std::getenv(kOutEnv); env && *env) {
    p = env;
  } else {
    p = "acadj_out";
  }
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw acadj::Error("cannot create output directory " + p.string());
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw acadj::Error("cannot write " + path.string());
  f << text;
  if (!f) throw acadj::Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json effective(const std::string& command, const json& settings) {
  json e = settings;
  e.erase("out");
  return {{"command", command}, {"version", ACADJ_VERSION}, {"settings", e}};
}

std::string fmt(double v) { return std::isfinite(v) ? acadj::format_double(v) : "undefined"; }

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

acadj::ModelSpec forecaster_spec(const json& s, std::size_t series) {
  return acadj::ModelSpec::window_forecaster(s.at("window").get<std::size_t>(), series,
                                             s.at("hidden").get<std::size_t>(),
                                             s.at("layers").get<std::size_t>());
}

int cmd_fit(const json& s, const std::string& csv, const std::string& method) {
  const acadj::SeriesFrame frame = acadj::load_csv(csv, s.at("header").get<bool>());
  const acadj::TrainConfig cfg = train_config(s);
  const acadj::Splits parts = acadj::split_chronological(frame, split_spec(s), cfg.window);
  const acadj::ModelSpec spec = forecaster_spec(s, frame.width());
  acadj::FitReport rep;
  if (method == "mpw") {
    rep = acadj::naive_mpw_train(parts.train, parts.valid, parts.test, spec, cfg, cfg.mpw_max_outer);
  } else {
    rep = acadj::joint_train(parts.train, parts.valid, parts.test, spec, cfg);
  }
  const fs::path dir = out_dir(s);
  json report = rep.to_json();
  json eff = effective("fit", s);
  eff["input"] = csv;
  eff["method"] = method;
  report["effective_config"] = eff;
  json ckpt = rep.checkpoint;
  ckpt["effective_config"] = eff;
  write_json(dir / "fit_report.json", report);
  write_json(dir / "checkpoint.json", ckpt);
  write_text(dir / "loss_train.csv", acadj::loss_curve_csv(rep.curves.train));
  write_text(dir / "loss_valid.csv", acadj::loss_curve_csv(rep.curves.valid));
  std::cout << "method: " << rep.method << "\n"
            << "rho: " << join(rep.rho) << "\n"
            << "best epoch: " << rep.best_epoch << " of " << rep.epochs_run << "\n"
            << "test rrmse: " << fmt(rep.test_rrmse) << "\n"
            << "remaining autocorrelation: " << fmt(rep.remaining_autocorrelation) << "\n"
            << "wrote " << (dir / "fit_report.json").string() << "\n";
  return 0;
}

// Left-aligned columns separated by two spaces.
std::string aligned_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      line += r[c];
      if (c + 1 < r.size()) line += std::string(width[c] - r[c].size() + 2, ' ');
    }
    out += line + "\n";
  }
  return out;
}

std::string verdict(double value, const acadj::stats::CriticalValueTable& table) {
  const double t99 = table.threshold(0.01), t95 = table.threshold(0.05), t90 = table.threshold(0.10);
  if (value >= t99) return "adjust recommended at 99% (>= " + fmt(t99) + ")";
  if (value >= t95) return "adjust recommended at 95% (>= " + fmt(t95) + "), not at 99%";
  if (value >= t90) return "adjust suggested at 90% (>= " + fmt(t90) + "), not at 95%";
  return "no adjustment indicated (< " + fmt(t90) + " at 90%)";
}

int cmd_diagnose(const json& s, const std::string& csv, const std::string& criticals, bool as_json) {
  const acadj::SeriesFrame frame = acadj::load_csv(csv, s.at("header").get<bool>());
  acadj::stats::CriticalValueTable table = acadj::stats::default_critical_values();
  if (!criticals.empty()) {
    std::ifstream f(criticals);
    try {
      table = acadj::stats::CriticalValueTable::from_json(json::parse(f));
    } catch (const json::exception& e) {
      throw acadj::InputError("critical value file: " + std::string(e.what()));
    }
  }
  json series = json::array();
  double sum = 0.0;
  std::size_t defined = 0;
  std::ostringstream text;
  std::vector<std::vector<std::string>> rows{{"series", "rho_hat", "durbin_watson"}};
  for (std::size_t c = 0; c < frame.width(); ++c) {
    const auto e = frame.values().column(c);
    json row = {{"name", frame.names()[c]}};
    double rho = NAN, dw = NAN;
    try {
      rho = acadj::stats::residual_autocorrelation(e);
      sum += rho;
      ++defined;
    } catch (const acadj::UndefinedStatistic&) {
    }
    try {
      dw = acadj::stats::durbin_watson(e);
    } catch (const acadj::UndefinedStatistic&) {
    }
    row["rho_hat"] = std::isfinite(rho) ? json(rho) : json(nullptr);
    row["durbin_watson"] = std::isfinite(dw) ? json(dw) : json(nullptr);
    series.push_back(row);
    rows.push_back({frame.names()[c], fmt(rho), fmt(dw)});
  }
  text << aligned_table(rows);
  json out = {{"schema", "acadj.diagnosis/1"}, {"input", csv}, {"series", series},
              {"critical_values", table.to_json()}};
  if (defined == 0) {
    out["averaged_rho_hat"] = nullptr;
    out["verdict"] = "undefined";
    text << "averaged rho_hat: undefined (residuals are constant zero; the lag-1 ratio has a zero denominator)\n"
         << "verdict: undefined\n";
  } else {
    const double avg = sum / static_cast<double>(defined);
    out["averaged_rho_hat"] = avg;
    out["verdict"] = verdict(avg, table);
    text << "averaged rho_hat: " << fmt(avg) << " over " << defined << " series\n"
         << "verdict: " << out["verdict"].get<std::string>() << "\n";
  }
  out["effective_config"] = effective("diagnose", s);
  std::cout << (as_json ? out.dump(2) + "\n" : text.str());
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw acadj::InputError("bad number '" + item + "' in list");
    }
  }
  return out;
}

int cmd_gridsearch(const json& s, const std::string& csv) {
  const acadj::SeriesFrame frame = acadj::load_csv(csv, s.at("header").get<bool>());
  const acadj::TrainConfig cfg = train_config(s);
  const acadj::Splits parts = acadj::split_chronological(frame, split_spec(s), cfg.window);
  const acadj::ModelSpec spec = forecaster_spec(s, frame.width());
  const std::vector<double> grid =
      s.contains("grid") ? parse_list(s.at("grid").get<std::string>()) : acadj::default_rho_grid();
  const acadj::GridSearchResult res =
      acadj::grid_search_rho(parts.train, parts.valid, parts.test, spec, cfg, grid);
  const fs::path dir = out_dir(s);
  json j = res.to_json();
  j["effective_config"] = effective("gridsearch-rho", s);
  j["effective_config"]["input"] = csv;
  j["effective_config"]["grid"] = grid;
  write_json(dir / "grid_search.json", j);
  std::string table = "rho,valid_rrmse\n";
  for (const auto& [rho, score] : res.table) table += acadj::format_double(rho) + "," + fmt(score) + "\n";
  write_text(dir / "grid_search.csv", table);
  std::cout << "grid points: " << grid.size() << "\n" << table << "best rho: " << fmt(res.best_rho) << "\n";
  return 0;
}

int cmd_simulate(const json& s) {
  const double rho = s.at("rho").get<double>();
  const double sigma = s.at("sigma").get<double>();
  const std::size_t length = s.at("T").get<std::size_t>();
  const std::size_t series = s.at("series").get<std::size_t>();
  if (series == 0 || length == 0) throw acadj::InputError("T and series must be positive");
  acadj::Rng rng = acadj::make_rng(s.at("seed").get<std::uint64_t>());
  const std::string kind = s.at("kind").get<std::string>();
  const fs::path dir = out_dir(s);
  if (kind == "forecast") {
    acadj::bench::ForecastFixture fx;
    fx.T = length;
    fx.N = series;
    fx.rho = rho;
    fx.sigma = sigma;
    fx.amplitude = s.at("amplitude").get<double>();
    acadj::save_csv(acadj::bench::synthetic_forecast_frame(fx, rng), dir / "simulated.csv");
    write_json(dir / "simulated.json", effective("simulate", s));
    std::cout << "wrote " << (dir / "simulated.csv").string() << "\n";
    return 0;
  }
  if (kind != "ar1") throw acadj::InputError("unknown kind '" + kind + "' (ar1|forecast)");
  acadj::Matrix m(length, series);
  for (std::size_t k = 0; k < series; ++k) {
    const auto e = acadj::stats::simulate_ar1(rho, sigma, length, rng);
    for (std::size_t t = 0; t < length; ++t) m(t, k) = e[t];
  }
  std::vector<std::string> names(series);
  for (std::size_t k = 0; k < series; ++k) names[k] = "e" + std::to_string(k);
  acadj::save_csv(acadj::SeriesFrame(std::move(m), names), dir / "simulated.csv");
  write_json(dir / "simulated.json", effective("simulate", s));
  std::cout << "wrote " << (dir / "simulated.csv").string() << "\n";
  return 0;
}

std::vector<acadj::bench::Method> methods_of(const json& s) {
  return acadj::bench::parse_methods(s.at("methods").get<std::string>());
}

acadj::bench::PoolOptions pool_of(const json& s) {
  acadj::bench::PoolOptions p;
  p.workers = s.at("workers").get<std::size_t>();
  if (p.workers == 0) throw acadj::InputError("workers must be positive");
  p.record_timing = s.value("record_timing", false);
  p.progress = [](std::size_t done, std::size_t total) {
    std::cerr << "\r" << done << "/" << total << " runs" << (done == total ? "\n" : "") << std::flush;
  };
  return p;
}

void write_bench_outputs(const fs::path& dir, const std::vector<acadj::bench::RunRecord>& records,
                         const json& eff) {
  acadj::bench::write_jsonl(records, dir / "runs.jsonl");
  json summary = acadj::bench::summarize(records);
  summary["effective_config"] = eff;
  write_json(dir / "summary.json", summary);
  write_json(dir / "manifest.json", eff);
  write_text(dir / "rho_error.csv", acadj::bench::rho_error_csv(summary));
  write_text(dir / "remaining_autocorrelation_hist.csv", acadj::bench::histogram_csv(summary));
  for (const auto& cell : summary.at("cells")) {
    std::cout << "cell " << cell.at("config_hash").get<std::string>() << " " << cell.at("cell").dump()
              << "\n";
    for (const auto& [m, st] : cell.at("methods").items())
      std::cout << "  " << m << ": mean " << cell.at("metric").get<std::string>() << " "
                << st.at(cell.at("metric") == "test_rrmse" ? "mean_test_rrmse" : "mean_test_mse").dump()
                << ", mean |remaining autocorrelation| "
                << st.at("mean_abs_remaining_autocorrelation").dump() << "\n";
    for (const auto& c : cell.at("comparisons"))
      std::cout << "  wo vs " << c.at("method").get<std::string>() << ": improvement "
                << c.at("avg_relative_improvement").dump() << "%, p " << c.at("p_value").dump() << "\n";
  }
}

int cmd_bench_regression(const json& s) {
  acadj::bench::RegressionTraining tr;
  tr.epochs = s.at("epochs").get<std::size_t>();
  tr.batch_size = s.at("batch_size").get<std::size_t>();
  tr.lr_model = s.at("lr_model").get<double>();
  tr.lr_rho = s.at("lr_rho").get<double>();
  tr.hidden = s.at("hidden").get<std::size_t>();
  tr.layers = s.at("layers").get<std::size_t>();
  tr.mpw_max_outer = s.at("mpw_max_outer").get<std::size_t>();
  tr.mpw_tol = s.at("mpw_tol").get<double>();
  tr.validate();

  acadj::bench::ExperimentGrid grid;
  if (s.value("full_grid", false)) {
    grid = acadj::bench::ExperimentGrid::full();
  } else if (s.contains("T") || s.contains("N") || s.contains("rho") || s.contains("sigma")) {
    grid.T_set = {s.value("T", std::size_t{400})};
    grid.N_set = {s.value("N", std::size_t{6})};
    grid.rho_set = {s.value("rho", 0.75)};
    grid.sigma_set = {s.value("sigma", 0.02)};
  } else {
    grid = acadj::bench::ExperimentGrid::default_slice();
  }
  grid.seeds_per_cell = s.at("seeds").get<std::size_t>();
  grid.validate();

  const auto records = acadj::bench::run_regression_grid(grid, methods_of(s), tr,
                                                         s.at("seed").get<std::uint64_t>(), pool_of(s));
  json eff = effective("bench-regression", s);
  eff["grid"] = grid.to_json();
  eff["training"] = tr.to_json();
  write_bench_outputs(out_dir(s), records, eff);
  return 0;
}

int cmd_bench_forecast(const json& s, const std::string& csv) {
  const acadj::SeriesFrame frame = acadj::load_csv(csv, s.at("header").get<bool>());
  const acadj::TrainConfig cfg = train_config(s);
  const auto records = acadj::bench::run_forecast_experiment(
      frame, forecaster_spec(s, frame.width()), cfg, split_spec(s), methods_of(s),
      s.at("seeds").get<std::size_t>(), s.at("seed").get<std::uint64_t>(), pool_of(s));
  json eff = effective("bench-forecast", s);
  eff["input"] = csv;
  write_bench_outputs(out_dir(s), records, eff);
  return 0;
}

int cmd_criticals(const json& s, const std::string& from) {
  json out;
  if (from.empty()) {
    out = acadj::stats::default_critical_values().to_json();
  } else {
    const auto records = acadj::bench::read_jsonl(from);
    const std::string method = s.value("method", std::string("wo"));
    std::vector<double> samples;
    for (const auto& r : records)
      if (r.method == method && !r.diverged && std::isfinite(r.remaining_autocorrelation))
        samples.push_back(r.remaining_autocorrelation);
    const std::vector<double> tails =
        s.contains("tails") ? parse_list(s.at("tails").get<std::string>()) : std::vector<double>{};
    out = acadj::stats::empirical_critical_values(samples, tails).to_json();
    out["method"] = method;
  }
  const auto table = acadj::stats::CriticalValueTable::from_json(out);
  for (const auto& [tail, value] : table.entries)
    std::cout << "tail " << acadj::format_double(tail) << ": " << acadj::format_double(value) << "\n";
  if (s.contains("out")) {
    json file = out;
    file["effective_config"] = effective("criticals", s);
    file["effective_config"]["from"] = from;
    write_json(out_dir(s) / "critical_values.json", file);
  }
  return 0;
}

int cmd_classical(const json& s, const std::string& csv) {
  const acadj::SeriesFrame frame = acadj::load_csv(csv, s.at("header").get<bool>());
  if (frame.width() < 2) throw acadj::InputError("need a target column and at least one regressor");
  std::size_t target = frame.width() - 1;
  if (s.contains("target")) {
    const std::string name = s.at("target").get<std::string>();
    const auto it = std::find(frame.names().begin(), frame.names().end(), name);
    if (it == frame.names().end()) throw acadj::InputError("no column named '" + name + "'");
    target = static_cast<std::size_t>(it - frame.names().begin());
  }
  acadj::Matrix x(frame.length(), frame.width() - 1);
  std::vector<std::string> names;
  for (std::size_t c = 0, k = 0; c < frame.width(); ++c) {
    if (c == target) continue;
    for (std::size_t t = 0; t < frame.length(); ++t) x(t, k) = frame(t, c);
    names.push_back(frame.names()[c]);
    ++k;
  }
  const std::vector<double> y = frame.values().column(target);
  if (s.value("intercept", true)) {
    x = acadj::classical::with_intercept(x);
    names.insert(names.begin(), "intercept");
  }
  acadj::classical::IterationOptions opts;
  opts.tol = s.at("tol").get<double>();
  opts.max_iters = s.at("max_iters").get<std::size_t>();
  const std::string method = s.at("method").get<std::string>();
  acadj::classical::LinearFit fit;
  if (method == "ols") fit = acadj::classical::ols_fit(x, y);
  else if (method == "co") fit = acadj::classical::cochrane_orcutt(x, y, false, opts);
  else if (method == "co-iter") fit = acadj::classical::cochrane_orcutt(x, y, true, opts);
  else if (method == "pw") fit = acadj::classical::prais_winsten(x, y, opts);
  else throw acadj::InputError("unknown method '" + method + "' (ols|co|co-iter|pw)");
  std::cout << fit.to_text(names);
  if (s.contains("out")) {
    json j = fit.to_json();
    j["columns"] = names;
    j["effective_config"] = effective("classical-fit", s);
    j["effective_config"]["input"] = csv;
    write_json(out_dir(s) / "linear_fit.json", j);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adjusting neural forecasters and regressors for first-order autocorrelated errors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ACADJ_VERSION);

  std::string csv, from, criticals_path, fit_method = "joint";
  bool as_json = false;

  auto* fit = app.add_subcommand("fit", "Train a window forecaster on a CSV and write a fit report");
  Settings fit_s(fit);
  fit->add_option("csv", csv, "Input CSV, one column per series")->required()->check(CLI::ExistingFile);
  fit->add_option("--method", fit_method, "joint (rho learned with the model) or mpw (alternating)")
      ->check(CLI::IsMember({"joint", "mpw"}));
  add_seed(fit_s);
  add_out(fit_s);
  add_training(fit_s);
  fit_s.config_file_option();

  auto* diag = app.add_subcommand("diagnose", "Lag-1 residual autocorrelation, Durbin-Watson and a verdict");
  Settings diag_s(diag);
  diag->add_option("csv", csv, "Residual CSV, one column per series")->required()->check(CLI::ExistingFile);
  diag->add_option("--criticals", criticals_path, "Critical value table JSON (default: built-in table)")
      ->check(CLI::ExistingFile);
  diag->add_flag("--json", as_json, "Print JSON instead of text");
  diag_s.flag("--no-header", "header", "Input CSV has no header row", false);
  diag_s.config_file_option();

  auto* grid = app.add_subcommand("gridsearch-rho", "Train with rho frozen at each grid value");
  Settings grid_s(grid);
  grid->add_option("csv", csv, "Input CSV")->required()->check(CLI::ExistingFile);
  grid_s.add<std::string>("--grid", "grid", "Comma-separated rho values (default: 15-point grid)");
  add_seed(grid_s);
  add_out(grid_s);
  add_training(grid_s);
  grid_s.config_file_option();

  auto* sim = app.add_subcommand("simulate", "Simulate stationary AR(1) series to CSV");
  Settings sim_s(sim);
  sim_s.add<double>("--rho", "rho", "AR coefficient, |rho| < 1");
  sim_s.add<double>("--sigma", "sigma", "Innovation standard deviation");
  sim_s.add<std::size_t>("--T", "T", "Length");
  sim_s.add<std::size_t>("--series", "series", "Independent series");
  sim_s.add<std::string>("--kind", "kind", "ar1 (pure errors) or forecast (periodic signal plus AR(1) errors)");
  sim_s.add<double>("--amplitude", "amplitude", "Signal amplitude for --kind forecast");
  add_seed(sim_s);
  add_out(sim_s);
  sim_s.config_file_option();

  auto* breg = app.add_subcommand("bench-regression", "Synthetic regression benchmark with AR(1) errors");
  Settings breg_s(breg);
  breg_s.add<std::size_t>("--T", "T", "Single cell: sample size");
  breg_s.add<std::size_t>("--N", "N", "Single cell: inputs");
  breg_s.add<double>("--rho", "rho", "Single cell: true rho");
  breg_s.add<double>("--sigma", "sigma", "Single cell: innovation std");
  breg_s.flag("--full-grid", "full_grid", "Run every cell of the full grid (48,750 runs per method)");
  breg_s.add<std::size_t>("--seeds", "seeds", "Datasets per cell");
  breg_s.add<std::string>("--methods", "methods", "Comma-separated subset of wo,mpw,w");
  breg_s.add<std::size_t>("--workers", "workers", "Worker threads");
  breg_s.add<std::size_t>("--epochs", "epochs", "Epochs per run");
  breg_s.add<std::size_t>("--batch", "batch_size", "Mini-batch size");
  breg_s.add<double>("--lr-model", "lr_model", "Adam learning rate for the model");
  breg_s.add<double>("--lr-rho", "lr_rho", "Adam learning rate for rho");
  breg_s.add<std::size_t>("--hidden", "hidden", "Hidden width");
  breg_s.add<std::size_t>("--layers", "layers", "Fully-connected layers");
  breg_s.add<std::size_t>("--mpw-max-outer", "mpw_max_outer", "Outer iterations of mpw");
  breg_s.add<double>("--mpw-tol", "mpw_tol", "mpw stopping tolerance on rho");
  breg_s.flag("--timing", "record_timing", "Record wall-clock seconds (breaks bit-for-bit output)");
  add_seed(breg_s);
  add_out(breg_s);
  breg_s.config_file_option();

  auto* bfc = app.add_subcommand("bench-forecast", "Seed-paired forecasting runs on a CSV");
  Settings bfc_s(bfc);
  bfc->add_option("csv", csv, "Input CSV")->required()->check(CLI::ExistingFile);
  bfc_s.add<std::size_t>("--seeds", "seeds", "Seeds per method");
  bfc_s.add<std::string>("--methods", "methods", "Comma-separated subset of wo,mpw,w");
  bfc_s.add<std::size_t>("--workers", "workers", "Worker threads");
  add_seed(bfc_s);
  add_out(bfc_s);
  add_training(bfc_s);
  bfc_s.config_file_option();

  auto* crit = app.add_subcommand("criticals", "Critical values of remaining autocorrelation");
  Settings crit_s(crit);
  crit->add_option("--from", from, "Run records (JSON lines); omitted: print the built-in table")
      ->check(CLI::ExistingFile);
  crit_s.add<std::string>("--method", "method", "Method whose runs supply samples (default wo)");
  crit_s.add<std::string>("--tails", "tails", "Comma-separated right-tail probabilities");
  add_out(crit_s);
  crit_s.config_file_option();

  auto* cls = app.add_subcommand("classical-fit", "OLS, Cochrane-Orcutt or Prais-Winsten on a CSV");
  Settings cls_s(cls);
  cls->add_option("csv", csv, "Input CSV: regressors and one target column")->required()->check(CLI::ExistingFile);
  cls_s.add<std::string>("--target", "target", "Target column name (default: last column)");
  cls_s.add<std::string>("--method", "method", "ols|co|co-iter|pw");
  cls_s.flag("--no-intercept", "intercept", "Do not add an intercept column", false);
  cls_s.add<double>("--tol", "tol", "Tolerance on rho for iterated fits");
  cls_s.add<std::size_t>("--max-iters", "max_iters", "Iteration cap");
  cls_s.flag("--no-header", "header", "Input CSV has no header row", false);
  add_out(cls_s);
  cls_s.config_file_option();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit) return cmd_fit(fit_s.resolve(forecast_defaults()), csv, fit_method);
    if (*diag) return cmd_diagnose(diag_s.resolve({{"header", true}}), csv, criticals_path, as_json);
    if (*grid) return cmd_gridsearch(grid_s.resolve(forecast_defaults()), csv);
    if (*sim)
      return cmd_simulate(sim_s.resolve({{"rho", 0.5}, {"sigma", 1.0}, {"T", 1000}, {"series", 1}, {"seed", 1},
                                          {"kind", "ar1"}, {"amplitude", 1.0}}));
    if (*breg) {
      const acadj::bench::RegressionTraining tr;
      json d = tr.to_json();
      d.erase("small_n");
      d.erase("ignore_epochs_small_n");
      d["seed"] = 1;
      d["seeds"] = 30;
      d["methods"] = "wo,mpw,w";
      d["workers"] = 1;
      return cmd_bench_regression(breg_s.resolve(d));
    }
    if (*bfc) {
      json d = forecast_defaults();
      d["seeds"] = 5;
      d["methods"] = "wo,w";
      return cmd_bench_forecast(bfc_s.resolve(d), csv);
    }
    if (*crit) return cmd_criticals(crit_s.resolve(json::object()), from);
    if (*cls)
      return cmd_classical(cls_s.resolve({{"method", "ols"}, {"tol", 1e-6}, {"max_iters", 50},
                                          {"header", true}, {"intercept", true}}),
                           csv);
  } catch (const acadj::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: bad setting: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
