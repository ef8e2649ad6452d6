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

#include "acadj/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "acadj/error.hpp"
#include "acadj/stats.hpp"

namespace acadj::bench {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kDataStream = 0xda7a;
constexpr std::uint64_t kTrainStream = 0x7a1e;

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json opt_num(const std::optional<double>& v) {
  return v ? num(*v) : nlohmann::json(nullptr);
}

double get_num(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return kNaN;
  return j.at(key).get<double>();
}

std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_value(const std::string& hex) { return std::stoull(hex, nullptr, 16); }

std::vector<double> column_means(const Matrix& x) {
  std::vector<double> m(x.cols, 0.0);
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) m[c] += x(r, c);
  for (double& v : m) v /= static_cast<double>(x.rows);
  return m;
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double safe_autocorrelation(std::span<const double> e) {
  try {
    return stats::residual_autocorrelation(e);
  } catch (const UndefinedStatistic&) {
    return kNaN;
  }
}

Matrix rows_range(const Matrix& x, std::size_t begin, std::size_t end) {
  Matrix out(end - begin, x.cols);
  std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(begin * x.cols),
            x.data.begin() + static_cast<std::ptrdiff_t>(end * x.cols), out.data.begin());
  return out;
}

template <typename T>
std::vector<std::function<T()>> with_progress(std::vector<std::function<T()>> tasks,
                                              const PoolOptions& pool) {
  if (!pool.progress) return tasks;
  auto done = std::make_shared<std::atomic<std::size_t>>(0);
  auto mutex = std::make_shared<std::mutex>();
  const std::size_t total = tasks.size();
  for (auto& t : tasks) {
    t = [inner = std::move(t), done, mutex, total, cb = pool.progress]() {
      T r = inner();
      const std::size_t d = ++*done;
      std::lock_guard<std::mutex> lock(*mutex);
      cb(d, total);
      return r;
    };
  }
  return tasks;
}

}  // namespace

void DgpConfig::validate() const {
  if (!(std::abs(rho) < 1.0)) throw InputError("DGP rho must satisfy |rho| < 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("DGP sigma must be >= 0");
  if (!(sigma_x >= 0.0) || !std::isfinite(sigma_x)) throw InputError("DGP sigma_x must be >= 0");
  if (T < 5) throw InputError("DGP needs T >= 5");
  if (N == 0) throw InputError("DGP needs N >= 1");
  if (!theta.empty() && theta.size() != N) throw InputError("theta length differs from N");
  if (test_multiplier == 0) throw InputError("test multiplier must be positive");
  if (!(valid_frac > 0.0 && valid_frac < 1.0)) throw InputError("valid_frac must lie in (0, 1)");
}

std::vector<double> DgpConfig::theta_or_ones() const {
  return theta.empty() ? std::vector<double>(N, 1.0) : theta;
}

nlohmann::json DgpConfig::to_json() const {
  return {{"T", T},         {"N", N},
          {"rho", rho},     {"sigma", sigma},
          {"sigma_x", sigma_x}, {"theta", theta_or_ones()},
          {"test_multiplier", test_multiplier}, {"valid_frac", valid_frac}};
}

DgpConfig DgpConfig::from_json(const nlohmann::json& j) {
  DgpConfig c;
  try {
    c.T = j.value("T", c.T);
    c.N = j.value("N", c.N);
    c.rho = j.value("rho", c.rho);
    c.sigma = j.value("sigma", c.sigma);
    c.sigma_x = j.value("sigma_x", c.sigma_x);
    if (j.contains("theta")) c.theta = j.at("theta").get<std::vector<double>>();
    c.test_multiplier = j.value("test_multiplier", c.test_multiplier);
    c.valid_frac = j.value("valid_frac", c.valid_frac);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad DGP config: ") + e.what());
  }
  if (c.theta == std::vector<double>(c.N, 1.0)) c.theta.clear();
  c.validate();
  return c;
}

double dgp_signal(std::span<const double> x, std::span<const double> theta) {
  double s = 1.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * theta[k];
  return std::tanh(s / std::sqrt(static_cast<double>(x.size())));
}

RegressionData generate_regression_dataset(const DgpConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto theta = cfg.theta_or_ones();
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw_x = [&](std::size_t rows) {
    Matrix x(rows, cfg.N);
    for (double& v : x.data) v = cfg.sigma_x * gauss(rng);
    return x;
  };
  const Matrix x_all = draw_x(cfg.T);
  const auto e_all = stats::simulate_ar1(cfg.rho, cfg.sigma, cfg.T, rng);
  const std::size_t test_len = cfg.test_multiplier * cfg.T;
  Matrix x_test = draw_x(test_len);
  auto e_test = stats::simulate_ar1(cfg.rho, cfg.sigma, test_len, rng);

  std::size_t n_valid = static_cast<std::size_t>(std::floor(cfg.valid_frac * cfg.T + 1e-9));
  n_valid = std::clamp<std::size_t>(n_valid, 1, cfg.T - 2);
  const std::size_t n_train = cfg.T - n_valid;

  RegressionData d;
  d.x_train = rows_range(x_all, 0, n_train);
  d.x_valid = rows_range(x_all, n_train, cfg.T);
  d.x_test = std::move(x_test);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    const double y = dgp_signal(x_all.row(t), theta) + e_all[t];
    (t < n_train ? d.y_train : d.y_valid).push_back(y);
  }
  d.y_test.resize(test_len);
  for (std::size_t t = 0; t < test_len; ++t)
    d.y_test[t] = dgp_signal(d.x_test.row(t), theta) + e_test[t];
  d.e_sample = e_all;
  d.e_test = std::move(e_test);
  return d;
}

void ForecastFixture::validate() const {
  if (!(std::abs(rho) < 1.0)) throw InputError("fixture rho must satisfy |rho| < 1");
  if (!(sigma >= 0.0)) throw InputError("fixture sigma must be >= 0");
  if (T < 5 || N == 0) throw InputError("fixture needs T >= 5 and N >= 1");
}

nlohmann::json ForecastFixture::to_json() const {
  return {{"T", T}, {"N", N}, {"rho", rho}, {"sigma", sigma}, {"amplitude", amplitude}};
}

SeriesFrame synthetic_forecast_frame(const ForecastFixture& fx, Rng& rng) {
  fx.validate();
  constexpr double kTwoPi = 6.283185307179586;
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  Matrix m(fx.T, fx.N);
  for (std::size_t k = 0; k < fx.N; ++k) {
    const double period = 12.0 + 48.0 * static_cast<double>(k) / static_cast<double>(fx.N);
    const double phi = phase(rng);
    const auto e = stats::simulate_ar1(fx.rho, fx.sigma, fx.T, rng);
    for (std::size_t t = 0; t < fx.T; ++t)
      m(t, k) = fx.amplitude * std::sin(kTwoPi * static_cast<double>(t) / period + phi) + e[t];
  }
  return SeriesFrame(std::move(m), default_names(fx.N));
}

LaggedSet regression_set(const Matrix& x, std::span<const double> y, std::span<const double> prev_x,
                         double prev_y) {
  if (x.rows != y.size()) throw ShapeError("regression inputs and targets differ in length");
  if (prev_x.size() != x.cols) throw ShapeError("lagged input row has wrong width");
  LaggedSet s;
  s.input = x;
  s.input_prev = Matrix(x.rows, x.cols);
  s.target = Matrix(x.rows, 1, std::vector<double>(y.begin(), y.end()));
  s.target_prev = Matrix(x.rows, 1);
  s.tiles = 1;
  s.series = x.cols;
  s.index.resize(x.rows);
  std::iota(s.index.begin(), s.index.end(), std::size_t{0});
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (std::size_t c = 0; c < x.cols; ++c) s.input_prev(t, c) = t ? x(t - 1, c) : prev_x[c];
    s.target_prev(t, 0) = t ? y[t - 1] : prev_y;
  }
  return s;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::wo: return "wo";
    case Method::mpw: return "mpw";
    case Method::w: return "w";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "wo") return Method::wo;
  if (s == "mpw") return Method::mpw;
  if (s == "w") return Method::w;
  throw InputError("unknown method '" + s + "' (wo|mpw|w)");
}

std::vector<Method> parse_methods(const std::string& csv) {
  std::vector<Method> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const Method m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) != out.end())
      throw InputError("method '" + item + "' listed twice");
    out.push_back(m);
  }
  if (out.empty()) throw InputError("no methods given");
  return out;
}

void RegressionTraining::validate() const {
  if (epochs == 0 || batch_size == 0 || hidden == 0 || layers == 0)
    throw InputError("regression training sizes must be positive");
  if (!(lr_model > 0.0) || !(lr_rho > 0.0)) throw InputError("learning rates must be positive");
  if (mpw_max_outer == 0 || !(mpw_tol > 0.0)) throw InputError("bad mpw settings");
}

TrainConfig RegressionTraining::train_config(std::size_t n_inputs, std::uint64_t seed,
                                             Method m) const {
  TrainConfig c;
  c.epochs = epochs;
  c.patience = epochs;  // every epoch runs; the best validation epoch is kept
  c.batch_size = batch_size;
  c.window = 1;
  c.lr_model = lr_model;
  c.lr_rho = lr_rho;
  c.seed = seed;
  c.mode = m == Method::w ? AdjustmentMode::both : AdjustmentMode::none;
  c.rho_dim = RhoDim::scalar;
  c.ignore_initial_valid_epochs = n_inputs <= small_n ? ignore_epochs_small_n : 0;
  c.mpw_tol = mpw_tol;
  c.mpw_max_outer = mpw_max_outer;
  return c;
}

nlohmann::json RegressionTraining::to_json() const {
  return {{"epochs", epochs},       {"batch_size", batch_size},
          {"lr_model", lr_model},   {"lr_rho", lr_rho},
          {"hidden", hidden},       {"layers", layers},
          {"small_n", small_n},     {"ignore_epochs_small_n", ignore_epochs_small_n},
          {"mpw_max_outer", mpw_max_outer}, {"mpw_tol", mpw_tol}};
}

RegressionTraining RegressionTraining::from_json(const nlohmann::json& j) {
  RegressionTraining t;
  try {
    t.epochs = j.value("epochs", t.epochs);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.lr_model = j.value("lr_model", t.lr_model);
    t.lr_rho = j.value("lr_rho", t.lr_rho);
    t.hidden = j.value("hidden", t.hidden);
    t.layers = j.value("layers", t.layers);
    t.small_n = j.value("small_n", t.small_n);
    t.ignore_epochs_small_n = j.value("ignore_epochs_small_n", t.ignore_epochs_small_n);
    t.mpw_max_outer = j.value("mpw_max_outer", t.mpw_max_outer);
    t.mpw_tol = j.value("mpw_tol", t.mpw_tol);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad regression training config: ") + e.what());
  }
  t.validate();
  return t;
}

double RunRecord::rho_hat_mean() const { return rho_hat.empty() ? 0.0 : mean_of(rho_hat); }

nlohmann::json RunRecord::to_json() const {
  nlohmann::json rho = nlohmann::json::array();
  for (double r : rho_hat) rho.push_back(num(r));
  return {{"schema", kRunRecordSchema},
          {"config_hash", config_hash},
          {"cell", cell},
          {"method", method},
          {"seed_index", seed_index},
          {"data_seed", data_seed},
          {"train_seed", train_seed},
          {"test_mse", num(test_mse)},
          {"test_rrmse", opt_num(test_rrmse)},
          {"rho_hat", rho},
          {"true_rho", opt_num(true_rho)},
          {"abs_rho_error", opt_num(abs_rho_error)},
          {"remaining_autocorrelation", num(remaining_autocorrelation)},
          {"epochs_run", epochs_run},
          {"best_epoch", best_epoch},
          {"outer_iterations", outer_iterations},
          {"diverged", diverged},
          {"failure", failure},
          {"wall_clock_s", opt_num(wall_clock_s)}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  try {
    if (j.at("schema").get<std::string>() != kRunRecordSchema)
      throw InputError("unsupported run record schema '" + j.at("schema").get<std::string>() + "'");
    r.config_hash = j.at("config_hash").get<std::string>();
    r.cell = j.value("cell", nlohmann::json::object());
    r.method = j.at("method").get<std::string>();
    parse_method(r.method);
    r.seed_index = j.at("seed_index").get<std::size_t>();
    r.data_seed = j.value("data_seed", std::uint64_t{0});
    r.train_seed = j.value("train_seed", std::uint64_t{0});
    r.test_mse = get_num(j, "test_mse");
    r.test_rrmse = get_opt(j, "test_rrmse");
    for (const auto& v : j.value("rho_hat", nlohmann::json::array()))
      r.rho_hat.push_back(v.is_null() ? kNaN : v.get<double>());
    r.true_rho = get_opt(j, "true_rho");
    r.abs_rho_error = get_opt(j, "abs_rho_error");
    r.remaining_autocorrelation = get_num(j, "remaining_autocorrelation");
    r.epochs_run = j.value("epochs_run", std::size_t{0});
    r.best_epoch = j.value("best_epoch", std::size_t{0});
    r.outer_iterations = j.value("outer_iterations", std::size_t{0});
    r.diverged = j.value("diverged", false);
    r.failure = j.value("failure", std::string());
    r.wall_clock_s = get_opt(j, "wall_clock_s");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad run record: ") + e.what());
  }
  return r;
}

std::string fnv1a_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

std::string records_to_jsonl(const std::vector<RunRecord>& records) {
  std::string out;
  for (const auto& r : records) out += r.to_json().dump() + "\n";
  return out;
}

void write_jsonl(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << records_to_jsonl(records);
  if (!f) throw Error("failed writing " + path.string());
}

std::vector<RunRecord> parse_jsonl(const std::string& text) {
  std::vector<RunRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no, 0);
    }
    out.push_back(RunRecord::from_json(j));
  }
  return out;
}

std::vector<RunRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_jsonl(ss.str());
}

std::string regression_cell_hash(const DgpConfig& cell, const RegressionTraining& training) {
  const nlohmann::json key = {{"kind", "regression"}, {"cell", cell.to_json()},
                              {"training", training.to_json()}};
  return fnv1a_hex(key.dump());
}

namespace {

RunRecord regression_run(const DgpConfig& cell, const RegressionData& d, Method m,
                         const RegressionTraining& training, std::uint64_t train_seed) {
  const auto start = std::chrono::steady_clock::now();
  ModelSpec spec = ModelSpec::mlp_regressor(cell.N, training.hidden);
  spec.n_layers = training.layers;
  const TrainConfig cfg = training.train_config(cell.N, train_seed, m);

  const auto x_mean = column_means(d.x_train);
  const double y_mean = mean_of(d.y_train);
  const LaggedSet train = regression_set(d.x_train, d.y_train, x_mean, y_mean);
  const LaggedSet valid = regression_set(d.x_valid, d.y_valid, d.x_train.row(d.x_train.rows - 1),
                                         d.y_train.back());
  const LaggedSet test = regression_set(d.x_test, d.y_test, x_mean, y_mean);

  RunRecord r;
  r.method = to_string(m);
  r.true_rho = cell.rho;
  Matrix pred;
  try {
    if (m == Method::mpw) {
      const MpwOutcome out =
          naive_mpw_lagged(train, valid, spec, cfg, 1, training.mpw_max_outer);
      pred = predict_two_model(out.fit.model, test, out.fit.rho);
      r.rho_hat = out.fit.rho;
      r.epochs_run = out.fit.epochs_run;
      r.best_epoch = out.fit.best_epoch;
      r.outer_iterations = out.outer_iterations;
    } else {
      const TrainOutcome out = train_adjusted(train, valid, spec, cfg, 1);
      pred = predict_recovered(out.model, test, cfg.mode, out.rho);
      r.rho_hat = out.rho;
      r.epochs_run = out.epochs_run;
      r.best_epoch = out.best_epoch;
    }
  } catch (const DivergenceError& e) {
    r.diverged = true;
    r.failure = e.what();
    r.test_mse = kNaN;
    r.remaining_autocorrelation = kNaN;
    return r;
  }
  std::vector<double> e(test.size());
  double sq = 0.0;
  for (std::size_t t = 0; t < e.size(); ++t) {
    e[t] = d.y_test[t] - pred(t, 0);
    sq += e[t] * e[t];
  }
  r.test_mse = sq / static_cast<double>(e.size());
  r.remaining_autocorrelation = safe_autocorrelation(e);
  r.abs_rho_error = std::abs(cell.rho - r.rho_hat_mean());
  r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

struct CellJob {
  DgpConfig cell;
  std::string hash;
  std::size_t seed_index;
};

std::vector<std::function<std::vector<RunRecord>()>> regression_tasks(
    const std::vector<CellJob>& jobs, const std::vector<Method>& methods,
    const RegressionTraining& training, std::uint64_t root_seed, bool record_timing) {
  std::vector<std::function<std::vector<RunRecord>()>> tasks;
  for (const auto& job : jobs) {
    tasks.push_back([job, methods, training, root_seed, record_timing] {
      const std::uint64_t h = hash_value(job.hash);
      const std::uint64_t data_seed = derive_seed(root_seed, {h, job.seed_index, kDataStream});
      const std::uint64_t train_seed = derive_seed(root_seed, {h, job.seed_index, kTrainStream});
      Rng rng = make_rng(data_seed);
      const RegressionData data = generate_regression_dataset(job.cell, rng);
      std::vector<RunRecord> out;
      for (Method m : methods) {
        RunRecord r = regression_run(job.cell, data, m, training, train_seed);
        r.config_hash = job.hash;
        r.cell = job.cell.to_json();
        r.seed_index = job.seed_index;
        r.data_seed = data_seed;
        r.train_seed = train_seed;
        if (!record_timing) r.wall_clock_s.reset();
        out.push_back(std::move(r));
      }
      return out;
    });
  }
  return tasks;
}

std::vector<RunRecord> flatten(std::vector<std::vector<RunRecord>> groups) {
  std::vector<RunRecord> out;
  for (auto& g : groups)
    for (auto& r : g) out.push_back(std::move(r));
  return out;
}

}  // namespace

std::vector<RunRecord> run_regression_cell(const DgpConfig& cell, const std::vector<Method>& methods,
                                           const RegressionTraining& training, std::size_t seeds,
                                           std::uint64_t root_seed, const PoolOptions& pool) {
  cell.validate();
  training.validate();
  if (methods.empty()) throw InputError("no methods given");
  if (seeds == 0) throw InputError("need at least one seed");
  std::vector<CellJob> jobs;
  const std::string hash = regression_cell_hash(cell, training);
  for (std::size_t s = 0; s < seeds; ++s) jobs.push_back({cell, hash, s});
  return flatten(run_pool(
      with_progress(regression_tasks(jobs, methods, training, root_seed, pool.record_timing), pool),
      pool.workers));
}

ExperimentGrid ExperimentGrid::full() {
  ExperimentGrid g;
  g.T_set = {25, 50, 100, 200, 400};
  g.N_set = {2, 3, 6, 12, 24};
  g.rho_set = {-0.9, -0.75, -0.6, -0.45, -0.3, -0.15, 0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9};
  g.sigma_set = {0.0025, 0.005, 0.01, 0.02, 0.04};
  g.seeds_per_cell = 30;
  return g;
}

ExperimentGrid ExperimentGrid::default_slice() {
  ExperimentGrid g;
  g.T_set = {400};
  g.N_set = {6};
  g.rho_set = {-0.75, -0.3, 0.0, 0.3, 0.75, 0.9};
  g.sigma_set = {0.02};
  g.seeds_per_cell = 30;
  return g;
}

void ExperimentGrid::validate() const {
  if (T_set.empty() || N_set.empty() || rho_set.empty() || sigma_set.empty())
    throw InputError("experiment grid has an empty axis");
  if (seeds_per_cell == 0) throw InputError("seeds_per_cell must be positive");
  for (const auto& c : cells()) c.validate();
}

std::vector<DgpConfig> ExperimentGrid::cells() const {
  std::vector<DgpConfig> out;
  for (std::size_t t : T_set)
    for (std::size_t n : N_set)
      for (double r : rho_set)
        for (double s : sigma_set) {
          DgpConfig c;
          c.T = t;
          c.N = n;
          c.rho = r;
          c.sigma = s;
          out.push_back(c);
        }
  return out;
}

nlohmann::json ExperimentGrid::to_json() const {
  return {{"T_set", T_set}, {"N_set", N_set}, {"rho_set", rho_set},
          {"sigma_set", sigma_set}, {"seeds_per_cell", seeds_per_cell}};
}

ExperimentGrid ExperimentGrid::from_json(const nlohmann::json& j) {
  ExperimentGrid g = default_slice();
  try {
    if (j.contains("T_set")) g.T_set = j.at("T_set").get<std::vector<std::size_t>>();
    if (j.contains("N_set")) g.N_set = j.at("N_set").get<std::vector<std::size_t>>();
    if (j.contains("rho_set")) g.rho_set = j.at("rho_set").get<std::vector<double>>();
    if (j.contains("sigma_set")) g.sigma_set = j.at("sigma_set").get<std::vector<double>>();
    g.seeds_per_cell = j.value("seeds_per_cell", g.seeds_per_cell);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad experiment grid: ") + e.what());
  }
  g.validate();
  return g;
}

std::vector<RunRecord> run_regression_grid(const ExperimentGrid& grid,
                                           const std::vector<Method>& methods,
                                           const RegressionTraining& training,
                                           std::uint64_t root_seed, const PoolOptions& pool) {
  grid.validate();
  training.validate();
  if (methods.empty()) throw InputError("no methods given");
  std::vector<CellJob> jobs;
  for (const auto& cell : grid.cells()) {
    const std::string hash = regression_cell_hash(cell, training);
    for (std::size_t s = 0; s < grid.seeds_per_cell; ++s) jobs.push_back({cell, hash, s});
  }
  return flatten(run_pool(
      with_progress(regression_tasks(jobs, methods, training, root_seed, pool.record_timing), pool),
      pool.workers));
}

std::vector<RunRecord> run_forecast_experiment(const SeriesFrame& frame, const ModelSpec& spec,
                                               const TrainConfig& cfg, const SplitSpec& split,
                                               const std::vector<Method>& methods,
                                               std::size_t seeds, std::uint64_t root_seed,
                                               const PoolOptions& pool) {
  if (methods.empty()) throw InputError("no methods given");
  if (seeds == 0) throw InputError("need at least one seed");
  cfg.validate();
  const Splits parts = split_chronological(frame, split, cfg.window);
  nlohmann::json cfg_key = cfg.to_json();
  cfg_key.erase("seed");
  const nlohmann::json cell = {
      {"kind", "forecast"},
      {"data_digest", fnv1a_hex(format_csv(frame))},
      {"T", frame.length()},
      {"N", frame.width()},
      {"model", spec.to_json()},
      {"train", cfg_key},
      {"split", {split.train_frac, split.valid_frac, split.test_frac}}};
  const std::string hash = fnv1a_hex(cell.dump());
  const std::uint64_t h = hash_value(hash);
  const AdjustmentMode adjusted = cfg.mode == AdjustmentMode::none ? AdjustmentMode::both : cfg.mode;

  std::vector<std::function<RunRecord()>> tasks;
  for (std::size_t s = 0; s < seeds; ++s) {
    for (Method m : methods) {
      tasks.push_back([&, s, m] {
        TrainConfig c = cfg;
        c.seed = derive_seed(root_seed, {h, s, kTrainStream});
        c.record_timing = pool.record_timing;
        RunRecord r;
        r.config_hash = hash;
        r.cell = cell;
        r.method = to_string(m);
        r.seed_index = s;
        r.train_seed = c.seed;
        try {
          FitReport rep;
          if (m == Method::mpw) {
            rep = naive_mpw_train(parts.train, parts.valid, parts.test, spec, c, c.mpw_max_outer);
          } else {
            c.mode = m == Method::wo ? AdjustmentMode::none : adjusted;
            rep = joint_train(parts.train, parts.valid, parts.test, spec, c);
          }
          r.test_mse = rep.test_mse;
          r.test_rrmse = rep.test_rrmse;
          r.rho_hat = rep.rho;
          r.remaining_autocorrelation = rep.remaining_autocorrelation;
          r.epochs_run = rep.epochs_run;
          r.best_epoch = rep.best_epoch;
          r.outer_iterations = rep.outer_iterations;
          r.wall_clock_s = rep.wall_clock_s;
        } catch (const DivergenceError& e) {
          r.diverged = true;
          r.failure = e.what();
          r.test_mse = kNaN;
          r.remaining_autocorrelation = kNaN;
        }
        return r;
      });
    }
  }
  return run_pool(with_progress(std::move(tasks), pool), pool.workers);
}

namespace {

struct MethodStats {
  std::size_t n = 0;
  double test_mse = 0.0;
  double test_rrmse = 0.0;
  bool has_rrmse = true;
  double rho_hat = 0.0;
  double abs_rho_error = 0.0;
  bool has_rho_error = true;
  double remaining = 0.0;
  double abs_remaining = 0.0;
  std::size_t remaining_n = 0;
};

double primary_metric(const RunRecord& r, bool use_rrmse) {
  return use_rrmse ? *r.test_rrmse : r.test_mse;
}

}  // namespace

nlohmann::json summarize(const std::vector<RunRecord>& records, const SummaryOptions& opts) {
  if (records.empty()) throw InputError("no run records to summarize");
  // cell -> method -> seed -> record; ordered containers make the fold order-free.
  std::map<std::string, std::map<std::string, std::map<std::size_t, const RunRecord*>>> cells;
  for (const auto& r : records) {
    parse_method(r.method);
    auto& slot = cells[r.config_hash][r.method][r.seed_index];
    if (slot) throw InputError("duplicate record for cell " + r.config_hash + ", method " +
                               r.method + ", seed " + std::to_string(r.seed_index));
    slot = &r;
  }

  nlohmann::json cell_list = nlohmann::json::array();
  std::map<std::pair<double, std::string>, std::pair<double, std::size_t>> rho_curve;
  std::map<std::string, std::vector<double>> remaining_by_method;
  std::size_t diverged = 0;
  std::set<std::string> methods_seen;

  for (const auto& [hash, by_method] : cells) {
    std::set<std::size_t> seeds;
    bool first = true;
    for (const auto& [method, by_seed] : by_method) {
      std::set<std::size_t> s;
      for (const auto& kv : by_seed) s.insert(kv.first);
      if (!first && s != seeds)
        throw InputError("unpaired records in cell " + hash + ": method " + method +
                         " has a different seed set");
      seeds = std::move(s);
      first = false;
      methods_seen.insert(method);
    }
    std::vector<std::size_t> kept;
    for (std::size_t s : seeds) {
      bool ok = true;
      for (const auto& [method, by_seed] : by_method) {
        const RunRecord* r = by_seed.at(s);
        if (r->diverged || !std::isfinite(r->test_mse)) {
          ok = false;
          ++diverged;
        }
      }
      if (ok) kept.push_back(s);
    }
    bool use_rrmse = true;
    for (const auto& [method, by_seed] : by_method)
      for (std::size_t s : kept) use_rrmse = use_rrmse && by_seed.at(s)->test_rrmse.has_value();

    nlohmann::json cell_json;
    cell_json["config_hash"] = hash;
    cell_json["cell"] = by_method.begin()->second.begin()->second->cell;
    cell_json["seeds"] = kept.size();
    cell_json["excluded_seeds"] = seeds.size() - kept.size();
    cell_json["metric"] = use_rrmse ? "test_rrmse" : "test_mse";
    nlohmann::json method_json = nlohmann::json::object();
    for (const auto& [method, by_seed] : by_method) {
      MethodStats st;
      for (std::size_t s : kept) {
        const RunRecord& r = *by_seed.at(s);
        ++st.n;
        st.test_mse += r.test_mse;
        if (r.test_rrmse) st.test_rrmse += *r.test_rrmse;
        else st.has_rrmse = false;
        st.rho_hat += r.rho_hat_mean();
        if (r.abs_rho_error) st.abs_rho_error += *r.abs_rho_error;
        else st.has_rho_error = false;
        if (std::isfinite(r.remaining_autocorrelation)) {
          st.remaining += r.remaining_autocorrelation;
          st.abs_remaining += std::abs(r.remaining_autocorrelation);
          ++st.remaining_n;
          remaining_by_method[method].push_back(r.remaining_autocorrelation);
        }
        if (r.true_rho && r.abs_rho_error) {
          auto& acc = rho_curve[{*r.true_rho, method}];
          acc.first += *r.abs_rho_error;
          ++acc.second;
        }
      }
      const double n = static_cast<double>(st.n);
      nlohmann::json m;
      m["n"] = st.n;
      m["mean_test_mse"] = st.n ? num(st.test_mse / n) : nlohmann::json(nullptr);
      m["mean_test_rrmse"] = st.n && st.has_rrmse ? num(st.test_rrmse / n) : nlohmann::json(nullptr);
      m["mean_rho_hat"] = st.n ? num(st.rho_hat / n) : nlohmann::json(nullptr);
      m["mean_abs_rho_error"] =
          st.n && st.has_rho_error ? num(st.abs_rho_error / n) : nlohmann::json(nullptr);
      const double rn = static_cast<double>(st.remaining_n);
      m["mean_remaining_autocorrelation"] = st.remaining_n ? num(st.remaining / rn) : nlohmann::json(nullptr);
      m["mean_abs_remaining_autocorrelation"] =
          st.remaining_n ? num(st.abs_remaining / rn) : nlohmann::json(nullptr);
      method_json[method] = m;
    }
    cell_json["methods"] = method_json;

    nlohmann::json comparisons = nlohmann::json::array();
    if (by_method.count("wo") && kept.size() > 0) {
      std::vector<double> base;
      for (std::size_t s : kept) base.push_back(primary_metric(*by_method.at("wo").at(s), use_rrmse));
      for (const auto& [method, by_seed] : by_method) {
        if (method == "wo") continue;
        std::vector<double> other;
        for (std::size_t s : kept) other.push_back(primary_metric(*by_seed.at(s), use_rrmse));
        nlohmann::json c = {{"baseline", "wo"}, {"method", method},
                            {"metric", use_rrmse ? "test_rrmse" : "test_mse"}};
        try {
          const auto t = stats::paired_t_test(base, other);
          c["t"] = num(t.t);
          c["p_value"] = num(t.p_value);
          c["df"] = t.df;
          c["significant"] = t.significant;
          c["all_equal"] = t.all_equal;
        } catch (const Error& e) {
          c["t"] = nullptr;
          c["p_value"] = nullptr;
          c["significant"] = false;
          c["note"] = e.what();
        }
        try {
          c["avg_relative_improvement"] = num(stats::avg_relative_improvement(base, other));
        } catch (const Error&) {
          c["avg_relative_improvement"] = nullptr;
        }
        comparisons.push_back(c);
      }
    }
    cell_json["comparisons"] = comparisons;
    cell_list.push_back(cell_json);
  }

  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [key, acc] : rho_curve)
    curve.push_back({{"rho", key.first}, {"method", key.second},
                     {"mean_abs_rho_err", acc.first / static_cast<double>(acc.second)},
                     {"n", acc.second}});

  nlohmann::json hists = nlohmann::json::array();
  for (const auto& [method, values] : remaining_by_method) {
    const auto h = stats::histogram(values, opts.histogram_bins, -1.0, 1.0);
    hists.push_back({{"method", method}, {"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts},
                     {"below", h.below}, {"above", h.above}});
  }

  nlohmann::json criticals = nullptr;
  const auto it = remaining_by_method.find(opts.critical_method);
  if (it != remaining_by_method.end() && it->second.size() >= stats::kMinCriticalSamples)
    criticals = stats::empirical_critical_values(it->second).to_json();

  return {{"schema", kSummarySchema},
          {"records", records.size()},
          {"diverged_runs", diverged},
          {"methods", std::vector<std::string>(methods_seen.begin(), methods_seen.end())},
          {"cells", cell_list},
          {"rho_error_curve", curve},
          {"remaining_autocorrelation_histograms", hists},
          {"critical_values", criticals},
          {"default_critical_values", stats::default_critical_values().to_json()}};
}

std::string rho_error_csv(const nlohmann::json& summary) {
  std::string out = "rho,mean_abs_rho_err,method\n";
  for (const auto& row : summary.at("rho_error_curve"))
    out += format_double(row.at("rho").get<double>()) + "," +
           format_double(row.at("mean_abs_rho_err").get<double>()) + "," +
           row.at("method").get<std::string>() + "\n";
  return out;
}

std::string histogram_csv(const nlohmann::json& summary) {
  std::string out = "method,bin_lo,bin_hi,count\n";
  for (const auto& h : summary.at("remaining_autocorrelation_histograms")) {
    const double lo = h.at("lo").get<double>();
    const double hi = h.at("hi").get<double>();
    const auto counts = h.at("counts").get<std::vector<std::size_t>>();
    const double width = (hi - lo) / static_cast<double>(counts.size());
    for (std::size_t b = 0; b < counts.size(); ++b)
      out += h.at("method").get<std::string>() + "," + format_double(lo + width * b) + "," +
             format_double(b + 1 == counts.size() ? hi : lo + width * (b + 1)) + "," +
             std::to_string(counts[b]) + "\n";
  }
  return out;
}

}  // namespace acadj::bench
