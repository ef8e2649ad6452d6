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

#pragma once

// Synthetic regression benchmark with AR(1) errors, forecasting experiments
// on user data, a seeded worker pool, and aggregation of run records.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acadj/adjust.hpp"
#include "acadj/matrix.hpp"
#include "acadj/rng.hpp"
#include "acadj/series.hpp"

namespace acadj::bench {

// y_t = tanh((x_t . theta + 1) / sqrt(N)) + e_t, x_t ~ N(0, sigma_x^2 I),
// e_t AR(1) with innovation std sigma.
struct DgpConfig {
  std::size_t T = 400;
  std::size_t N = 6;
  double rho = 0.75;
  double sigma = 0.02;
  double sigma_x = 0.2;
  std::vector<double> theta;  // empty = all ones
  std::size_t test_multiplier = 100;
  double valid_frac = 0.2;

  void validate() const;
  std::vector<double> theta_or_ones() const;
  nlohmann::json to_json() const;
  static DgpConfig from_json(const nlohmann::json& j);
};

double dgp_signal(std::span<const double> x, std::span<const double> theta);

struct RegressionData {
  Matrix x_train, x_valid, x_test;
  std::vector<double> y_train, y_valid, y_test;
  std::vector<double> e_sample;  // error chain behind train + valid, in time order
  std::vector<double> e_test;
};

RegressionData generate_regression_dataset(const DgpConfig& cfg, Rng& rng);

// Periodic signals plus AR(1) noise: series k is
//   amplitude * sin(2 pi t / period_k + phase_k) + e_{t,k},
// with periods spread over [12, 60) and independent error chains.
struct ForecastFixture {
  std::size_t T = 600;
  std::size_t N = 3;
  double rho = 0.8;
  double sigma = 0.3;
  double amplitude = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
};

SeriesFrame synthetic_forecast_frame(const ForecastFixture& fx, Rng& rng);

// Rows of a regression problem in lag-aware form. The lag of row 0 is
// `prev` when given, otherwise the training means.
LaggedSet regression_set(const Matrix& x, std::span<const double> y,
                         std::span<const double> prev_x, double prev_y);

enum class Method { wo, mpw, w };

std::string to_string(Method m);
Method parse_method(const std::string& s);
std::vector<Method> parse_methods(const std::string& csv);  // "wo,mpw,w"

struct RegressionTraining {
  std::size_t epochs = 750;
  std::size_t batch_size = 64;
  double lr_model = 5e-3;
  double lr_rho = 1e-2;
  std::size_t hidden = 64;
  std::size_t layers = 6;
  // Validation losses of the first epochs are ignored when N is at most this.
  std::size_t small_n = 3;
  std::size_t ignore_epochs_small_n = 5;
  std::size_t mpw_max_outer = 10;
  double mpw_tol = 1e-3;

  void validate() const;
  TrainConfig train_config(std::size_t n_inputs, std::uint64_t seed, Method m) const;
  nlohmann::json to_json() const;
  static RegressionTraining from_json(const nlohmann::json& j);
};

struct RunRecord {
  std::string config_hash;  // 16 hex digits; equal for every method and seed of a cell
  nlohmann::json cell;
  std::string method;
  std::size_t seed_index = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;
  double test_mse = 0.0;
  std::optional<double> test_rrmse;
  std::vector<double> rho_hat;
  std::optional<double> true_rho;
  std::optional<double> abs_rho_error;  // |rho - mean(rho_hat)|
  double remaining_autocorrelation = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::size_t outer_iterations = 0;
  bool diverged = false;
  std::string failure;
  std::optional<double> wall_clock_s;

  double rho_hat_mean() const;
  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

inline constexpr const char* kRunRecordSchema = "acadj.run_record/1";

std::string fnv1a_hex(const std::string& text);

std::string records_to_jsonl(const std::vector<RunRecord>& records);
void write_jsonl(const std::vector<RunRecord>& records, const std::filesystem::path& path);
std::vector<RunRecord> parse_jsonl(const std::string& text);
std::vector<RunRecord> read_jsonl(const std::filesystem::path& path);

// Runs tasks on up to `workers` threads; results keep task order, so
// output does not depend on scheduling. The first exception is rethrown.
template <typename R>
std::vector<R> run_pool(const std::vector<std::function<R()>>& tasks, std::size_t workers);

struct PoolOptions {
  std::size_t workers = 1;
  bool record_timing = false;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

std::string regression_cell_hash(const DgpConfig& cell, const RegressionTraining& training);

// One record per (seed, method), ordered by seed then method as given.
// Data and training seeds depend on (root, cell, seed index) only, so all
// methods see the same datasets and initializations.
std::vector<RunRecord> run_regression_cell(const DgpConfig& cell, const std::vector<Method>& methods,
                                           const RegressionTraining& training, std::size_t seeds,
                                           std::uint64_t root_seed, const PoolOptions& pool = {});

struct ExperimentGrid {
  std::vector<std::size_t> T_set;
  std::vector<std::size_t> N_set;
  std::vector<double> rho_set;
  std::vector<double> sigma_set;
  std::size_t seeds_per_cell = 30;

  static ExperimentGrid full();           // 5 x 5 x 13 x 5 cells
  static ExperimentGrid default_slice();  // 6 cells at T=400, N=6, sigma=0.02

  void validate() const;
  std::vector<DgpConfig> cells() const;
  nlohmann::json to_json() const;
  static ExperimentGrid from_json(const nlohmann::json& j);
};

std::vector<RunRecord> run_regression_grid(const ExperimentGrid& grid,
                                           const std::vector<Method>& methods,
                                           const RegressionTraining& training,
                                           std::uint64_t root_seed, const PoolOptions& pool = {});

// Seed-paired forecasting runs on one frame with a chronological split.
std::vector<RunRecord> run_forecast_experiment(const SeriesFrame& frame, const ModelSpec& spec,
                                               const TrainConfig& cfg, const SplitSpec& split,
                                               const std::vector<Method>& methods,
                                               std::size_t seeds, std::uint64_t root_seed,
                                               const PoolOptions& pool = {});

struct SummaryOptions {
  std::size_t histogram_bins = 40;
  std::string critical_method = "wo";
};

// Pure fold over records: per-cell means, paired tests against "wo",
// relative improvement, |rho - rho_hat| by true rho, histograms and
// critical values recomputed from the baseline's remaining autocorrelation.
nlohmann::json summarize(const std::vector<RunRecord>& records, const SummaryOptions& opts = {});

// rho,mean_abs_rho_err,method rows from a summary.
std::string rho_error_csv(const nlohmann::json& summary);
// method,bin_lo,bin_hi,count rows from a summary.
std::string histogram_csv(const nlohmann::json& summary);

inline constexpr const char* kSummarySchema = "acadj.summary/1";

}  // namespace acadj::bench

#include "acadj/bench_pool.hpp"
