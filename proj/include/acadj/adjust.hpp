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

// Adjustment for first-order autocorrelated errors.
//
// The adjusted objective fits one model to quasi-differenced data,
//
//   X_t - rho (.) X_{t-1}  ~  f(X_{t-1} - rho (.) X_{t-2}, ..., X_{t-W} - rho (.) X_{t-W-1}),
//
// with rho = tanh(raw) trained jointly with the model parameters, and the
// missing X_{t-W-1} replaced by the training mean. At rho = 0 it is the
// ordinary MSE fit. Forecasts in original form are recovered as
// f(.) + rho (.) X_{t-1}.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acadj/autodiff.hpp"
#include "acadj/matrix.hpp"
#include "acadj/models.hpp"
#include "acadj/series.hpp"

namespace acadj {

enum class AdjustmentMode { none, input_only, output_only, both };

std::string to_string(AdjustmentMode mode);
AdjustmentMode parse_adjustment_mode(const std::string& s);  // none|input|output|both

enum class RhoDim { automatic, scalar, vector };

std::string to_string(RhoDim dim);
RhoDim parse_rho_dim(const std::string& s);  // auto|scalar|vector

// Scalar below 300 series, one coefficient per series from 300 on.
std::size_t resolve_rho_dim(RhoDim dim, std::size_t series);

inline constexpr std::size_t kVectorRhoThreshold = 300;

// Trainable raw vector; the effective coefficient is tanh(raw), so |rho| < 1.
struct RhoParam {
  ad::Parameter raw;

  explicit RhoParam(std::size_t dim);  // raw = 0, so rho = 0
  std::size_t dim() const noexcept { return raw.value.size(); }
  std::vector<double> effective() const;
};

struct TrainConfig {
  std::size_t epochs = 750;
  std::size_t patience = 25;
  std::size_t batch_size = 64;
  std::size_t window = 60;
  double lr_model = 3e-3;
  double lr_rho = 1e-2;
  std::uint64_t seed = 0;
  AdjustmentMode mode = AdjustmentMode::both;
  // Effective rho held fixed (excluded from the optimizer, no gradient).
  std::optional<double> freeze_rho;
  RhoDim rho_dim = RhoDim::automatic;
  // Validation losses of the first k epochs never become the best checkpoint.
  std::size_t ignore_initial_valid_epochs = 0;
  // Wall-clock is left out of reports unless asked for, keeping outputs reproducible.
  bool record_timing = false;
  // Outer loop of the alternating baseline.
  double mpw_tol = 1e-3;
  std::size_t mpw_max_outer = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  static TrainConfig from_json(const nlohmann::json& j);
};

// Supervised rows in lag-aware form. Row i holds x_t, its one-step-lagged
// counterpart, y_t and y_{t-1}. Input columns are `tiles` consecutive blocks
// of `series` values (one block per window row), so a per-series rho is
// tiled across blocks on the input side.
struct LaggedSet {
  Matrix input;
  Matrix input_prev;
  Matrix target;
  Matrix target_prev;
  std::vector<std::size_t> index;  // target time index of each row
  std::size_t tiles = 1;
  std::size_t series = 1;
  // Row 0's lagged values are observed data rather than a fill, so its
  // residual may enter the lag-1 estimate.
  bool first_prev_observed = false;

  std::size_t size() const noexcept { return input.rows; }
  void validate() const;
};

// Windows for targets t in [begin, end) of `frame` (already normalized).
// Histories may read rows before `begin`; X_{t-W-1} before row 0 is
// `fill`.
LaggedSet lagged_windows(const SeriesFrame& frame, std::size_t begin, std::size_t end,
                         std::size_t window, std::span<const double> fill);

// Row j of the transformed window: X_{t-1-j} - rho (.) X_{t-2-j}, with the
// oldest predecessor taken from `preceding` or, when absent, `mean`.
Matrix transform_window(const Matrix& history, const std::optional<std::vector<double>>& preceding,
                        std::span<const double> rho, std::span<const double> mean);

// x_t - rho (.) x_prev. A length-1 rho broadcasts.
std::vector<double> transform_target(std::span<const double> x_t, std::span<const double> x_prev,
                                     std::span<const double> rho);

// model_output + rho (.) x_prev.
std::vector<double> recover_forecast(std::span<const double> model_output,
                                     std::span<const double> x_prev, std::span<const double> rho);

struct LossCurves {
  std::vector<double> train;
  std::vector<double> valid;
  std::vector<double> rho;  // mean effective rho at the end of each epoch
};

struct TrainOutcome {
  Model model;
  std::vector<double> rho;      // effective coefficient at the restored checkpoint
  std::vector<double> rho_raw;  // empty when frozen
  LossCurves curves;
  std::size_t best_epoch = 0;   // 1-based
  std::size_t epochs_run = 0;
};

// Joint (theta, rho) training on the adjusted objective with shuffled
// mini-batches, two Adam groups and best-validation checkpointing.
TrainOutcome train_adjusted(const LaggedSet& train, const LaggedSet& valid, const ModelSpec& spec,
                            const TrainConfig& cfg, std::size_t rho_dim);

// Training for fixed rho on the two-output objective
//   y_t - rho y_{t-1} ~ f(x_t) - rho f(x_{t-1}),
// starting from `init` when given.
TrainOutcome train_two_model(const LaggedSet& train, const LaggedSet& valid, const ModelSpec& spec,
                             const TrainConfig& cfg, std::span<const double> rho,
                             const Model* init);

// Effective input-side and output-side coefficients for a mode.
std::vector<double> input_rho(AdjustmentMode mode, std::span<const double> rho);
std::vector<double> output_rho(AdjustmentMode mode, std::span<const double> rho);

// Model outputs on transformed inputs, before recovery.
Matrix predict_transformed(const Model& model, const LaggedSet& set, std::span<const double> rho_in);
Matrix transformed_targets(const LaggedSet& set, std::span<const double> rho_out);
// f(transformed input) + rho_out (.) y_{t-1}.
Matrix predict_recovered(const Model& model, const LaggedSet& set, AdjustmentMode mode,
                         std::span<const double> rho);
// f(x_t) + rho (.) (y_{t-1} - f(x_{t-1})).
Matrix predict_two_model(const Model& model, const LaggedSet& set, std::span<const double> rho);

// Per-series lag-1 regression estimate from training residuals y - f(x),
// averaged down to `dim` entries.
std::vector<double> estimate_rho_from_residuals(const Model& model, const LaggedSet& set,
                                                std::size_t dim);

struct FitReport {
  std::string method;  // "w", "wo", "mpw", "fixed"
  AdjustmentMode mode = AdjustmentMode::both;
  bool rho_frozen = false;
  nlohmann::json checkpoint;
  std::vector<double> rho;
  std::vector<double> rho_raw;
  LossCurves curves;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t outer_iterations = 0;  // alternating baseline only
  std::vector<double> remaining_autocorrelation_per_series;
  double remaining_autocorrelation = 0.0;
  std::vector<double> durbin_watson_per_series;
  double test_rrmse = 0.0;              // recovered forecasts, original units
  double test_rrmse_transformed = 0.0;  // transformed targets vs model output
  double test_mse = 0.0;                // original units
  double valid_rrmse = 0.0;             // recovered forecasts, original units
  std::optional<double> wall_clock_s;
  std::uint64_t seed = 0;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

inline constexpr const char* kFitReportSchema = "acadj.fit_report/1";

// Writes "epoch,loss" rows, epochs 1-based.
std::string loss_curve_csv(const std::vector<double>& losses);

// Full forecasting fit: train-split normalization, windowing that may reach
// back across split boundaries, joint training, and test diagnostics on
// recovered forecasts in original units.
FitReport joint_train(const SeriesFrame& train, const SeriesFrame& valid, const SeriesFrame& test,
                      const ModelSpec& spec, const TrainConfig& cfg);

// Alternating baseline: rho = 0, train theta on the two-output objective,
// re-estimate rho from training residuals, retrain, until |delta rho| <
// cfg.mpw_tol or max_outer_iters updates.
struct MpwOutcome {
  TrainOutcome fit;
  std::size_t outer_iterations = 0;
  std::vector<std::vector<double>> rho_path;  // rho after each update, starting at 0
};

MpwOutcome naive_mpw_lagged(const LaggedSet& train, const LaggedSet& valid, const ModelSpec& spec,
                            const TrainConfig& cfg, std::size_t rho_dim,
                            std::size_t max_outer_iters);

FitReport naive_mpw_train(const SeriesFrame& train, const SeriesFrame& valid,
                          const SeriesFrame& test, const ModelSpec& spec, const TrainConfig& cfg,
                          std::size_t max_outer_iters);

struct GridSearchResult {
  double best_rho = 0.0;
  std::vector<std::pair<double, double>> table;  // (rho, validation RRMSE), in grid order
  std::vector<FitReport> reports;

  nlohmann::json to_json() const;
};

// {-1, -0.9, -0.75, -0.6, ..., 0.6, 0.75, 0.9, 1}, spacing 0.15 inside +-0.75.
std::vector<double> default_rho_grid();

// Trains with rho frozen at each grid value (same value for every series)
// and picks the lowest validation RRMSE.
GridSearchResult grid_search_rho(const SeriesFrame& train, const SeriesFrame& valid,
                                 const SeriesFrame& test, const ModelSpec& spec,
                                 const TrainConfig& cfg, std::span<const double> grid);

}  // namespace acadj
