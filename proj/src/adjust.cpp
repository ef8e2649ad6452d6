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

#include "acadj/adjust.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "acadj/error.hpp"
#include "acadj/rng.hpp"
#include "acadj/stats.hpp"

namespace acadj {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kOuterStream = 3;
constexpr double kRhoLimit = 1.0 - 1e-6;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double rho_at(std::span<const double> rho, std::size_t c) {
  return rho.size() == 1 ? rho[0] : rho[c % rho.size()];
}

void check_rho_width(std::span<const double> rho, std::size_t series) {
  if (rho.empty() || (rho.size() != 1 && rho.size() != series))
    throw ShapeError("rho has " + std::to_string(rho.size()) + " entries for " +
                     std::to_string(series) + " series");
}

ad::Tensor gather(const Matrix& m, std::span<const std::size_t> rows) {
  ad::Tensor t(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
  }
  return t;
}

ad::Tensor to_tensor(const Matrix& m) { return ad::Tensor(m.rows, m.cols, m.data); }
Matrix to_matrix(const ad::Tensor& t) { return Matrix(t.rows(), t.cols(), t.data); }

// x - rho (.) prev, with rho (1 x 1 or 1 x series) tiled across blocks.
ad::Var quasi_diff(ad::Var x, ad::Var prev, ad::Var rho, std::size_t tiles) {
  if (rho.cols() == 1) return ad::sub(x, ad::scale(rho, prev));
  ad::Var r = rho;
  if (tiles > 1) {
    const std::vector<ad::Var> parts(tiles, rho);
    r = ad::concat(parts, 1);
  }
  return ad::sub(x, ad::scale_columns(prev, r));
}

struct Sides {
  bool input = false;
  bool output = false;
};

Sides sides_of(AdjustmentMode mode) {
  switch (mode) {
    case AdjustmentMode::none: return {false, false};
    case AdjustmentMode::input_only: return {true, false};
    case AdjustmentMode::output_only: return {false, true};
    case AdjustmentMode::both: return {true, true};
  }
  return {};
}

Matrix quasi_diff_matrix(const Matrix& x, const Matrix& prev, std::span<const double> rho) {
  Matrix out = x;
  if (rho.empty()) return out;
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = x(r, c) - rho_at(rho, c) * prev(r, c);
  return out;
}

using LossFn = std::function<ad::Var(ad::Tape&, const LaggedSet&, std::span<const std::size_t>)>;

struct LoopResult {
  LossCurves curves;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

// Shuffled mini-batch loop with best-validation checkpointing over `model`
// and the optional extra parameter.
LoopResult run_loop(Model& model, ad::Parameter* extra, Adam& opt, const LaggedSet& train,
                    const LaggedSet& valid, const TrainConfig& cfg, const LossFn& loss_fn,
                    const std::function<double()>& rho_mean) {
  LoopResult out;
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> all_valid(valid.size());
  std::iota(all_valid.begin(), all_valid.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::vector<ad::Tensor> best_model = model.snapshot();
  ad::Tensor best_extra = extra ? extra->value : ad::Tensor();
  ad::Tape tape;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(derive_seed(cfg.seed, {kShuffleStream, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    double valid_loss = 0.0;
    try {
      for (std::size_t b = 0; b < n; b += cfg.batch_size) {
        const std::span<const std::size_t> rows(order.data() + b, std::min(cfg.batch_size, n - b));
        tape.clear();
        opt.zero_grad();
        const ad::Var loss = loss_fn(tape, train, rows);
        tape.backward(loss);
        opt.step();
        sum += loss.value().item() * static_cast<double>(rows.size());
      }
      tape.clear();
      valid_loss = loss_fn(tape, valid, all_valid).value().item();
    } catch (const NonFiniteError& e) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << epoch << ": " << e.what();
      throw DivergenceError(msg.str());
    }
    out.curves.train.push_back(sum / static_cast<double>(n));
    out.curves.valid.push_back(valid_loss);
    out.curves.rho.push_back(rho_mean());
    out.epochs_run = epoch;

    if (epoch > cfg.ignore_initial_valid_epochs && valid_loss < best) {
      best = valid_loss;
      out.best_epoch = epoch;
      best_model = model.snapshot();
      if (extra) best_extra = extra->value;
    } else if (out.best_epoch > 0 && epoch - out.best_epoch >= cfg.patience) {
      break;
    }
  }
  if (out.best_epoch > 0) {
    model.restore(best_model);
    if (extra) extra->value = best_extra;
  } else {
    out.best_epoch = out.epochs_run;
  }
  return out;
}

void check_set_against_spec(const LaggedSet& set, const ModelSpec& spec, const char* what) {
  set.validate();
  if (set.size() == 0) throw InputError(std::string(what) + " set is empty");
  if (set.input.cols != spec.input_dim)
    throw ShapeError(std::string(what) + " inputs have " + std::to_string(set.input.cols) +
                     " columns, model expects " + std::to_string(spec.input_dim));
  if (set.target.cols != spec.output_dim)
    throw ShapeError(std::string(what) + " targets have " + std::to_string(set.target.cols) +
                     " columns, model expects " + std::to_string(spec.output_dim));
}

void check_rho_dim(std::size_t dim, const LaggedSet& set) {
  if (dim == 0) throw InputError("rho dimension must be positive");
  if (dim != 1 && (dim != set.series || dim != set.target.cols))
    throw InputError("a per-series rho needs matching input series and target columns");
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, {kInitStream}));
  return Model::build(spec, rng);
}

std::vector<double> frozen_rho(const TrainConfig& cfg, std::size_t dim) {
  return std::vector<double>(dim, cfg.freeze_rho.value_or(0.0));
}

}  // namespace

std::string to_string(AdjustmentMode mode) {
  switch (mode) {
    case AdjustmentMode::none: return "none";
    case AdjustmentMode::input_only: return "input";
    case AdjustmentMode::output_only: return "output";
    case AdjustmentMode::both: return "both";
  }
  return "?";
}

AdjustmentMode parse_adjustment_mode(const std::string& s) {
  if (s == "none") return AdjustmentMode::none;
  if (s == "input" || s == "input_only") return AdjustmentMode::input_only;
  if (s == "output" || s == "output_only") return AdjustmentMode::output_only;
  if (s == "both") return AdjustmentMode::both;
  throw InputError("unknown adjustment mode '" + s + "' (none|input|output|both)");
}

std::string to_string(RhoDim dim) {
  switch (dim) {
    case RhoDim::automatic: return "auto";
    case RhoDim::scalar: return "scalar";
    case RhoDim::vector: return "vector";
  }
  return "?";
}

RhoDim parse_rho_dim(const std::string& s) {
  if (s == "auto") return RhoDim::automatic;
  if (s == "scalar") return RhoDim::scalar;
  if (s == "vector") return RhoDim::vector;
  throw InputError("unknown rho dimension '" + s + "' (auto|scalar|vector)");
}

std::size_t resolve_rho_dim(RhoDim dim, std::size_t series) {
  switch (dim) {
    case RhoDim::scalar: return 1;
    case RhoDim::vector: return series;
    case RhoDim::automatic: return series >= kVectorRhoThreshold ? series : 1;
  }
  return 1;
}

RhoParam::RhoParam(std::size_t dim) : raw(ad::Tensor(1, dim, 0.0), "rho.raw") {}

std::vector<double> RhoParam::effective() const {
  std::vector<double> out(raw.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(raw.value.data[i]);
  return out;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw InputError("epochs must be positive");
  if (patience == 0) throw InputError("patience must be positive");
  if (patience > epochs) throw InputError("patience exceeds epochs");
  if (batch_size == 0) throw InputError("batch size must be positive");
  if (window == 0) throw InputError("window must be positive");
  if (!(lr_model > 0.0) || !std::isfinite(lr_model)) throw InputError("lr_model must be positive");
  if (!(lr_rho > 0.0) || !std::isfinite(lr_rho)) throw InputError("lr_rho must be positive");
  if (freeze_rho && !(std::abs(*freeze_rho) <= 1.0))
    throw InputError("frozen rho must lie in [-1, 1]");
  if (!(mpw_tol > 0.0)) throw InputError("mpw tolerance must be positive");
  if (mpw_max_outer == 0) throw InputError("mpw outer iterations must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["epochs"] = epochs;
  j["patience"] = patience;
  j["batch_size"] = batch_size;
  j["window"] = window;
  j["lr_model"] = lr_model;
  j["lr_rho"] = lr_rho;
  j["seed"] = seed;
  j["mode"] = to_string(mode);
  j["freeze_rho"] = freeze_rho ? nlohmann::json(*freeze_rho) : nlohmann::json(nullptr);
  j["rho_dim"] = to_string(rho_dim);
  j["ignore_initial_valid_epochs"] = ignore_initial_valid_epochs;
  j["record_timing"] = record_timing;
  j["mpw_tol"] = mpw_tol;
  j["mpw_max_outer"] = mpw_max_outer;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig base) {
  if (!j.is_object()) throw InputError("training config must be a JSON object");
  try {
    if (j.contains("epochs")) base.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("patience")) base.patience = j.at("patience").get<std::size_t>();
    if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("window")) base.window = j.at("window").get<std::size_t>();
    if (j.contains("lr_model")) base.lr_model = j.at("lr_model").get<double>();
    if (j.contains("lr_rho")) base.lr_rho = j.at("lr_rho").get<double>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mode")) base.mode = parse_adjustment_mode(j.at("mode").get<std::string>());
    if (j.contains("freeze_rho")) {
      const auto& f = j.at("freeze_rho");
      base.freeze_rho = f.is_null() ? std::nullopt : std::optional<double>(f.get<double>());
    }
    if (j.contains("rho_dim")) base.rho_dim = parse_rho_dim(j.at("rho_dim").get<std::string>());
    if (j.contains("ignore_initial_valid_epochs"))
      base.ignore_initial_valid_epochs = j.at("ignore_initial_valid_epochs").get<std::size_t>();
    if (j.contains("record_timing")) base.record_timing = j.at("record_timing").get<bool>();
    if (j.contains("mpw_tol")) base.mpw_tol = j.at("mpw_tol").get<double>();
    if (j.contains("mpw_max_outer")) base.mpw_max_outer = j.at("mpw_max_outer").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad training config: ") + e.what());
  }
  return base;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

void LaggedSet::validate() const {
  const std::size_t n = input.rows;
  if (input_prev.rows != n || target.rows != n || target_prev.rows != n)
    throw ShapeError("lagged set parts disagree on row count");
  if (input_prev.cols != input.cols || target_prev.cols != target.cols)
    throw ShapeError("lagged set current and lagged parts disagree on width");
  if (!index.empty() && index.size() != n) throw ShapeError("lagged set index has wrong length");
  if (tiles == 0 || series == 0 || tiles * series != input.cols)
    throw ShapeError("lagged set input width is not tiles x series");
}

LaggedSet lagged_windows(const SeriesFrame& frame, std::size_t begin, std::size_t end,
                         std::size_t window, std::span<const double> fill) {
  const std::size_t n_series = frame.width();
  if (fill.size() != n_series) throw ShapeError("fill vector width differs from frame width");
  if (window == 0) throw InputError("window must be positive");
  const auto targets = window_targets(begin, std::min(end, frame.length()), window);
  if (targets.empty())
    throw InputError("split too short for window " + std::to_string(window));
  LaggedSet set;
  const std::size_t rows = targets.size();
  const std::size_t width = window * n_series;
  set.input = Matrix(rows, width);
  set.input_prev = Matrix(rows, width);
  set.target = Matrix(rows, n_series);
  set.target_prev = Matrix(rows, n_series);
  set.index = targets;
  set.tiles = window;
  set.series = n_series;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t t = targets[i];
    for (std::size_t j = 0; j < window; ++j) {
      const auto cur = frame.row(t - 1 - j);
      for (std::size_t k = 0; k < n_series; ++k) {
        set.input(i, j * n_series + k) = cur[k];
        set.input_prev(i, j * n_series + k) = t >= j + 2 ? frame(t - 2 - j, k) : fill[k];
      }
    }
    for (std::size_t k = 0; k < n_series; ++k) {
      set.target(i, k) = frame(t, k);
      set.target_prev(i, k) = frame(t - 1, k);
    }
  }
  return set;
}

Matrix transform_window(const Matrix& history, const std::optional<std::vector<double>>& preceding,
                        std::span<const double> rho, std::span<const double> mean) {
  const std::size_t w = history.rows;
  const std::size_t n = history.cols;
  check_rho_width(rho, n);
  if (preceding && preceding->size() != n) throw ShapeError("preceding row has wrong width");
  if (!preceding && mean.size() != n) throw ShapeError("mean vector has wrong width");
  Matrix out(w, n);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      const double prev =
          j + 1 < w ? history(j + 1, k) : (preceding ? (*preceding)[k] : mean[k]);
      out(j, k) = history(j, k) - rho_at(rho, k) * prev;
    }
  }
  return out;
}

std::vector<double> transform_target(std::span<const double> x_t, std::span<const double> x_prev,
                                     std::span<const double> rho) {
  if (x_t.size() != x_prev.size()) throw ShapeError("target and lagged target differ in width");
  check_rho_width(rho, x_t.size());
  std::vector<double> out(x_t.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x_t[k] - rho_at(rho, k) * x_prev[k];
  return out;
}

std::vector<double> recover_forecast(std::span<const double> model_output,
                                     std::span<const double> x_prev, std::span<const double> rho) {
  if (model_output.size() != x_prev.size()) throw ShapeError("output and lagged row differ in width");
  check_rho_width(rho, x_prev.size());
  std::vector<double> out(x_prev.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = model_output[k] + rho_at(rho, k) * x_prev[k];
  return out;
}

std::vector<double> input_rho(AdjustmentMode mode, std::span<const double> rho) {
  if (!sides_of(mode).input) return {};
  return {rho.begin(), rho.end()};
}

std::vector<double> output_rho(AdjustmentMode mode, std::span<const double> rho) {
  if (!sides_of(mode).output) return {};
  return {rho.begin(), rho.end()};
}

TrainOutcome train_adjusted(const LaggedSet& train, const LaggedSet& valid, const ModelSpec& spec,
                            const TrainConfig& cfg, std::size_t rho_dim) {
  cfg.validate();
  spec.validate();
  check_set_against_spec(train, spec, "training");
  check_set_against_spec(valid, spec, "validation");
  check_rho_dim(rho_dim, train);

  Model model = build_model(spec, cfg.seed);
  RhoParam rho(rho_dim);
  const Sides sides = sides_of(cfg.mode);
  const bool adjusting = sides.input || sides.output;
  const bool trainable = adjusting && !cfg.freeze_rho;
  const std::vector<double> fixed = frozen_rho(cfg, rho_dim);

  std::vector<Adam::Group> groups{{model.parameters(), cfg.lr_model}};
  if (trainable) groups.push_back({{&rho.raw}, cfg.lr_rho});
  Adam opt(std::move(groups));

  const LossFn loss_fn = [&](ad::Tape& tape, const LaggedSet& set,
                             std::span<const std::size_t> rows) {
    ad::Var x = tape.constant(gather(set.input, rows));
    ad::Var y = tape.constant(gather(set.target, rows));
    if (adjusting) {
      const ad::Var r = trainable ? ad::tanh(tape.param(rho.raw))
                                  : tape.constant(ad::Tensor(1, rho_dim, fixed));
      if (sides.input) x = quasi_diff(x, tape.constant(gather(set.input_prev, rows)), r, set.tiles);
      if (sides.output) y = quasi_diff(y, tape.constant(gather(set.target_prev, rows)), r, 1);
    }
    return ad::mse(model.forward(tape, x), y);
  };

  const auto rho_mean = [&] {
    if (!adjusting) return 0.0;
    const auto r = trainable ? rho.effective() : fixed;
    return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  };
  LoopResult loop =
      run_loop(model, trainable ? &rho.raw : nullptr, opt, train, valid, cfg, loss_fn, rho_mean);
  TrainOutcome out{std::move(model), {}, {}, std::move(loop.curves), loop.best_epoch,
                   loop.epochs_run};
  if (!adjusting) {
    out.rho.assign(rho_dim, 0.0);
  } else if (trainable) {
    out.rho = rho.effective();
    out.rho_raw = rho.raw.value.data;
  } else {
    out.rho = fixed;
  }
  return out;
}

TrainOutcome train_two_model(const LaggedSet& train, const LaggedSet& valid, const ModelSpec& spec,
                             const TrainConfig& cfg, std::span<const double> rho,
                             const Model* init) {
  cfg.validate();
  spec.validate();
  check_set_against_spec(train, spec, "training");
  check_set_against_spec(valid, spec, "validation");
  check_rho_width(rho, train.target.cols);
  check_rho_dim(rho.size(), train);

  Model model = init ? *init : build_model(spec, cfg.seed);
  Adam opt({{model.parameters(), cfg.lr_model}});
  const bool zero = std::all_of(rho.begin(), rho.end(), [](double r) { return r == 0.0; });
  const std::vector<double> rho_values(rho.begin(), rho.end());

  const LossFn loss_fn = [&](ad::Tape& tape, const LaggedSet& set,
                             std::span<const std::size_t> rows) {
    const ad::Var x = tape.constant(gather(set.input, rows));
    const ad::Var y = tape.constant(gather(set.target, rows));
    if (zero) return ad::mse(model.forward(tape, x), y);
    const ad::Var r = tape.constant(ad::Tensor(1, rho_values.size(), rho_values));
    const ad::Var x_prev = tape.constant(gather(set.input_prev, rows));
    const ad::Var y_prev = tape.constant(gather(set.target_prev, rows));
    const ad::Var pred = quasi_diff(model.forward(tape, x), model.forward(tape, x_prev), r, 1);
    return ad::mse(pred, quasi_diff(y, y_prev, r, 1));
  };

  const double mean_rho = std::accumulate(rho_values.begin(), rho_values.end(), 0.0) /
                         static_cast<double>(rho_values.size());
  LoopResult loop =
      run_loop(model, nullptr, opt, train, valid, cfg, loss_fn, [mean_rho] { return mean_rho; });
  return TrainOutcome{std::move(model), rho_values, {}, std::move(loop.curves), loop.best_epoch,
                      loop.epochs_run};
}

Matrix predict_transformed(const Model& model, const LaggedSet& set,
                           std::span<const double> rho_in) {
  if (!rho_in.empty()) check_rho_width(rho_in, set.series);
  return to_matrix(model.predict(to_tensor(quasi_diff_matrix(set.input, set.input_prev, rho_in))));
}

Matrix transformed_targets(const LaggedSet& set, std::span<const double> rho_out) {
  if (!rho_out.empty()) check_rho_width(rho_out, set.target.cols);
  return quasi_diff_matrix(set.target, set.target_prev, rho_out);
}

Matrix predict_recovered(const Model& model, const LaggedSet& set, AdjustmentMode mode,
                         std::span<const double> rho) {
  const auto r_in = input_rho(mode, rho);
  const auto r_out = output_rho(mode, rho);
  Matrix out = predict_transformed(model, set, r_in);
  if (!r_out.empty()) {
    check_rho_width(r_out, out.cols);
    for (std::size_t r = 0; r < out.rows; ++r)
      for (std::size_t c = 0; c < out.cols; ++c) out(r, c) += rho_at(r_out, c) * set.target_prev(r, c);
  }
  return out;
}

Matrix predict_two_model(const Model& model, const LaggedSet& set, std::span<const double> rho) {
  check_rho_width(rho, set.target.cols);
  Matrix out = to_matrix(model.predict(to_tensor(set.input)));
  const Matrix prev = to_matrix(model.predict(to_tensor(set.input_prev)));
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c = 0; c < out.cols; ++c)
      out(r, c) += rho_at(rho, c) * (set.target_prev(r, c) - prev(r, c));
  return out;
}

std::vector<double> estimate_rho_from_residuals(const Model& model, const LaggedSet& set,
                                                std::size_t dim) {
  const Matrix pred = to_matrix(model.predict(to_tensor(set.input)));
  const std::size_t lead = set.first_prev_observed ? 1 : 0;
  Matrix e(set.size() + lead, set.target.cols);
  if (lead) {
    const std::vector<std::size_t> first{0};
    const ad::Tensor p0 = model.predict(gather(set.input_prev, first));
    for (std::size_t c = 0; c < e.cols; ++c) e(0, c) = set.target_prev(0, c) - p0.data[c];
  }
  for (std::size_t r = 0; r < set.size(); ++r)
    for (std::size_t c = 0; c < e.cols; ++c) e(r + lead, c) = set.target(r, c) - pred(r, c);

  std::vector<double> per(e.cols, 0.0);
  for (std::size_t c = 0; c < e.cols; ++c) {
    try {
      per[c] = std::clamp(stats::residual_autocorrelation(e.column(c)), -kRhoLimit, kRhoLimit);
    } catch (const UndefinedStatistic&) {
      per[c] = 0.0;
    }
  }
  if (dim == per.size()) return per;
  if (dim != 1) throw ShapeError("rho dimension must be 1 or the number of series");
  return {std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size())};
}

MpwOutcome naive_mpw_lagged(const LaggedSet& train, const LaggedSet& valid, const ModelSpec& spec,
                            const TrainConfig& cfg, std::size_t rho_dim,
                            std::size_t max_outer_iters) {
  if (max_outer_iters == 0) throw InputError("mpw needs at least one outer iteration");
  check_rho_dim(rho_dim, train);
  MpwOutcome out;
  std::vector<double> rho(rho_dim, 0.0);
  out.rho_path.push_back(rho);
  out.fit = train_two_model(train, valid, spec, cfg, rho, nullptr);
  for (std::size_t k = 1; k <= max_outer_iters; ++k) {
    const std::vector<double> next = estimate_rho_from_residuals(out.fit.model, train, rho_dim);
    double delta = 0.0;
    for (std::size_t i = 0; i < rho_dim; ++i) delta = std::max(delta, std::abs(next[i] - rho[i]));
    rho = next;
    out.rho_path.push_back(rho);
    TrainConfig inner = cfg;
    inner.seed = derive_seed(cfg.seed, {kOuterStream, k});
    const Model warm = out.fit.model;
    out.fit = train_two_model(train, valid, spec, inner, rho, &warm);
    out.outer_iterations = k;
    if (delta < cfg.mpw_tol) break;
  }
  return out;
}

std::string loss_curve_csv(const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i)
    out += std::to_string(i + 1) + "," + format_double(losses[i]) + "\n";
  return out;
}

namespace {

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json vector_json(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(finite_or_null(x));
  return a;
}

struct Prepared {
  Normalizer norm;
  LaggedSet train, valid, test;
  Matrix valid_actual, test_actual;  // original units
  std::size_t series = 0;
};

Matrix rows_of(const SeriesFrame& frame, const std::vector<std::size_t>& index, std::size_t offset) {
  Matrix out(index.size(), frame.width());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto src = frame.row(index[i] - offset);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Prepared prepare(const SeriesFrame& train, const SeriesFrame& valid, const SeriesFrame& test,
                 const ModelSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = train.width();
  if (valid.width() != n || test.width() != n)
    throw ShapeError("train, validation and test splits differ in width");
  if (valid.names() != train.names() || test.names() != train.names())
    throw InputError("splits carry different column names");
  const std::pair<const char*, const SeriesFrame*> parts[] = {
      {"training", &train}, {"validation", &valid}, {"test", &test}};
  for (const auto& [label, part] : parts)
    if (part->length() < cfg.window + 2)
      throw InputError(std::string(label) + " split has " + std::to_string(part->length()) +
                       " rows, window " + std::to_string(cfg.window) + " needs at least " +
                       std::to_string(cfg.window + 2));
  if (spec.input_dim != cfg.window * n || spec.output_dim != n)
    throw ShapeError("model spec does not match window " + std::to_string(cfg.window) + " over " +
                     std::to_string(n) + " series");

  Prepared p;
  p.series = n;
  p.norm = Normalizer::fit(train);
  const std::size_t a = train.length();
  const std::size_t b = a + valid.length();
  Matrix all(b + test.length(), n);
  std::copy(train.values().data.begin(), train.values().data.end(), all.data.begin());
  std::copy(valid.values().data.begin(), valid.values().data.end(),
            all.data.begin() + static_cast<std::ptrdiff_t>(a * n));
  std::copy(test.values().data.begin(), test.values().data.end(),
            all.data.begin() + static_cast<std::ptrdiff_t>(b * n));
  const SeriesFrame normalized = p.norm.apply(SeriesFrame(std::move(all), train.names()));

  std::vector<double> fill(n, 0.0);
  for (std::size_t t = 0; t < a; ++t)
    for (std::size_t k = 0; k < n; ++k) fill[k] += normalized(t, k);
  for (double& f : fill) f /= static_cast<double>(a);

  p.train = lagged_windows(normalized, 0, a, cfg.window, fill);
  p.valid = lagged_windows(normalized, a, b, cfg.window, fill);
  p.test = lagged_windows(normalized, b, normalized.length(), cfg.window, fill);
  p.valid_actual = rows_of(valid, p.valid.index, a);
  p.test_actual = rows_of(test, p.test.index, b);
  return p;
}

Matrix denormalize(const Normalizer& norm, Matrix m) {
  for (std::size_t r = 0; r < m.rows; ++r) norm.invert_row(m.row(r));
  return m;
}

double safe_rrmse(const Matrix& actual, const Matrix& pred) {
  try {
    return stats::rrmse(actual, pred);
  } catch (const UndefinedStatistic&) {
    return kNaN;
  }
}

void fill_diagnostics(FitReport& r, const Matrix& actual, const Matrix& pred) {
  Matrix e(actual.rows, actual.cols);
  double sq = 0.0;
  for (std::size_t i = 0; i < e.data.size(); ++i) {
    e.data[i] = actual.data[i] - pred.data[i];
    sq += e.data[i] * e.data[i];
  }
  r.test_mse = sq / static_cast<double>(e.data.size());
  r.test_rrmse = safe_rrmse(actual, pred);
  r.remaining_autocorrelation_per_series.assign(e.cols, kNaN);
  r.durbin_watson_per_series.assign(e.cols, kNaN);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < e.cols; ++c) {
    const auto col = e.column(c);
    try {
      r.remaining_autocorrelation_per_series[c] = stats::residual_autocorrelation(col);
      sum += r.remaining_autocorrelation_per_series[c];
      ++defined;
    } catch (const UndefinedStatistic&) {
    }
    try {
      r.durbin_watson_per_series[c] = stats::durbin_watson(col);
    } catch (const UndefinedStatistic&) {
    }
  }
  r.remaining_autocorrelation = defined ? sum / static_cast<double>(defined) : kNaN;
}

FitReport base_report(const std::string& method, const ModelSpec& spec, const TrainConfig& cfg) {
  FitReport r;
  r.method = method;
  r.mode = cfg.mode;
  r.rho_frozen = cfg.freeze_rho.has_value();
  r.seed = cfg.seed;
  r.config = {{"train", cfg.to_json()}, {"model", spec.to_json()}};
  return r;
}

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

nlohmann::json FitReport::to_json() const {
  nlohmann::json j;
  j["schema"] = kFitReportSchema;
  j["method"] = method;
  j["mode"] = to_string(mode);
  j["rho_frozen"] = rho_frozen;
  j["seed"] = seed;
  j["config"] = config;
  j["rho"] = vector_json(rho);
  j["rho_raw"] = vector_json(rho_raw);
  j["best_epoch"] = best_epoch;
  j["epochs_run"] = epochs_run;
  j["outer_iterations"] = outer_iterations;
  j["loss"] = {{"train", vector_json(curves.train)}, {"valid", vector_json(curves.valid)}};
  j["rho_trace"] = vector_json(curves.rho);
  j["diagnostics"] = {
      {"remaining_autocorrelation", finite_or_null(remaining_autocorrelation)},
      {"remaining_autocorrelation_per_series", vector_json(remaining_autocorrelation_per_series)},
      {"durbin_watson_per_series", vector_json(durbin_watson_per_series)},
      {"test_rrmse", finite_or_null(test_rrmse)},
      {"test_rrmse_transformed", finite_or_null(test_rrmse_transformed)},
      {"test_mse", finite_or_null(test_mse)},
      {"valid_rrmse", finite_or_null(valid_rrmse)},
  };
  j["wall_clock_s"] = wall_clock_s ? nlohmann::json(*wall_clock_s) : nlohmann::json(nullptr);
  j["checkpoint"] = checkpoint;
  return j;
}

FitReport joint_train(const SeriesFrame& train, const SeriesFrame& valid, const SeriesFrame& test,
                      const ModelSpec& spec, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Prepared p = prepare(train, valid, test, spec, cfg);
  const std::size_t dim = resolve_rho_dim(cfg.rho_dim, p.series);
  TrainOutcome fit = train_adjusted(p.train, p.valid, spec, cfg, dim);

  FitReport r = base_report(cfg.mode == AdjustmentMode::none ? "wo" : (cfg.freeze_rho ? "fixed" : "w"),
                            spec, cfg);
  r.rho = fit.rho;
  r.rho_raw = fit.rho_raw;
  r.curves = fit.curves;
  r.best_epoch = fit.best_epoch;
  r.epochs_run = fit.epochs_run;

  const Matrix test_pred = denormalize(p.norm, predict_recovered(fit.model, p.test, cfg.mode, fit.rho));
  fill_diagnostics(r, p.test_actual, test_pred);
  r.valid_rrmse = safe_rrmse(p.valid_actual,
                             denormalize(p.norm, predict_recovered(fit.model, p.valid, cfg.mode, fit.rho)));
  r.test_rrmse_transformed =
      safe_rrmse(transformed_targets(p.test, output_rho(cfg.mode, fit.rho)),
                 predict_transformed(fit.model, p.test, input_rho(cfg.mode, fit.rho)));
  r.checkpoint = checkpoint_to_json(
      fit.model, cfg.seed,
      {{"rho", vector_json(fit.rho)}, {"mode", to_string(cfg.mode)},
       {"normalizer", {{"mean", p.norm.mean}, {"std", p.norm.std}}}});
  if (cfg.record_timing) r.wall_clock_s = elapsed_s(start);
  return r;
}

FitReport naive_mpw_train(const SeriesFrame& train, const SeriesFrame& valid,
                          const SeriesFrame& test, const ModelSpec& spec, const TrainConfig& cfg,
                          std::size_t max_outer_iters) {
  const auto start = std::chrono::steady_clock::now();
  const Prepared p = prepare(train, valid, test, spec, cfg);
  const std::size_t dim = resolve_rho_dim(cfg.rho_dim, p.series);
  MpwOutcome mpw = naive_mpw_lagged(p.train, p.valid, spec, cfg, dim, max_outer_iters);
  const TrainOutcome& fit = mpw.fit;

  FitReport r = base_report("mpw", spec, cfg);
  r.rho = fit.rho;
  r.curves = fit.curves;
  r.best_epoch = fit.best_epoch;
  r.epochs_run = fit.epochs_run;
  r.outer_iterations = mpw.outer_iterations;

  const Matrix test_pred = denormalize(p.norm, predict_two_model(fit.model, p.test, fit.rho));
  fill_diagnostics(r, p.test_actual, test_pred);
  r.valid_rrmse =
      safe_rrmse(p.valid_actual, denormalize(p.norm, predict_two_model(fit.model, p.valid, fit.rho)));
  r.test_rrmse_transformed = safe_rrmse(transformed_targets(p.test, fit.rho),
                                        predict_transformed(fit.model, p.test, {}));
  r.checkpoint = checkpoint_to_json(
      fit.model, cfg.seed,
      {{"rho", vector_json(fit.rho)}, {"method", "mpw"},
       {"normalizer", {{"mean", p.norm.mean}, {"std", p.norm.std}}}});
  if (cfg.record_timing) r.wall_clock_s = elapsed_s(start);
  return r;
}

std::vector<double> default_rho_grid() {
  return {-1.0, -0.9, -0.75, -0.6, -0.45, -0.3, -0.15, 0.0,
          0.15, 0.3,  0.45,  0.6,  0.75,  0.9,  1.0};
}

nlohmann::json GridSearchResult::to_json() const {
  nlohmann::json table_json = nlohmann::json::array();
  for (std::size_t i = 0; i < table.size(); ++i) {
    nlohmann::json row = {{"rho", table[i].first}, {"valid_rrmse", finite_or_null(table[i].second)}};
    if (i < reports.size()) row["test_rrmse"] = finite_or_null(reports[i].test_rrmse);
    table_json.push_back(row);
  }
  return {{"schema", "acadj.grid_search/1"}, {"best_rho", best_rho}, {"table", table_json}};
}

GridSearchResult grid_search_rho(const SeriesFrame& train, const SeriesFrame& valid,
                                 const SeriesFrame& test, const ModelSpec& spec,
                                 const TrainConfig& cfg, std::span<const double> grid) {
  if (grid.empty()) throw InputError("rho grid is empty");
  for (double g : grid)
    if (!(std::abs(g) <= 1.0)) throw InputError("grid value outside [-1, 1]");
  GridSearchResult out;
  double best = std::numeric_limits<double>::infinity();
  for (double g : grid) {
    TrainConfig c = cfg;
    c.mode = AdjustmentMode::both;
    c.freeze_rho = g;
    FitReport rep = joint_train(train, valid, test, spec, c);
    const double score = std::isfinite(rep.valid_rrmse) ? rep.valid_rrmse
                                                        : std::numeric_limits<double>::infinity();
    out.table.emplace_back(g, rep.valid_rrmse);
    // Ties go to the smaller rho so the choice does not depend on grid order.
    if (score < best || (score == best && g < out.best_rho)) {
      best = score;
      out.best_rho = g;
    }
    out.reports.push_back(std::move(rep));
  }
  return out;
}

}  // namespace acadj
