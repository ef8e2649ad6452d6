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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "acadj/adjust.hpp"
#include "acadj/bench.hpp"
#include "acadj/error.hpp"
#include "acadj/stats.hpp"

using namespace acadj;

namespace {

struct SmallProblem {
  Splits splits;
  ModelSpec spec;
  TrainConfig cfg;
};

SmallProblem small_problem(std::uint64_t seed = 3) {
  Rng rng(seed);
  bench::ForecastFixture fx;
  fx.T = 240;
  fx.N = 2;
  const SeriesFrame frame = bench::synthetic_forecast_frame(fx, rng);
  SmallProblem p{split_chronological(frame, SplitSpec{}, 6), ModelSpec::window_forecaster(6, 2, 8, 3),
                 TrainConfig{}};
  p.cfg.window = 6;
  p.cfg.epochs = 6;
  p.cfg.patience = 6;
  p.cfg.batch_size = 16;
  p.cfg.seed = 11;
  return p;
}

}  // namespace

TEST_SUITE("adjust") {
  TEST_CASE("rho parameter starts at zero and stays inside the unit interval") {
    RhoParam r(3);
    CHECK(r.dim() == 3);
    CHECK(r.effective() == std::vector<double>{0.0, 0.0, 0.0});
    r.raw.value.data = {-30.0, 0.5, 1e3};
    for (double v : r.effective()) CHECK(std::abs(v) <= 1.0);
    r.raw.value.data = {-3.0, 0.5, 4.0};
    for (double v : r.effective()) CHECK(std::abs(v) < 1.0);
  }

  TEST_CASE("scalar below three hundred series, vector from three hundred") {
    CHECK(resolve_rho_dim(RhoDim::automatic, 299) == 1);
    CHECK(resolve_rho_dim(RhoDim::automatic, 300) == 300);
    CHECK(resolve_rho_dim(RhoDim::scalar, 500) == 1);
    CHECK(resolve_rho_dim(RhoDim::vector, 4) == 4);
    CHECK(parse_rho_dim("auto") == RhoDim::automatic);
    CHECK_THROWS_AS(parse_rho_dim("matrix"), InputError);
  }

  TEST_CASE("mode names round trip") {
    for (auto m : {AdjustmentMode::none, AdjustmentMode::input_only, AdjustmentMode::output_only,
                   AdjustmentMode::both})
      CHECK(parse_adjustment_mode(to_string(m)) == m);
    CHECK_THROWS_AS(parse_adjustment_mode("sideways"), InputError);
    const std::vector<double> rho{0.4};
    CHECK(input_rho(AdjustmentMode::output_only, rho).empty());
    CHECK(output_rho(AdjustmentMode::output_only, rho) == rho);
    CHECK(input_rho(AdjustmentMode::input_only, rho) == rho);
    CHECK(output_rho(AdjustmentMode::none, rho).empty());
  }

  TEST_CASE("transform window closed cases") {
    const Matrix hist(3, 1, std::vector<double>{5, 3, 2});
    const std::vector<double> mean{1.0};
    const std::vector<double> half{0.5};
    CHECK(transform_window(hist, std::nullopt, half, mean).data == std::vector<double>{3.5, 2.0, 1.5});
    const std::vector<double> zero{0.0};
    CHECK(transform_window(hist, std::nullopt, zero, mean) == hist);
    const std::vector<double> one{1.0};
    const Matrix diff = transform_window(hist, std::vector<double>{1.5}, one, mean);
    CHECK(diff.data == std::vector<double>{2.0, 1.0, 0.5});
    const std::vector<double> wide{0.1, 0.2};
    CHECK_THROWS_AS(transform_window(hist, std::nullopt, wide, mean), ShapeError);
  }

  TEST_CASE("vector rho acts per series") {
    const Matrix hist(2, 2, std::vector<double>{4, 10, 2, 20});
    const std::vector<double> rho{0.5, 0.1}, prev{0.0, 30.0};
    const Matrix out = transform_window(hist, prev, rho, std::vector<double>{0, 0});
    CHECK(out.data == std::vector<double>{3.0, 8.0, 2.0, 17.0});
  }

  TEST_CASE("target transform and recovery") {
    const std::vector<double> x{4}, p{2}, r{0.25}, z{0};
    CHECK(transform_target(x, p, r) == std::vector<double>{3.5});
    CHECK(transform_target(x, p, z) == x);
    CHECK(recover_forecast(x, p, z) == x);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 3.0);
    std::uniform_real_distribution<double> u(-0.999, 0.999);
    for (int i = 0; i < 1000; ++i) {
      const std::vector<double> y{g(rng), g(rng)}, prev{g(rng), g(rng)}, rho{u(rng), u(rng)};
      const auto back = transform_target(recover_forecast(y, prev, rho), prev, rho);
      for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(back[k] - y[k]) <= 1e-12 * (1 + std::abs(y[k])));
    }
  }

  TEST_CASE("config validation and json round trip") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.patience = c.epochs + 1;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = TrainConfig{};
    c.lr_rho = 0.0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = TrainConfig{};
    c.freeze_rho = 0.3;
    c.mode = AdjustmentMode::input_only;
    const TrainConfig back = TrainConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"epochs", "many"}}), InputError);
    CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json::array()), InputError);
  }

  TEST_CASE("lagged windows line up with the frame") {
    const SeriesFrame f(Matrix(6, 1, std::vector<double>{1, 2, 3, 4, 5, 6}), {"x"});
    const std::vector<double> fill{-9.0};
    const LaggedSet s = lagged_windows(f, 0, 6, 2, fill);
    REQUIRE(s.size() == 4);
    CHECK(s.index.front() == 2);
    CHECK(s.input.row(0)[0] == 2.0);
    CHECK(s.input.row(0)[1] == 1.0);
    CHECK(s.input_prev.row(0)[0] == 1.0);
    CHECK(s.input_prev.row(0)[1] == -9.0);
    CHECK(s.input_prev.row(1)[1] == 1.0);
    CHECK(s.target(3, 0) == 6.0);
    CHECK(s.target_prev(3, 0) == 5.0);
    // a later split may read history from the one before it
    const LaggedSet late = lagged_windows(f, 4, 6, 3, fill);
    CHECK(late.index == std::vector<std::size_t>{4, 5});
    CHECK(late.input(0, 2) == 2.0);
  }

  TEST_CASE("frozen zero is bit-identical to the unadjusted trainer") {
    SmallProblem p = small_problem();
    TrainConfig none = p.cfg;
    none.mode = AdjustmentMode::none;
    TrainConfig frozen = p.cfg;
    frozen.freeze_rho = 0.0;
    const FitReport a = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, none);
    const FitReport b = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, frozen);
    CHECK(a.curves.train == b.curves.train);
    CHECK(a.curves.valid == b.curves.valid);
    CHECK(a.checkpoint.at("parameters") == b.checkpoint.at("parameters"));
    CHECK(b.rho_frozen);
    CHECK(b.rho_raw.empty());
  }

  TEST_CASE("joint training is deterministic and learns a bounded rho") {
    SmallProblem p = small_problem();
    const FitReport a = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg);
    const FitReport b = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg);
    CHECK(a.to_json().dump() == b.to_json().dump());
    REQUIRE(a.rho.size() == 1);
    CHECK(a.rho[0] != 0.0);
    CHECK(std::abs(a.rho[0]) < 1.0);
    CHECK(a.curves.train.size() == a.epochs_run);
    CHECK(a.curves.rho.size() == a.epochs_run);
    CHECK(a.best_epoch >= 1);
    CHECK(a.best_epoch <= a.epochs_run);
    CHECK(a.remaining_autocorrelation_per_series.size() == 2);
    for (double r : a.remaining_autocorrelation_per_series) CHECK(std::abs(r) <= 1.0);
    CHECK(std::isfinite(a.test_rrmse));
    CHECK_FALSE(a.wall_clock_s.has_value());
    const auto j = a.to_json();
    CHECK(j.at("schema") == kFitReportSchema);
    CHECK(j.contains("config"));
  }

  TEST_CASE("vector rho has one entry per series") {
    SmallProblem p = small_problem();
    p.cfg.rho_dim = RhoDim::vector;
    p.cfg.epochs = 2;
    p.cfg.patience = 2;
    const FitReport r = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg);
    CHECK(r.rho.size() == 2);
  }

  TEST_CASE("patience stops training early and restores the best epoch") {
    SmallProblem p = small_problem();
    p.cfg.epochs = 40;
    p.cfg.patience = 1;
    p.cfg.lr_model = 0.2;  // large steps make validation stall quickly
    const FitReport r = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg);
    CHECK(r.epochs_run < 40);
    CHECK(r.epochs_run == r.best_epoch + 1);
    const double best = r.curves.valid[r.best_epoch - 1];
    for (double v : r.curves.valid) CHECK(best <= v);
  }

  TEST_CASE("ignored initial epochs are never selected") {
    SmallProblem p = small_problem();
    p.cfg.ignore_initial_valid_epochs = 4;
    const FitReport r = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg);
    CHECK(r.best_epoch > 4);
  }

  TEST_CASE("too short splits are rejected") {
    SmallProblem p = small_problem();
    p.cfg.window = 100;
    p.spec = ModelSpec::window_forecaster(100, 2, 8, 3);
    CHECK_THROWS_AS(joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg), InputError);
  }

  TEST_CASE("alternating baseline starts from zero") {
    SmallProblem p = small_problem();
    p.cfg.epochs = 3;
    p.cfg.patience = 3;
    const FitReport r = naive_mpw_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg, 2);
    CHECK(r.method == "mpw");
    CHECK(r.outer_iterations >= 1);
    CHECK(r.outer_iterations <= 2);
    CHECK_THROWS_AS(
        naive_mpw_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg, 0), InputError);
  }

  TEST_CASE("alternating baseline on a linear regression is single-pass cochrane orcutt") {
    Rng rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t t_len = 600;
    Matrix x(t_len, 1);
    for (double& v : x.data) v = g(rng);
    const auto e = stats::simulate_ar1(0.6, 0.2, t_len, rng);
    std::vector<double> y(t_len);
    for (std::size_t t = 0; t < t_len; ++t) y[t] = 1.0 - 0.5 * x(t, 0) + e[t];
    Matrix xs(t_len - 1, 1);
    std::vector<double> ys(t_len - 1);
    for (std::size_t t = 1; t < t_len; ++t) {
      xs(t - 1, 0) = x(t, 0);
      ys[t - 1] = y[t];
    }
    LaggedSet s = bench::regression_set(xs, ys, x.row(0), y[0]);
    s.first_prev_observed = true;
    TrainConfig cfg;
    cfg.epochs = 1500;
    cfg.patience = 1500;
    cfg.batch_size = t_len;
    cfg.lr_model = 0.05;
    const MpwOutcome out = naive_mpw_lagged(s, s, ModelSpec::linear(1, 1), cfg, 1, 1);
    CHECK(out.rho_path.front() == std::vector<double>{0.0});
    CHECK(out.outer_iterations == 1);
    // independent route: OLS, lag-1 ratio of its residuals, OLS on quasi-differences
    Matrix design(t_len, 2);
    for (std::size_t t = 0; t < t_len; ++t) {
      design(t, 0) = 1.0;
      design(t, 1) = x(t, 0);
    }
    double sxx = 0, sxy = 0, mx = 0, my = 0;
    for (std::size_t t = 0; t < t_len; ++t) {
      mx += x(t, 0);
      my += y[t];
    }
    mx /= t_len;
    my /= t_len;
    for (std::size_t t = 0; t < t_len; ++t) {
      sxx += (x(t, 0) - mx) * (x(t, 0) - mx);
      sxy += (x(t, 0) - mx) * (y[t] - my);
    }
    const double b1 = sxy / sxx, b0 = my - b1 * mx;
    double num = 0, den = 0;
    for (std::size_t t = 1; t < t_len; ++t) {
      const double et = y[t] - b0 - b1 * x(t, 0), ep = y[t - 1] - b0 - b1 * x(t - 1, 0);
      num += et * ep;
      den += ep * ep;
    }
    const double rho = num / den;
    CHECK(std::abs(out.fit.rho[0] - rho) < 1e-3);
    const auto ps = out.fit.model.parameters();
    // quasi-differenced simple regression with intercept column (1 - rho)
    double a11 = 0, a12 = 0, a22 = 0, c1 = 0, c2 = 0;
    for (std::size_t t = 1; t < t_len; ++t) {
      const double z0 = 1.0 - rho, z1 = x(t, 0) - rho * x(t - 1, 0), w = y[t] - rho * y[t - 1];
      a11 += z0 * z0;
      a12 += z0 * z1;
      a22 += z1 * z1;
      c1 += z0 * w;
      c2 += z1 * w;
    }
    const double det = a11 * a22 - a12 * a12;
    const double beta0 = (a22 * c1 - a12 * c2) / det, beta1 = (a11 * c2 - a12 * c1) / det;
    CHECK(std::abs(ps[0]->value.data[0] - beta1) < 1e-3);
    CHECK(std::abs(ps[1]->value.data[0] - beta0) < 1e-3);
  }

  TEST_CASE("grid search") {
    CHECK(default_rho_grid().size() == 15);
    CHECK(default_rho_grid().front() == -1.0);
    CHECK(default_rho_grid().back() == 1.0);
    SmallProblem p = small_problem();
    p.cfg.epochs = 3;
    p.cfg.patience = 3;
    const std::vector<double> zero{0.0};
    const GridSearchResult g0 =
        grid_search_rho(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg, zero);
    TrainConfig none = p.cfg;
    none.mode = AdjustmentMode::none;
    const FitReport base = joint_train(p.splits.train, p.splits.valid, p.splits.test, p.spec, none);
    CHECK(g0.best_rho == 0.0);
    CHECK(g0.table[0].second == base.valid_rrmse);

    const std::vector<double> fwd{-0.5, 0.3, 1.0}, rev{1.0, 0.3, -0.5};
    const GridSearchResult a =
        grid_search_rho(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg, fwd);
    const GridSearchResult b =
        grid_search_rho(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg, rev);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.table[i].second == b.table[2 - i].second);
    CHECK(a.best_rho == b.best_rho);
    CHECK(a.to_json().at("table").size() == 3);
    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(grid_search_rho(p.splits.train, p.splits.valid, p.splits.test, p.spec, p.cfg, bad),
                    InputError);
  }

  TEST_CASE("loss curve csv") {
    CHECK(loss_curve_csv({0.5, 0.25}) == "epoch,loss\n1,0.5\n2,0.25\n");
  }

  TEST_CASE("freezing rho at the generator value whitens transformed residuals") {
    // Well-specified linear generator, so the transformed problem has iid errors.
    const int seeds = 5;
    const std::size_t t_len = 4000;
    double total = 0.0;
    std::size_t len = 0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(derive_seed(77, {static_cast<std::uint64_t>(s)}));
      std::normal_distribution<double> g(0.0, 1.0);
      Matrix x(t_len, 2);
      for (double& v : x.data) v = g(rng);
      const auto e = stats::simulate_ar1(0.75, 0.5, t_len, rng);
      std::vector<double> y(t_len);
      for (std::size_t t = 0; t < t_len; ++t) y[t] = 0.5 + x(t, 0) - 2.0 * x(t, 1) + e[t];
      const std::size_t n_train = t_len / 2, n_valid = t_len / 4;
      auto rows = [&](std::size_t a, std::size_t b) {
        Matrix m(b - a, 2);
        for (std::size_t t = a; t < b; ++t) m.row(t - a)[0] = x(t, 0), m.row(t - a)[1] = x(t, 1);
        return bench::regression_set(m, std::vector<double>(y.begin() + a, y.begin() + b),
                                     x.row(a - 1), y[a - 1]);
      };
      const LaggedSet train = rows(1, n_train), valid = rows(n_train, n_train + n_valid),
                      test = rows(n_train + n_valid, t_len);
      TrainConfig cfg;
      cfg.epochs = 200;
      cfg.patience = 200;
      cfg.batch_size = 256;
      cfg.lr_model = 2e-2;
      cfg.seed = 100 + s;
      cfg.freeze_rho = 0.75;
      const TrainOutcome out = train_adjusted(train, valid, ModelSpec::linear(2, 1), cfg, 1);
      const Matrix pred = predict_transformed(out.model, test, out.rho);
      const Matrix target = transformed_targets(test, out.rho);
      std::vector<double> r(pred.rows);
      for (std::size_t i = 0; i < pred.rows; ++i) r[i] = target(i, 0) - pred(i, 0);
      total += std::abs(stats::residual_autocorrelation(r));
      len = r.size();
    }
    CHECK(total / seeds < 3.0 / std::sqrt(static_cast<double>(len)));
  }
}
