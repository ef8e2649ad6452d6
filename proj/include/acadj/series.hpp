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

// Multivariate series container, CSV I/O, chronological splits,
// train-statistics normalization and supervised windowing.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "acadj/matrix.hpp"

namespace acadj {

// T x N series with one named column per variable. Rows are time steps in
// temporal order. Values are finite.
class SeriesFrame {
 public:
  SeriesFrame() = default;
  SeriesFrame(Matrix values, std::vector<std::string> names);

  std::size_t length() const noexcept { return values_.rows; }
  std::size_t width() const noexcept { return values_.cols; }

  const Matrix& values() const noexcept { return values_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

  double operator()(std::size_t t, std::size_t j) const { return values_(t, j); }
  std::span<const double> row(std::size_t t) const { return values_.row(t); }

  // Rows [begin, end) as a new frame.
  SeriesFrame slice(std::size_t begin, std::size_t end) const;

  bool operator==(const SeriesFrame&) const = default;

 private:
  Matrix values_;
  std::vector<std::string> names_;
};

// Default column names x0, x1, ... for headerless input.
std::vector<std::string> default_names(std::size_t n);

SeriesFrame parse_csv(std::string_view text, bool has_header);
SeriesFrame load_csv(const std::filesystem::path& path, bool has_header = true);

// Shortest round-trip decimal for each value, '\n' line endings.
std::string format_csv(const SeriesFrame& frame, bool with_header = true);
void save_csv(const SeriesFrame& frame, const std::filesystem::path& path,
              bool with_header = true);

// Shortest round-trip text for one double.
std::string format_double(double v);

struct SplitSpec {
  double train_frac = 0.6;
  double valid_frac = 0.2;
  double test_frac = 0.2;

  void validate() const;
};

struct SplitBounds {
  std::size_t train_end = 0;  // [0, train_end)
  std::size_t valid_end = 0;  // [train_end, valid_end); test is [valid_end, T)
  std::size_t total = 0;
};

// Boundaries at floor(T * train_frac) and floor(T * (train_frac + valid_frac));
// the remainder goes to test.
SplitBounds split_bounds(std::size_t length, const SplitSpec& spec);

struct Splits {
  SeriesFrame train;
  SeriesFrame valid;
  SeriesFrame test;
};

// When window > 0 every split must hold at least window + 2 rows.
Splits split_chronological(const SeriesFrame& frame, const SplitSpec& spec,
                           std::size_t window = 0);

// Per-column affine map to zero mean and unit population variance, fitted on
// the training split only.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<std::size_t> degenerate;  // columns whose std was forced to 1

  static Normalizer fit(const SeriesFrame& train);

  SeriesFrame apply(const SeriesFrame& frame) const;
  SeriesFrame invert(const SeriesFrame& frame) const;
  void apply_row(std::span<double> row) const;
  void invert_row(std::span<double> row) const;
};

struct WindowSpec {
  std::size_t window = 60;
  std::size_t horizon = 1;

  void validate() const;
};

// One supervised example for target index t.
struct Window {
  std::size_t target_index = 0;
  Matrix history;                            // row j = X_{t-1-j}, j = 0..W-1
  std::optional<std::vector<double>> preceding;  // X_{t-W-1}; empty = mean-fill
  std::vector<double> target;                // X_t
};

std::vector<Window> make_windows(const SeriesFrame& frame, const WindowSpec& spec);

// Target indices t in [max(begin, W), end). Histories for these targets may
// read rows before `begin`.
std::vector<std::size_t> window_targets(std::size_t begin, std::size_t end,
                                        std::size_t window);

}  // namespace acadj
