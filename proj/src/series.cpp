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

#include "acadj/series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "acadj/error.hpp"

namespace acadj {

SeriesFrame::SeriesFrame(Matrix values, std::vector<std::string> names)
    : values_(std::move(values)), names_(std::move(names)) {
  if (values_.rows < 1 || values_.cols < 1)
    throw InputError("series frame needs at least one row and one column");
  if (names_.size() != values_.cols)
    throw InputError("series frame has " + std::to_string(values_.cols) + " columns but " +
                     std::to_string(names_.size()) + " names");
  if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size())
    throw InputError("series column names must be distinct");
  for (std::size_t i = 0; i < values_.data.size(); ++i) {
    if (!std::isfinite(values_.data[i]))
      throw ParseError("non-finite value", i / values_.cols + 1, i % values_.cols + 1);
  }
}

SeriesFrame SeriesFrame::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > length()) throw InputError("empty or out-of-range slice");
  const std::size_t n = width();
  std::vector<double> out(values_.data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          values_.data.begin() + static_cast<std::ptrdiff_t>(end * n));
  return SeriesFrame(Matrix(end - begin, n, std::move(out)), names_);
}

std::vector<std::string> default_names(std::size_t n) {
  std::vector<std::string> names(n);
  for (std::size_t j = 0; j < n; ++j) names[j] = "x" + std::to_string(j);
  return names;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

}  // namespace

SeriesFrame parse_csv(std::string_view text, bool has_header) {
  std::vector<std::string> names;
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool header_pending = has_header;

  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (pos > text.size()) break;
      continue;
    }
    const auto fields = split_fields(line);
    if (header_pending) {
      for (auto f : fields) names.emplace_back(f);
      width = names.size();
      header_pending = false;
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ParseError("ragged row: expected " + std::to_string(width) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no, fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string_view f = fields[j];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size())
        throw ParseError("cannot parse '" + std::string(f) + "' as a number", line_no, j + 1);
      if (!std::isfinite(v)) throw ParseError("non-finite value", line_no, j + 1);
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw InputError("no data rows in CSV input");
  if (names.empty()) names = default_names(width);
  return SeriesFrame(Matrix(rows, width, std::move(values)), std::move(names));
}

SeriesFrame load_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), has_header);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_csv(const SeriesFrame& frame, bool with_header) {
  std::string out;
  if (with_header) {
    for (std::size_t j = 0; j < frame.width(); ++j) {
      if (j) out += ',';
      out += frame.names()[j];
    }
    out += '\n';
  }
  for (std::size_t t = 0; t < frame.length(); ++t) {
    for (std::size_t j = 0; j < frame.width(); ++j) {
      if (j) out += ',';
      out += format_double(frame(t, j));
    }
    out += '\n';
  }
  return out;
}

void save_csv(const SeriesFrame& frame, const std::filesystem::path& path, bool with_header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << format_csv(frame, with_header);
}

void SplitSpec::validate() const {
  for (double f : {train_frac, valid_frac, test_frac}) {
    if (!(f > 0.0 && f < 1.0)) throw InputError("split fractions must lie in (0, 1)");
  }
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-12)
    throw InputError("split fractions must sum to 1");
}

SplitBounds split_bounds(std::size_t length, const SplitSpec& spec) {
  spec.validate();
  // 1e-9 absorbs representation error such as 0.6 + 0.2 != 0.8.
  const auto floor_at = [length](double frac) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(length) * frac + 1e-9));
  };
  SplitBounds b;
  b.train_end = floor_at(spec.train_frac);
  b.valid_end = floor_at(spec.train_frac + spec.valid_frac);
  b.total = length;
  return b;
}

Splits split_chronological(const SeriesFrame& frame, const SplitSpec& spec, std::size_t window) {
  const SplitBounds b = split_bounds(frame.length(), spec);
  const std::size_t need = window > 0 ? window + 2 : 1;
  const std::size_t lens[3] = {b.train_end, b.valid_end - b.train_end, b.total - b.valid_end};
  static constexpr const char* kNames[3] = {"train", "valid", "test"};
  for (int i = 0; i < 3; ++i) {
    if (lens[i] < need)
      throw InputError(std::string(kNames[i]) + " split has " + std::to_string(lens[i]) +
                       " rows; need at least " + std::to_string(need));
  }
  return Splits{frame.slice(0, b.train_end), frame.slice(b.train_end, b.valid_end),
                frame.slice(b.valid_end, b.total)};
}

Normalizer Normalizer::fit(const SeriesFrame& train) {
  const std::size_t n = train.width();
  const double count = static_cast<double>(train.length());
  Normalizer norm;
  norm.mean.assign(n, 0.0);
  norm.std.assign(n, 0.0);
  for (std::size_t t = 0; t < train.length(); ++t)
    for (std::size_t j = 0; j < n; ++j) norm.mean[j] += train(t, j);
  for (double& m : norm.mean) m /= count;
  for (std::size_t t = 0; t < train.length(); ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = train(t, j) - norm.mean[j];
      norm.std[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    norm.std[j] = std::sqrt(norm.std[j] / count);
    if (norm.std[j] <= 1e-12 * (1.0 + std::abs(norm.mean[j]))) {
      norm.std[j] = 1.0;
      norm.degenerate.push_back(j);
    }
  }
  return norm;
}

void Normalizer::apply_row(std::span<double> row) const {
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / std[j];
}

void Normalizer::invert_row(std::span<double> row) const {
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = row[j] * std[j] + mean[j];
}

SeriesFrame Normalizer::apply(const SeriesFrame& frame) const {
  if (frame.width() != mean.size()) throw ShapeError("normalizer width mismatch");
  Matrix m = frame.values();
  for (std::size_t t = 0; t < m.rows; ++t) apply_row(m.row(t));
  return SeriesFrame(std::move(m), frame.names());
}

SeriesFrame Normalizer::invert(const SeriesFrame& frame) const {
  if (frame.width() != mean.size()) throw ShapeError("normalizer width mismatch");
  Matrix m = frame.values();
  for (std::size_t t = 0; t < m.rows; ++t) invert_row(m.row(t));
  return SeriesFrame(std::move(m), frame.names());
}

void WindowSpec::validate() const {
  if (window < 1) throw InputError("window length must be at least 1");
  if (horizon != 1) throw InputError("only one-step-ahead horizons are supported");
}

std::vector<std::size_t> window_targets(std::size_t begin, std::size_t end, std::size_t window) {
  std::vector<std::size_t> out;
  for (std::size_t t = std::max(begin, window); t < end; ++t) out.push_back(t);
  return out;
}

std::vector<Window> make_windows(const SeriesFrame& frame, const WindowSpec& spec) {
  spec.validate();
  const std::size_t w = spec.window;
  const std::size_t n = frame.width();
  if (frame.length() < w + 1)
    throw InputError("series of length " + std::to_string(frame.length()) +
                     " is too short for window " + std::to_string(w));
  std::vector<Window> out;
  out.reserve(frame.length() - w);
  for (std::size_t t : window_targets(0, frame.length(), w)) {
    Window win;
    win.target_index = t;
    win.history = Matrix(w, n);
    for (std::size_t j = 0; j < w; ++j) {
      const auto src = frame.row(t - 1 - j);
      std::copy(src.begin(), src.end(), win.history.row(j).begin());
    }
    if (t >= w + 1) {
      const auto src = frame.row(t - w - 1);
      win.preceding.emplace(src.begin(), src.end());
    }
    const auto tgt = frame.row(t);
    win.target.assign(tgt.begin(), tgt.end());
    out.push_back(std::move(win));
  }
  return out;
}

}  // namespace acadj
