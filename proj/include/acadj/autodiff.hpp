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

// Reverse-mode automatic differentiation over dense rank-2 tensors.
//
// Every primitive records its output and a local gradient rule on a Tape;
// backward() walks the tape in reverse recording order, so each node is
// visited once. Parameters live outside the tape and receive accumulated
// gradients; callers zero them between optimizer steps.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace acadj::ad {

struct Tensor {
  std::vector<std::size_t> shape;  // {rows, cols}
  std::vector<double> data;

  Tensor() : shape{0, 0} {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, data(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return shape[0]; }
  std::size_t cols() const noexcept { return shape[1]; }
  std::size_t size() const noexcept { return data.size(); }
  double item() const;

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const noexcept { return shape == o.shape; }
  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const Tensor& t);

class Parameter {
 public:
  explicit Parameter(Tensor value, std::string name = {});

  Tensor value;
  Tensor grad;

  std::uint64_t id() const noexcept { return id_; }
  const std::string& name() const noexcept { return name_; }
  void zero_grad();

 private:
  std::uint64_t id_;
  std::string name_;
};

class Tape;

// Handle to a recorded node.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter: backward() adds into param.grad.
  Var param(Parameter& p);

  // Used by primitives. `inputs` decides whether the node needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn rule);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn rule);

  const Tensor& value(std::size_t i) const { return nodes_[i].value; }
  bool needs_grad(std::size_t i) const { return nodes_[i].needs_grad; }
  // Gradient buffer of node i, allocated as zeros on first access.
  Tensor& grad(std::size_t i);
  const Tensor& grad_of(Var v) const { return nodes_[v.index].grad; }

  // loss must be 1 x 1.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear();

  // ReLU bookkeeping used by grad_check to skip points near kinks.
  void note_relu(std::span<const double> input);
  std::uint64_t relu_signature() const noexcept { return relu_signature_; }
  bool relu_at_kink() const noexcept { return relu_at_kink_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn rule;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  std::uint64_t relu_signature_ = 0xcbf29ce484222325ULL;
  bool relu_at_kink_ = false;
};

// Primitives. Shapes must match exactly; the only broadcasts are the scalar
// factor of scale() and the row vector of scale_columns().
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scalar_mul(double s, Var a);
Var scale(Var s, Var a);          // s is 1 x 1
Var scale_columns(Var a, Var v);  // a: m x n, v: 1 x n, out(i, j) = a(i, j) * v(j)
Var matmul(Var a, Var b);
Var relu(Var a);
Var tanh(Var a);
Var square(Var a);
Var mean(Var a);  // mean of all elements, 1 x 1
// axis 0 stacks rows, axis 1 joins columns.
Var concat(std::span<const Var> parts, int axis);
Var slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
          std::size_t col_end);

// Mean squared difference, the training loss.
Var mse(Var prediction, Var target);

// Central-difference gradient check of a scalar function recorded afresh on
// each call.
struct GradCheckEntry {
  std::uint64_t param_id = 0;
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // coordinates whose perturbation crossed a ReLU kink
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool at_kink = false;  // the base point itself sits on a ReLU kink
  bool passed = false;
};

using RecordedFn = std::function<Var(Tape&)>;

GradCheckReport grad_check(const RecordedFn& f, std::span<Parameter* const> params,
                           double eps = 1e-5, double tol = 1e-5);

}  // namespace acadj::ad
