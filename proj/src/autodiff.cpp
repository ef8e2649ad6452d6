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

#include "acadj/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "acadj/error.hpp"
#include "acadj/kernels.hpp"

namespace acadj::ad {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape{rows, cols}, data(std::move(values)) {
  if (data.size() != rows * cols)
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + std::to_string(rows) + "x" + std::to_string(cols));
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(*this));
  return data[0];
}

std::string shape_string(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

namespace {
std::atomic<std::uint64_t> next_param_id{1};
}

Parameter::Parameter(Tensor v, std::string name)
    : value(std::move(v)), grad(value.rows(), value.cols()), id_(next_param_id++),
      name_(std::move(name)) {}

void Parameter::zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }

const Tensor& Var::value() const { return tape->value(index); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn rule) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(rule));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn rule) {
  for (double x : value.data) {
    if (!std::isfinite(x)) throw NonFiniteError("non-finite value produced during forward pass");
  }
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.index].needs_grad;
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(rule) : BackwardFn{}, nullptr, needs});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.data.size() != n.value.data.size()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw Error("loss recorded on a different tape");
  const Tensor& lv = nodes_[loss.index].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward() needs a scalar loss, got " + shape_string(lv));
  for (Node& n : nodes_) n.grad = Tensor();
  grad(loss.index).data[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.data.empty()) continue;
    if (n.param != nullptr) {
      kernels::axpy(1.0, n.grad.data, n.param->grad.data);
    } else if (n.rule) {
      n.rule(*this, i);
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  relu_signature_ = 0xcbf29ce484222325ULL;
  relu_at_kink_ = false;
}

void Tape::note_relu(std::span<const double> input) {
  for (double x : input) {
    relu_signature_ = (relu_signature_ ^ (x > 0.0 ? 1u : 0u)) * 0x100000001b3ULL;
    if (x == 0.0) relu_at_kink_ = true;
  }
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
}

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw Error("operands recorded on different tapes");
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += y.data[i];
  const std::size_t ia = a.index, ib = b.index;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) kernels::axpy(1.0, g.data, t.grad(ia).data);
    if (t.needs_grad(ib)) kernels::axpy(1.0, t.grad(self).data, t.grad(ib).data);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same(x, y, "sub");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= y.data[i];
  const std::size_t ia = a.index, ib = b.index;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    if (t.needs_grad(ia)) kernels::axpy(1.0, t.grad(self).data, t.grad(ia).data);
    if (t.needs_grad(ib)) kernels::axpy(-1.0, t.grad(self).data, t.grad(ib).data);
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= y.data[i];
  const std::size_t ia = a.index, ib = b.index;
  return a.tape->record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      const Tensor& g = t.grad(self);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad(ib);
      const Tensor& g = t.grad(self);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * x.data[i];
    }
  });
}

Var scalar_mul(double s, Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  const std::size_t ia = a.index;
  return a.tape->record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    kernels::axpy(s, t.grad(self).data, t.grad(ia).data);
  });
}

Var scale(Var s, Var a) {
  require_same_tape(s, a);
  const Tensor& sv = s.value();
  if (sv.rows() != 1 || sv.cols() != 1)
    throw ShapeError("scale: factor must be 1x1, got " + shape_string(sv));
  const double k = sv.data[0];
  Tensor out = a.value();
  for (double& v : out.data) v *= k;
  const std::size_t is = s.index, ia = a.index;
  return a.tape->record(std::move(out), {s, a}, [is, ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia)) kernels::axpy(t.value(is).data[0], g.data, t.grad(ia).data);
    if (t.needs_grad(is)) t.grad(is).data[0] += kernels::dot(g.data, t.value(ia).data);
  });
}

Var scale_columns(Var a, Var v) {
  require_same_tape(a, v);
  const Tensor& x = a.value();
  const Tensor& w = v.value();
  if (w.rows() != 1 || w.cols() != x.cols())
    throw ShapeError("scale_columns: factor " + shape_string(w) + " does not fit " +
                     shape_string(x));
  Tensor out = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out.data[r * n + c] *= w.data[c];
  const std::size_t ia = a.index, iv = v.index;
  return a.tape->record(std::move(out), {a, v}, [ia, iv](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& w = t.value(iv);
    const std::size_t n = x.cols();
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) ga.data[r * n + c] += g.data[r * n + c] * w.data[c];
    }
    if (t.needs_grad(iv)) {
      Tensor& gv = t.grad(iv);
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) gv.data[c] += g.data[r * n + c] * x.data[r * n + c];
    }
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows())
    throw ShapeError("matmul: inner dimensions differ " + shape_string(x) + " * " +
                     shape_string(y));
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out(m, n);
  kernels::active().gemm_nn(x.data.data(), y.data.data(), out.data.data(), m, k, n, false);
  const std::size_t ia = a.index, ib = b.index;
  return a.tape->record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const auto& kt = kernels::active();
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ia))  // dA = G * B^T
      kt.gemm_nt(g.data.data(), t.value(ib).data.data(), t.grad(ia).data.data(), m, n, k, true);
    if (t.needs_grad(ib))  // dB = A^T * G
      kt.gemm_tn(t.value(ia).data.data(), t.grad(self).data.data(), t.grad(ib).data.data(), k, m,
                 n, true);
  });
}

Var relu(Var a) {
  const Tensor& x = a.value();
  a.tape->note_relu(x.data);
  Tensor out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.index;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.data[i] > 0.0) ga.data[i] += g.data[i];
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v = std::tanh(v);
  const std::size_t ia = a.index;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Var square(Var a) {
  Tensor out = a.value();
  for (double& v : out.data) v *= v;
  const std::size_t ia = a.index;
  return a.tape->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += 2.0 * x.data[i] * g.data[i];
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  double s = 0.0;
  for (double v : x.data) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  const std::size_t ia = a.index;
  return a.tape->record(Tensor::scalar(s * inv), {a}, [ia, inv](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0] * inv;
    for (double& v : t.grad(ia).data) v += g;
  });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
  Tape* tape = parts[0].tape;
  const std::size_t r0 = parts[0].rows(), c0 = parts[0].cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape != tape) throw Error("operands recorded on different tapes");
    if (axis == 0 && p.cols() != c0) throw ShapeError("concat rows: column counts differ");
    if (axis == 1 && p.rows() != r0) throw ShapeError("concat columns: row counts differ");
    total += axis == 0 ? p.rows() : p.cols();
  }
  Tensor out = axis == 0 ? Tensor(total, c0) : Tensor(r0, total);
  std::vector<std::size_t> idx;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (axis == 0) {
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off * c0));
    } else {
      for (std::size_t r = 0; r < r0; ++r)
        std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(r * v.cols()), v.cols(),
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * total + off));
    }
    idx.push_back(p.index);
    offsets.push_back(off);
    off += axis == 0 ? v.rows() : v.cols();
  }
  return tape->record(std::move(out), parts, [idx, offsets, axis](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (!t.needs_grad(idx[p])) continue;
      Tensor& gp = t.grad(idx[p]);
      if (axis == 0) {
        const std::size_t c = g.cols();
        for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += g.data[offsets[p] * c + i];
      } else {
        for (std::size_t r = 0; r < gp.rows(); ++r)
          for (std::size_t c = 0; c < gp.cols(); ++c)
            gp.data[r * gp.cols() + c] += g.data[r * g.cols() + offsets[p] + c];
      }
    }
  });
}

Var slice(Var a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
          std::size_t col_end) {
  const Tensor& x = a.value();
  if (row_begin >= row_end || col_begin >= col_end || row_end > x.rows() || col_end > x.cols())
    throw ShapeError("slice out of range for " + shape_string(x));
  const std::size_t rows = row_end - row_begin, cols = col_end - col_begin;
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x(row_begin + r, col_begin + c);
  const std::size_t ia = a.index;
  return a.tape->record(std::move(out), {a}, [ia, row_begin, col_begin](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(row_begin + r, col_begin + c) += g(r, c);
  });
}

Var mse(Var prediction, Var target) { return mean(square(sub(prediction, target))); }

GradCheckReport grad_check(const RecordedFn& f, std::span<Parameter* const> params, double eps,
                           double tol) {
  GradCheckReport report;
  Tape tape;
  for (Parameter* p : params) p->zero_grad();
  const Var loss = f(tape);
  report.at_kink = tape.relu_at_kink();
  const std::uint64_t base_signature = tape.relu_signature();
  tape.backward(loss);

  const auto eval = [&](std::uint64_t& signature) {
    Tape t;
    const double v = f(t).value().item();
    signature = t.relu_signature();
    return v;
  };

  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.param_id = p->id();
    entry.name = p->name();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data[i];
      std::uint64_t sig_plus = 0, sig_minus = 0;
      p->value.data[i] = saved + eps;
      const double up = eval(sig_plus);
      p->value.data[i] = saved - eps;
      const double down = eval(sig_minus);
      p->value.data[i] = saved;
      if (report.at_kink || sig_plus != base_signature || sig_minus != base_signature) {
        ++entry.excluded;
        continue;
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(numeric - analytic) / denom);
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = !report.at_kink && report.max_rel_error < tol;
  return report;
}

}  // namespace acadj::ad
