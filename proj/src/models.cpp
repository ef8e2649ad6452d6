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

#include "acadj/models.hpp"

#include <algorithm>
#include <cmath>

#include "acadj/error.hpp"
#include "acadj/kernels.hpp"

namespace acadj {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear: return "linear";
    case ModelKind::mlp_regressor: return "mlp_regressor";
    case ModelKind::window_forecaster: return "window_forecaster";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& s) {
  if (s == "linear") return ModelKind::linear;
  if (s == "mlp_regressor") return ModelKind::mlp_regressor;
  if (s == "window_forecaster") return ModelKind::window_forecaster;
  throw InputError("unknown model kind '" + s + "'");
}

ModelSpec ModelSpec::linear(std::size_t in, std::size_t out) {
  return ModelSpec{ModelKind::linear, in, out, 0, 1, 0};
}

ModelSpec ModelSpec::mlp_regressor(std::size_t in, std::size_t hidden) {
  return ModelSpec{ModelKind::mlp_regressor, in, 1, hidden, 6, 2};
}

ModelSpec ModelSpec::window_forecaster(std::size_t window, std::size_t series, std::size_t hidden,
                                       std::size_t layers) {
  return ModelSpec{ModelKind::window_forecaster, window * series, series, hidden, layers, 2};
}

void ModelSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw InputError("model dimensions must be >= 1");
  if (kind == ModelKind::linear) {
    if (n_layers != 1) throw InputError("a linear model has exactly one layer");
    return;
  }
  if (hidden_dim < 1) throw InputError("hidden width must be >= 1");
  if (n_layers < 1) throw InputError("model needs at least one layer");
  if (residual_every < 1) throw InputError("residual_every must be >= 1");
}

std::vector<std::size_t> ModelSpec::residual_layers() const {
  std::vector<std::size_t> out;
  if (kind == ModelKind::linear || n_layers < 3) return out;
  const std::size_t last_square = n_layers - 1;
  for (std::size_t k = 2; k <= last_square; ++k) {
    if ((k - 2) % residual_every == 0 || k == last_square) out.push_back(k);
  }
  return out;
}

nlohmann::json ModelSpec::to_json() const {
  return {{"kind", to_string(kind)},        {"input_dim", input_dim},
          {"output_dim", output_dim},       {"hidden_dim", hidden_dim},
          {"n_layers", n_layers},           {"residual_every", residual_every}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = parse_model_kind(j.at("kind").get<std::string>());
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  s.n_layers = j.at("n_layers").get<std::size_t>();
  s.residual_every = j.at("residual_every").get<std::size_t>();
  s.validate();
  return s;
}

Model Model::build(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  Model model;
  model.spec_ = spec;
  for (std::size_t l = 1; l <= spec.n_layers; ++l) {
    const std::size_t fan_in = l == 1 ? spec.input_dim : spec.hidden_dim;
    const std::size_t fan_out = l == spec.n_layers ? spec.output_dim : spec.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    ad::Tensor w(fan_in, fan_out);
    for (double& v : w.data) v = dist(rng);
    ad::Tensor b(1, fan_out);
    for (double& v : b.data) v = dist(rng);
    const std::string prefix = "layer" + std::to_string(l);
    model.layers_.push_back(Layer{ad::Parameter(std::move(w), prefix + ".weight"),
                                  ad::Parameter(std::move(b), prefix + ".bias")});
  }
  return model;
}

template <typename Bind>
ad::Var Model::run(ad::Tape& tape, ad::Var input, Bind bind) const {
  if (input.cols() != spec_.input_dim)
    throw ShapeError("model expects " + std::to_string(spec_.input_dim) + " input columns, got " +
                     std::to_string(input.cols()));
  const ad::Var ones = tape.constant(ad::Tensor(input.rows(), 1, 1.0));
  const auto affine = [&](ad::Var h, const Layer& layer) {
    return ad::add(ad::matmul(h, bind(layer.weight)), ad::matmul(ones, bind(layer.bias)));
  };
  const std::size_t n = layers_.size();
  if (n == 1) return affine(input, layers_[0]);

  const auto residual = spec_.residual_layers();
  ad::Var h = ad::relu(affine(input, layers_[0]));
  ad::Var skip = h;
  for (std::size_t l = 2; l < n; ++l) {
    h = ad::relu(affine(h, layers_[l - 1]));
    if (std::find(residual.begin(), residual.end(), l) != residual.end()) {
      h = ad::add(h, skip);
      skip = h;
    }
  }
  return affine(h, layers_[n - 1]);
}

ad::Var Model::forward(ad::Tape& tape, ad::Var input) {
  return run(tape, input, [&tape](const ad::Parameter& p) {
    return tape.param(const_cast<ad::Parameter&>(p));
  });
}

ad::Tensor Model::predict(const ad::Tensor& input) const {
  ad::Tape tape;
  const ad::Var x = tape.constant(input);
  return run(tape, x, [&tape](const ad::Parameter& p) { return tape.constant(p.value); }).value();
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  for (Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const ad::Parameter*> Model::parameters() const {
  std::vector<const ad::Parameter*> out;
  for (const Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Parameter* p : parameters()) n += p->value.size();
  return n;
}

std::vector<ad::Tensor> Model::snapshot() const {
  std::vector<ad::Tensor> out;
  for (const ad::Parameter* p : parameters()) out.push_back(p->value);
  return out;
}

void Model::restore(const std::vector<ad::Tensor>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ShapeError("snapshot does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->value.same_shape(values[i])) throw ShapeError("snapshot shape mismatch");
    params[i]->value = values[i];
  }
}

bool Model::operator==(const Model& other) const {
  return spec_.to_json() == other.spec_.to_json() && snapshot() == other.snapshot();
}

nlohmann::json checkpoint_to_json(const Model& model, std::uint64_t seed,
                                  const nlohmann::json& extra) {
  nlohmann::json params = nlohmann::json::array();
  for (const ad::Parameter* p : model.parameters()) {
    params.push_back({{"name", p->name()},
                      {"shape", {p->value.rows(), p->value.cols()}},
                      {"data", p->value.data}});
  }
  return {{"format", "acadj.checkpoint"},
          {"version", kCheckpointVersion},
          {"seed", seed},
          {"spec", model.spec().to_json()},
          {"parameters", std::move(params)},
          {"extra", extra}};
}

Model model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "acadj.checkpoint")
    throw InputError("not an acadj checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw InputError("unsupported checkpoint version " + j.at("version").dump());
  const ModelSpec spec = ModelSpec::from_json(j.at("spec"));
  Rng rng(0);
  Model model = Model::build(spec, rng);
  std::vector<ad::Tensor> values;
  for (const auto& p : j.at("parameters")) {
    const auto shape = p.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw InputError("checkpoint tensors must be rank 2");
    values.emplace_back(shape[0], shape[1], p.at("data").get<std::vector<double>>());
  }
  model.restore(values);
  return model;
}

Adam::Adam(std::vector<Group> groups, double beta1, double beta2, double eps)
    : groups_(std::move(groups)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Group& g : groups_) {
    GroupState st;
    for (const ad::Parameter* p : g.params) {
      st.m.emplace_back(p->value.rows(), p->value.cols());
      st.v.emplace_back(p->value.rows(), p->value.cols());
    }
    state_.push_back(std::move(st));
  }
}

void Adam::zero_grad() {
  for (Group& g : groups_)
    for (ad::Parameter* p : g.params) p->zero_grad();
}

void Adam::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const auto& kt = kernels::active();
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const Group& g = groups_[gi];
    const kernels::AdamParams ap{g.lr, beta1_, beta2_, eps_, 1.0 - std::pow(beta1_, t),
                                 1.0 - std::pow(beta2_, t)};
    for (std::size_t pi = 0; pi < g.params.size(); ++pi) {
      ad::Parameter& p = *g.params[pi];
      if (!p.value.same_shape(p.grad)) throw ShapeError("parameter and gradient shapes differ");
      kt.adam_update(p.value.data.data(), p.grad.data.data(), state_[gi].m[pi].data.data(),
                     state_[gi].v[pi].data.data(), p.value.size(), ap);
    }
  }
}

}  // namespace acadj
