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

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "acadj/autodiff.hpp"
#include "acadj/rng.hpp"

namespace acadj {

enum class ModelKind { linear, mlp_regressor, window_forecaster };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

struct ModelSpec {
  ModelKind kind = ModelKind::mlp_regressor;
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t n_layers = 6;
  std::size_t residual_every = 2;

  static ModelSpec linear(std::size_t in, std::size_t out);
  // Six layers, three identity skips.
  static ModelSpec mlp_regressor(std::size_t in, std::size_t hidden = 64);
  // Flattened window of `window` rows by `series` columns to one row of
  // `series` outputs.
  static ModelSpec window_forecaster(std::size_t window, std::size_t series,
                                     std::size_t hidden = 64, std::size_t layers = 4);

  void validate() const;

  // 1-based indices of the layers whose output receives an identity skip.
  // Layer 1 projects input -> hidden and the last layer hidden -> output, so
  // only layers 2..n-1 are square. A skip closes at every residual_every-th
  // square layer counting from layer 2, and at the last square layer.
  std::vector<std::size_t> residual_layers() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

class Model {
 public:
  // Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Model build(const ModelSpec& spec, Rng& rng);

  const ModelSpec& spec() const noexcept { return spec_; }

  // input: batch x input_dim -> batch x output_dim, recorded on `tape` with
  // parameters bound as trainable leaves.
  ad::Var forward(ad::Tape& tape, ad::Var input);

  // Inference without gradient bookkeeping.
  ad::Tensor predict(const ad::Tensor& input) const;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t parameter_count() const;

  std::vector<ad::Tensor> snapshot() const;
  void restore(const std::vector<ad::Tensor>& values);

  bool operator==(const Model& other) const;

 private:
  struct Layer {
    ad::Parameter weight;  // fan_in x fan_out
    ad::Parameter bias;    // 1 x fan_out
  };

  template <typename Bind>
  ad::Var run(ad::Tape& tape, ad::Var input, Bind bind) const;

  ModelSpec spec_;
  std::vector<Layer> layers_;
};

// Flat JSON checkpoint: spec, parameter arrays in layer order, seed and any
// extra fields the caller attaches.
nlohmann::json checkpoint_to_json(const Model& model, std::uint64_t seed,
                                  const nlohmann::json& extra = nlohmann::json::object());
Model model_from_checkpoint(const nlohmann::json& j);

inline constexpr int kCheckpointVersion = 1;

// Bias-corrected Adam over any number of parameter groups, each with its own
// learning rate. beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
 public:
  struct Group {
    std::vector<ad::Parameter*> params;
    double lr = 1e-3;
  };

  explicit Adam(std::vector<Group> groups, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void zero_grad();
  void step();

  std::uint64_t steps() const noexcept { return step_; }
  const std::vector<ad::Tensor>& first_moments(std::size_t group) const {
    return state_[group].m;
  }
  const std::vector<ad::Tensor>& second_moments(std::size_t group) const {
    return state_[group].v;
  }

 private:
  struct GroupState {
    std::vector<ad::Tensor> m;
    std::vector<ad::Tensor> v;
  };
  std::vector<Group> groups_;
  std::vector<GroupState> state_;
  double beta1_, beta2_, eps_;
  std::uint64_t step_ = 0;
};

}  // namespace acadj
