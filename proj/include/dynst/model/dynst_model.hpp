/*
 * Copyright 2026 The DynST Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "dynst/model/survival_model.hpp"

namespace dynst::model {

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t n_heads = 8;
  std::size_t d_ff = 64;
  double dropout = 0.1;
  std::size_t t_max = 128;
  std::size_t p_static = 6;
  // 0 gives the static-only variant: temporal inputs are ignored.
  std::size_t q_temporal = 4;
  // Initial bias of the final head unit; sigmoid(3) ~= 0.95.
  double head_bias_init = 3.0;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Sinusoidal encodings, row-major [t_max x d_model]. Row k encodes position k
// (0-based), which the model uses for survival step t = k + 1.
std::vector<double> positional_encoding(std::size_t t_max, std::size_t d_model);

// Closed-form parameter count for a configuration.
std::size_t dynst_parameter_count(const ModelConfig& c);

// Per-layer attention probabilities [batch, heads, t_max, t_max] captured
// during a forward pass.
struct EncoderTrace {
  std::vector<ad::Tensor> attention;
};

// Transformer hazard model: static and temporal input embeddings plus
// sinusoidal positions, a causally masked post-norm encoder stack, and a
// two-layer sigmoid head producing q_hat(t).
class DynstModel final : public SurvivalModel {
 public:
  DynstModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  ad::Tensor embed_inputs(const Batch& batch) const;
  ad::Tensor encode(const ad::Tensor& embedded, const ForwardMode& mode,
                    EncoderTrace* trace = nullptr) const;
  ad::Tensor hazard_head(const ad::Tensor& encoded) const;

  ModelKind kind() const override {
    return config_.q_temporal == 0 ? ModelKind::kStaticSt : ModelKind::kDynst;
  }
  std::size_t t_max() const override { return config_.t_max; }
  ad::Tensor forward(const Batch& batch, const ForwardMode& mode) const override;
  ad::Tensor forward(const Batch& batch, const ForwardMode& mode,
                     EncoderTrace* trace) const;
  std::vector<ad::NamedTensor> named_parameters() const override;
  nlohmann::json config_json() const override;
  std::unique_ptr<SurvivalModel> clone() const override;

  // Direct access for tests that pin specific weights.
  ad::Tensor& head_output_weight() { return head_w2_; }
  ad::Tensor& head_output_bias() { return head_b2_; }

 private:
  struct Layer {
    ad::Tensor qkv_w, qkv_b, out_w, out_b;
    ad::Tensor norm1_g, norm1_b;
    ad::Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    ad::Tensor norm2_g, norm2_b;
  };

  ad::Tensor attention(const Layer& layer, const ad::Tensor& x,
                       const ForwardMode& mode, EncoderTrace* trace) const;

  ModelConfig config_;
  ad::Tensor static_w_, static_b_;
  ad::Tensor temporal_w_, temporal_b_;
  std::vector<Layer> layers_;
  ad::Tensor head_w1_, head_b1_, head_w2_, head_b2_;
  ad::Tensor pos_enc_;
};

// Builds the static-only variant: same architecture with q_temporal = 0, so
// only static features and positions drive q_hat(t).
DynstModel make_static_variant(ModelConfig config, std::uint64_t seed);

// q_hat from a static-only model; the batch's temporal inputs are ignored.
ad::Tensor static_variant_forward(const Batch& batch, const DynstModel& model,
                                  const ForwardMode& mode = {});

}  // namespace dynst::model
