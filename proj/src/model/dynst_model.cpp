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

#include "dynst/model/dynst_model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dynst/autodiff/ops.hpp"
#include "dynst/error.hpp"

namespace dynst::model {

namespace {

class FanInInit {
 public:
  explicit FanInInit(std::uint64_t seed) : rng_(seed) {}

  ad::Tensor uniform(ad::Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(ad::num_elements(shape));
    for (double& x : v) x = dist(rng_);
    return ad::Tensor::parameter(std::move(shape), std::move(v));
  }

  static ad::Tensor fill(ad::Shape shape, double value) {
    const std::size_t n = ad::num_elements(shape);
    return ad::Tensor::parameter(std::move(shape), std::vector<double>(n, value));
  }

 private:
  std::mt19937_64 rng_;
};

ad::Tensor copy_parameter(const ad::Tensor& t) {
  return ad::Tensor::parameter(t.shape(),
                               std::vector<double>(t.data().begin(), t.data().end()));
}

}  // namespace

void ModelConfig::validate() const {
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || t_max == 0) {
    throw ConfigError("model: d_model, n_layers, n_heads, d_ff and t_max must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("model: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (d_model % 2 != 0) {
    throw ConfigError("model: d_model must be even for sinusoidal encodings");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("model: dropout must lie in [0,1)");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},       {"n_layers", c.n_layers},
                     {"n_heads", c.n_heads},       {"d_ff", c.d_ff},
                     {"dropout", c.dropout},       {"t_max", c.t_max},
                     {"p_static", c.p_static},     {"q_temporal", c.q_temporal},
                     {"head_bias_init", c.head_bias_init}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.dropout = j.value("dropout", c.dropout);
  c.t_max = j.value("t_max", c.t_max);
  c.p_static = j.value("p_static", c.p_static);
  c.q_temporal = j.value("q_temporal", c.q_temporal);
  c.head_bias_init = j.value("head_bias_init", c.head_bias_init);
}

std::vector<double> positional_encoding(std::size_t t_max, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("positional_encoding: d_model must be even and positive, got " +
                      std::to_string(d_model));
  }
  std::vector<double> pe(t_max * d_model);
  for (std::size_t pos = 0; pos < t_max; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * i) /
                                                static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) / freq;
      pe[pos * d_model + 2 * i] = std::sin(angle);
      pe[pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

std::size_t dynst_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ff;
  std::size_t n = 0;
  if (c.p_static > 0) n += c.p_static * d + d;
  if (c.q_temporal > 0) n += c.q_temporal * d + d;
  const std::size_t per_layer = (d * 3 * d + 3 * d) + (d * d + d) + 2 * d +
                                (d * f + f) + (f * d + d) + 2 * d;
  n += c.n_layers * per_layer;
  n += (d * d + d) + (d + 1);
  return n;
}

DynstModel::DynstModel(ModelConfig config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model, f = config_.d_ff;
  FanInInit init(seed);
  if (config_.p_static > 0) {
    static_w_ = init.uniform({config_.p_static, d}, config_.p_static);
    static_b_ = init.uniform({d}, config_.p_static);
  }
  if (config_.q_temporal > 0) {
    temporal_w_ = init.uniform({config_.q_temporal, d}, config_.q_temporal);
    temporal_b_ = init.uniform({d}, config_.q_temporal);
  }
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    Layer layer;
    layer.qkv_w = init.uniform({d, 3 * d}, d);
    layer.qkv_b = init.uniform({3 * d}, d);
    layer.out_w = init.uniform({d, d}, d);
    layer.out_b = init.uniform({d}, d);
    layer.norm1_g = FanInInit::fill({d}, 1.0);
    layer.norm1_b = FanInInit::fill({d}, 0.0);
    layer.ff1_w = init.uniform({d, f}, d);
    layer.ff1_b = init.uniform({f}, d);
    layer.ff2_w = init.uniform({f, d}, f);
    layer.ff2_b = init.uniform({d}, f);
    layer.norm2_g = FanInInit::fill({d}, 1.0);
    layer.norm2_b = FanInInit::fill({d}, 0.0);
    layers_.push_back(std::move(layer));
  }
  head_w1_ = init.uniform({d, d}, d);
  head_b1_ = init.uniform({d}, d);
  head_w2_ = init.uniform({d, 1}, d);
  head_b2_ = FanInInit::fill({1}, config_.head_bias_init);

  pos_enc_ = ad::Tensor::constant({config_.t_max, d},
                                  positional_encoding(config_.t_max, d));
}

ad::Tensor DynstModel::embed_inputs(const Batch& batch) const {
  const std::size_t b = batch.size, t = config_.t_max, d = config_.d_model;
  if (batch.t_max != t) {
    throw ShapeError("embed_inputs: batch t_max " + std::to_string(batch.t_max) +
                     " != model t_max " + std::to_string(t));
  }
  if (batch.p != config_.p_static) {
    throw ShapeError("embed_inputs: batch has " + std::to_string(batch.p) +
                     " static features, model expects " +
                     std::to_string(config_.p_static));
  }
  if (config_.q_temporal > 0 && batch.q != config_.q_temporal) {
    throw ShapeError("embed_inputs: batch has " + std::to_string(batch.q) +
                     " temporal features, model expects " +
                     std::to_string(config_.q_temporal));
  }

  ad::Tensor seq;
  if (config_.q_temporal > 0) {
    const auto v = ad::Tensor::constant({b, t, batch.q}, batch.temporal);
    seq = ad::add(ad::linear(v, temporal_w_, temporal_b_), pos_enc_);
  } else {
    seq = ad::add(ad::Tensor::zeros({b, t, d}), pos_enc_);
  }
  if (config_.p_static > 0) {
    const auto z = ad::Tensor::constant({b, batch.p}, batch.static_features);
    const auto wz = ad::reshape(ad::linear(z, static_w_, static_b_), {b, 1, d});
    seq = ad::add(seq, wz);
  }
  return seq;
}

ad::Tensor DynstModel::attention(const Layer& layer, const ad::Tensor& x,
                                 const ForwardMode& mode,
                                 EncoderTrace* trace) const {
  const auto qkv = ad::linear(x, layer.qkv_w, layer.qkv_b);
  ad::Tensor weights;
  const auto ctx = ad::causal_self_attention(qkv, config_.n_heads, config_.dropout,
                                             mode.train, mode.rng,
                                             trace != nullptr ? &weights : nullptr);
  if (trace != nullptr) trace->attention.push_back(weights);
  return ad::linear(ctx, layer.out_w, layer.out_b);
}

ad::Tensor DynstModel::encode(const ad::Tensor& embedded, const ForwardMode& mode,
                              EncoderTrace* trace) const {
  if (embedded.rank() != 3 || embedded.dim(2) != config_.d_model) {
    throw ShapeError("encode: expected [batch, t, " +
                     std::to_string(config_.d_model) + "], got " +
                     ad::shape_to_string(embedded.shape()));
  }
  if (embedded.dim(1) != config_.t_max) {
    throw ShapeError("encode: sequence length must equal t_max");
  }
  const double p = config_.dropout;
  auto x = ad::dropout(embedded, p, mode.train, mode.rng);
  for (const Layer& layer : layers_) {
    const auto attn = attention(layer, x, mode, trace);
    x = ad::layer_norm(ad::add(x, ad::dropout(attn, p, mode.train, mode.rng)),
                       layer.norm1_g, layer.norm1_b, -1);
    auto ff = ad::max_with_zero(ad::linear(x, layer.ff1_w, layer.ff1_b));
    ff = ad::linear(ad::dropout(ff, p, mode.train, mode.rng), layer.ff2_w,
                    layer.ff2_b);
    x = ad::layer_norm(ad::add(x, ad::dropout(ff, p, mode.train, mode.rng)),
                       layer.norm2_g, layer.norm2_b, -1);
  }
  return x;
}

ad::Tensor DynstModel::hazard_head(const ad::Tensor& encoded) const {
  const std::size_t b = encoded.dim(0), t = encoded.dim(1);
  const auto hidden = ad::max_with_zero(ad::linear(encoded, head_w1_, head_b1_));
  const auto logits = ad::linear(hidden, head_w2_, head_b2_);
  return ad::sigmoid(ad::reshape(logits, {b, t}));
}

ad::Tensor DynstModel::forward(const Batch& batch, const ForwardMode& mode) const {
  return forward(batch, mode, nullptr);
}

ad::Tensor DynstModel::forward(const Batch& batch, const ForwardMode& mode,
                               EncoderTrace* trace) const {
  if (batch.size == 0) throw ShapeError("forward: empty batch");
  return hazard_head(encode(embed_inputs(batch), mode, trace));
}

std::vector<ad::NamedTensor> DynstModel::named_parameters() const {
  std::vector<ad::NamedTensor> out;
  if (config_.p_static > 0) {
    out.push_back({"embed.static.weight", static_w_});
    out.push_back({"embed.static.bias", static_b_});
  }
  if (config_.q_temporal > 0) {
    out.push_back({"embed.temporal.weight", temporal_w_});
    out.push_back({"embed.temporal.bias", temporal_b_});
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string prefix = "layers." + std::to_string(l) + ".";
    const Layer& ly = layers_[l];
    out.push_back({prefix + "attn.qkv.weight", ly.qkv_w});
    out.push_back({prefix + "attn.qkv.bias", ly.qkv_b});
    out.push_back({prefix + "attn.out.weight", ly.out_w});
    out.push_back({prefix + "attn.out.bias", ly.out_b});
    out.push_back({prefix + "norm1.gamma", ly.norm1_g});
    out.push_back({prefix + "norm1.beta", ly.norm1_b});
    out.push_back({prefix + "ff.0.weight", ly.ff1_w});
    out.push_back({prefix + "ff.0.bias", ly.ff1_b});
    out.push_back({prefix + "ff.1.weight", ly.ff2_w});
    out.push_back({prefix + "ff.1.bias", ly.ff2_b});
    out.push_back({prefix + "norm2.gamma", ly.norm2_g});
    out.push_back({prefix + "norm2.beta", ly.norm2_b});
  }
  out.push_back({"head.0.weight", head_w1_});
  out.push_back({"head.0.bias", head_b1_});
  out.push_back({"head.1.weight", head_w2_});
  out.push_back({"head.1.bias", head_b2_});
  return out;
}

nlohmann::json DynstModel::config_json() const { return config_; }

std::unique_ptr<SurvivalModel> DynstModel::clone() const {
  auto copy = std::make_unique<DynstModel>(*this);
  auto deep = [](ad::Tensor& t) {
    if (t.defined()) t = copy_parameter(t);
  };
  deep(copy->static_w_);
  deep(copy->static_b_);
  deep(copy->temporal_w_);
  deep(copy->temporal_b_);
  for (Layer& ly : copy->layers_) {
    for (ad::Tensor* t : {&ly.qkv_w, &ly.qkv_b, &ly.out_w, &ly.out_b, &ly.norm1_g,
                          &ly.norm1_b, &ly.ff1_w, &ly.ff1_b, &ly.ff2_w, &ly.ff2_b,
                          &ly.norm2_g, &ly.norm2_b}) {
      deep(*t);
    }
  }
  deep(copy->head_w1_);
  deep(copy->head_b1_);
  deep(copy->head_w2_);
  deep(copy->head_b2_);
  return copy;
}

DynstModel make_static_variant(ModelConfig config, std::uint64_t seed) {
  config.q_temporal = 0;
  return DynstModel(config, seed);
}

ad::Tensor static_variant_forward(const Batch& batch, const DynstModel& model,
                                  const ForwardMode& mode) {
  if (model.config().q_temporal != 0) {
    throw ContractError("static_variant_forward: model was built with temporal inputs");
  }
  return model.forward(batch, mode);
}

}  // namespace dynst::model
