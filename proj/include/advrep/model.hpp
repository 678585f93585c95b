#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "advrep/common.hpp"
#include "advrep/ops.hpp"
#include "advrep/params.hpp"
#include "advrep/rng.hpp"
#include "advrep/tensor.hpp"

#include "json.hpp"

namespace advrep {

struct ModelConfig {
  size_t input_h = 126;   // mel bands
  size_t input_w = 125;   // frames
  std::vector<size_t> conv_maps{16, 32, 64, 128};
  size_t fc_hidden = 256;
  size_t bottleneck = 128;
  size_t head_hidden = 64;
  double leaky_slope = 0.01;
  double head_dropout = 0.2;
};

namespace detail {

// Kaiming-uniform, fan-in mode, gain for leaky ReLU.
template <typename T>
void kaiming_uniform(TensorT<T>& w, size_t fan_in, double slope, Rng& rng) {
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  T* p = w.data();
  for (size_t i = 0; i < w.numel(); ++i)
    p[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void fill(TensorT<T>& t, T v) {
  for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = v;
}

}  // namespace detail

template <typename T>
struct ConvStage {
  TensorT<T> w, b;                    // conv or conv-transpose weights
  TensorT<T> gamma, beta, rmean, rvar;  // batch norm (absent on the last
                                        // decoder stage)
  bool has_bn = true;
};

// conv3x3(pad 1) -> maxpool 2x2 -> batchnorm -> leakyReLU, four times, then
// flatten -> FC -> leakyReLU -> FC down to the bottleneck.
template <typename T>
class EncoderT {
 public:
  EncoderT(const ModelConfig& cfg, ParamSet<T>& params, Rng& rng) : cfg_(cfg) {
    ADVREP_REQUIRE(!cfg.conv_maps.empty(), ConfigError, "no conv stages");
    size_t h = cfg.input_h, w = cfg.input_w, c = 1;
    ladder_.emplace_back(h, w);
    for (size_t s = 0; s < cfg.conv_maps.size(); ++s) {
      const size_t f = cfg.conv_maps[s];
      ConvStage<T> st;
      st.w = TensorT<T>({f, c, 3, 3});
      detail::kaiming_uniform(st.w, c * 9, cfg.leaky_slope, rng);
      st.b = TensorT<T>({f});
      st.gamma = TensorT<T>({f});
      detail::fill(st.gamma, T(1));
      st.beta = TensorT<T>({f});
      st.rmean = TensorT<T>({f});
      st.rvar = TensorT<T>({f});
      detail::fill(st.rvar, T(1));
      const std::string p = "encoder.conv" + std::to_string(s);
      params.add(p + ".weight", ParamGroup::kEncoder, st.w);
      params.add(p + ".bias", ParamGroup::kEncoder, st.b);
      params.add(p + ".bn.gamma", ParamGroup::kEncoder, st.gamma);
      params.add(p + ".bn.beta", ParamGroup::kEncoder, st.beta);
      params.add(p + ".bn.running_mean", ParamGroup::kEncoder, st.rmean,
                 false);
      params.add(p + ".bn.running_var", ParamGroup::kEncoder, st.rvar, false);
      stages_.push_back(std::move(st));
      h /= 2;
      w /= 2;
      ADVREP_REQUIRE(h > 0 && w > 0, ConfigError,
                     "input too small for conv ladder");
      ladder_.emplace_back(h, w);
      c = f;
    }
    flat_ = c * h * w;

    fc1_w_ = TensorT<T>({cfg.fc_hidden, flat_});
    detail::kaiming_uniform(fc1_w_, flat_, cfg.leaky_slope, rng);
    fc1_b_ = TensorT<T>({cfg.fc_hidden});
    fc2_w_ = TensorT<T>({cfg.bottleneck, cfg.fc_hidden});
    detail::kaiming_uniform(fc2_w_, cfg.fc_hidden, cfg.leaky_slope, rng);
    fc2_b_ = TensorT<T>({cfg.bottleneck});
    params.add("encoder.fc1.weight", ParamGroup::kEncoder, fc1_w_);
    params.add("encoder.fc1.bias", ParamGroup::kEncoder, fc1_b_);
    params.add("encoder.fc2.weight", ParamGroup::kEncoder, fc2_w_);
    params.add("encoder.fc2.bias", ParamGroup::kEncoder, fc2_b_);
  }

  // x [N,1,H,W] -> [N,bottleneck]
  TensorT<T> forward(Tape<T>& tape, TensorT<T> x, BnMode mode,
                     bool update_running) const {
    ADVREP_REQUIRE(x.ndim() == 4 && x.dim(1) == 1 &&
                       x.dim(2) == cfg_.input_h && x.dim(3) == cfg_.input_w,
                   ShapeError, "encoder expects [N,1,", cfg_.input_h, ",",
                   cfg_.input_w, "]");
    const size_t N = x.dim(0);
    TensorT<T> h = x;
    const T slope = static_cast<T>(cfg_.leaky_slope);
    for (const auto& st : stages_) {
      h = conv2d(tape, h, st.w, st.b, 1);
      h = maxpool2d(tape, h);
      h = batchnorm2d(tape, h, st.gamma, st.beta, st.rmean, st.rvar, mode,
                      update_running);
      h = leaky_relu(tape, h, slope);
    }
    h = reshape(tape, h, {N, flat_});
    h = linear(tape, h, fc1_w_, fc1_b_);
    h = leaky_relu(tape, h, slope);
    h = linear(tape, h, fc2_w_, fc2_b_);
    return h;
  }

  // Pre-pool spatial sizes, outermost first; ladder_[i] is the input to
  // stage i, ladder_.back() the final pooled size.
  const std::vector<std::pair<size_t, size_t>>& ladder() const {
    return ladder_;
  }
  size_t flat_size() const { return flat_; }
  const ModelConfig& config() const { return cfg_; }
  const std::vector<ConvStage<T>>& stages() const { return stages_; }

 private:
  ModelConfig cfg_;
  std::vector<ConvStage<T>> stages_;
  std::vector<std::pair<size_t, size_t>> ladder_;
  size_t flat_ = 0;
  TensorT<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

// FC pair back up to the conv volume, then four stages of nearest-neighbour
// upsampling + transposed conv, batch-normalized except for the last stage
// which stays linear.
template <typename T>
class DecoderT {
 public:
  DecoderT(const ModelConfig& cfg, const EncoderT<T>& enc, ParamSet<T>& params,
           Rng& rng)
      : cfg_(cfg) {
    flat_ = enc.flat_size();
    const auto& ladder = enc.ladder();
    const size_t n_stages = cfg.conv_maps.size();
    bottom_h_ = ladder.back().first;
    bottom_w_ = ladder.back().second;

    fc1_w_ = TensorT<T>({cfg.fc_hidden, cfg.bottleneck});
    detail::kaiming_uniform(fc1_w_, cfg.bottleneck, cfg.leaky_slope, rng);
    fc1_b_ = TensorT<T>({cfg.fc_hidden});
    fc2_w_ = TensorT<T>({flat_, cfg.fc_hidden});
    detail::kaiming_uniform(fc2_w_, cfg.fc_hidden, cfg.leaky_slope, rng);
    fc2_b_ = TensorT<T>({flat_});
    params.add("decoder.fc1.weight", ParamGroup::kDecoder, fc1_w_);
    params.add("decoder.fc1.bias", ParamGroup::kDecoder, fc1_b_);
    params.add("decoder.fc2.weight", ParamGroup::kDecoder, fc2_w_);
    params.add("decoder.fc2.bias", ParamGroup::kDecoder, fc2_b_);

    // Stage s upsamples to ladder[n_stages-1-s] and maps
    // conv_maps[n_stages-1-s] -> conv_maps[n_stages-2-s] (1 at the end).
    for (size_t s = 0; s < n_stages; ++s) {
      const size_t in_c = cfg.conv_maps[n_stages - 1 - s];
      const size_t out_c = s + 1 < n_stages ? cfg.conv_maps[n_stages - 2 - s] : 1;
      targets_.push_back(ladder[n_stages - 1 - s]);
      ConvStage<T> st;
      st.w = TensorT<T>({in_c, out_c, 3, 3});
      detail::kaiming_uniform(st.w, in_c * 9, cfg.leaky_slope, rng);
      st.b = TensorT<T>({out_c});
      st.has_bn = s + 1 < n_stages;
      const std::string p = "decoder.deconv" + std::to_string(s);
      params.add(p + ".weight", ParamGroup::kDecoder, st.w);
      params.add(p + ".bias", ParamGroup::kDecoder, st.b);
      if (st.has_bn) {
        st.gamma = TensorT<T>({out_c});
        detail::fill(st.gamma, T(1));
        st.beta = TensorT<T>({out_c});
        st.rmean = TensorT<T>({out_c});
        st.rvar = TensorT<T>({out_c});
        detail::fill(st.rvar, T(1));
        params.add(p + ".bn.gamma", ParamGroup::kDecoder, st.gamma);
        params.add(p + ".bn.beta", ParamGroup::kDecoder, st.beta);
        params.add(p + ".bn.running_mean", ParamGroup::kDecoder, st.rmean,
                   false);
        params.add(p + ".bn.running_var", ParamGroup::kDecoder, st.rvar,
                   false);
      }
      stages_.push_back(std::move(st));
    }
    ADVREP_CHECK(targets_.back().first == cfg.input_h &&
                     targets_.back().second == cfg.input_w,
                 "decoder does not reproduce the input shape");
  }

  // z [N,bottleneck] -> [N,1,H,W]
  TensorT<T> forward(Tape<T>& tape, TensorT<T> z, BnMode mode,
                     bool update_running) const {
    ADVREP_REQUIRE(z.ndim() == 2 && z.dim(1) == cfg_.bottleneck, ShapeError,
                   "decoder expects [N,", cfg_.bottleneck, "]");
    const size_t N = z.dim(0);
    const T slope = static_cast<T>(cfg_.leaky_slope);
    TensorT<T> h = linear(tape, z, fc1_w_, fc1_b_);
    h = leaky_relu(tape, h, slope);
    h = linear(tape, h, fc2_w_, fc2_b_);
    h = reshape(tape, h, {N, cfg_.conv_maps.back(), bottom_h_, bottom_w_});
    for (size_t s = 0; s < stages_.size(); ++s) {
      const auto& st = stages_[s];
      h = interpolate_nearest(tape, h, targets_[s].first, targets_[s].second);
      h = conv_transpose2d(tape, h, st.w, st.b, 1);
      if (st.has_bn) {
        h = batchnorm2d(tape, h, st.gamma, st.beta, st.rmean, st.rvar, mode,
                        update_running);
        h = leaky_relu(tape, h, slope);
      }
    }
    return h;
  }

  const std::vector<std::pair<size_t, size_t>>& targets() const {
    return targets_;
  }
  const std::vector<ConvStage<T>>& stages() const { return stages_; }

 private:
  ModelConfig cfg_;
  size_t flat_ = 0, bottom_h_ = 0, bottom_w_ = 0;
  TensorT<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  std::vector<ConvStage<T>> stages_;
  std::vector<std::pair<size_t, size_t>> targets_;
};

// dropout -> FC -> leakyReLU -> FC to K logits. Used for the speaker-ID
// module, the pathology module and the downstream/probe classifiers.
template <typename T>
class HeadT {
 public:
  HeadT(const ModelConfig& cfg, size_t n_out, ParamGroup group,
        const std::string& prefix, ParamSet<T>& params, Rng& rng)
      : cfg_(cfg), n_out_(n_out) {
    ADVREP_REQUIRE(n_out >= 2, ConfigError, "head needs at least 2 outputs");
    fc1_w_ = TensorT<T>({cfg.head_hidden, cfg.bottleneck});
    detail::kaiming_uniform(fc1_w_, cfg.bottleneck, cfg.leaky_slope, rng);
    fc1_b_ = TensorT<T>({cfg.head_hidden});
    fc2_w_ = TensorT<T>({n_out, cfg.head_hidden});
    detail::kaiming_uniform(fc2_w_, cfg.head_hidden, cfg.leaky_slope, rng);
    fc2_b_ = TensorT<T>({n_out});
    params.add(prefix + ".fc1.weight", group, fc1_w_);
    params.add(prefix + ".fc1.bias", group, fc1_b_);
    params.add(prefix + ".fc2.weight", group, fc2_w_);
    params.add(prefix + ".fc2.bias", group, fc2_b_);
  }

  // z [N,bottleneck] -> logits [N,K]; dropout only when train && rng given.
  TensorT<T> forward(Tape<T>& tape, TensorT<T> z, bool train,
                     Rng* rng = nullptr) const {
    ADVREP_REQUIRE(z.ndim() == 2 && z.dim(1) == cfg_.bottleneck, ShapeError,
                   "head expects [N,", cfg_.bottleneck, "]");
    TensorT<T> h = z;
    if (train && rng && cfg_.head_dropout > 0.0)
      h = dropout(tape, h, cfg_.head_dropout, *rng, true);
    h = linear(tape, h, fc1_w_, fc1_b_);
    h = leaky_relu(tape, h, static_cast<T>(cfg_.leaky_slope));
    h = linear(tape, h, fc2_w_, fc2_b_);
    return h;
  }

  size_t n_out() const { return n_out_; }

  // In-place shift of one output logit's bias; storage is shared with the
  // ParamSet, so calibration survives into later forwards and checkpoints.
  void shift_output_bias(size_t k, T delta) {
    ADVREP_REQUIRE(k < n_out_, ShapeError, "bias index out of range");
    fc2_b_.data()[k] += delta;
  }

 private:
  ModelConfig cfg_;
  size_t n_out_;
  TensorT<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

// Symbolic trainable-parameter counts, kept separate from the ParamSet walk
// so the two can be cross-checked.
inline size_t expected_encoder_params(const ModelConfig& cfg) {
  size_t total = 0;
  size_t c = 1, h = cfg.input_h, w = cfg.input_w;
  for (size_t f : cfg.conv_maps) {
    total += f * c * 9 + f;  // conv weight + bias
    total += 2 * f;          // bn gamma + beta
    c = f;
    h /= 2;
    w /= 2;
  }
  const size_t flat = c * h * w;
  total += cfg.fc_hidden * flat + cfg.fc_hidden;
  total += cfg.bottleneck * cfg.fc_hidden + cfg.bottleneck;
  return total;
}

inline size_t expected_decoder_params(const ModelConfig& cfg) {
  size_t c = 1, h = cfg.input_h, w = cfg.input_w;
  for (size_t f : cfg.conv_maps) {
    c = f;
    h /= 2;
    w /= 2;
  }
  const size_t flat = c * h * w;
  size_t total = cfg.fc_hidden * cfg.bottleneck + cfg.fc_hidden;
  total += flat * cfg.fc_hidden + flat;
  const size_t n = cfg.conv_maps.size();
  for (size_t s = 0; s < n; ++s) {
    const size_t in_c = cfg.conv_maps[n - 1 - s];
    const size_t out_c = s + 1 < n ? cfg.conv_maps[n - 2 - s] : 1;
    total += in_c * out_c * 9 + out_c;
    if (s + 1 < n) total += 2 * out_c;
  }
  return total;
}

inline size_t expected_head_params(const ModelConfig& cfg, size_t n_out) {
  return cfg.head_hidden * cfg.bottleneck + cfg.head_hidden +
         n_out * cfg.head_hidden + n_out;
}

// Layer-by-layer summary for documentation and regression snapshots.
template <typename T>
nlohmann::json architecture_summary(const EncoderT<T>& enc,
                                    const DecoderT<T>& dec) {
  using nlohmann::json;
  const ModelConfig& cfg = enc.config();
  json layers = json::array();
  auto shape_str = [](size_t c, size_t h, size_t w) {
    return std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  };
  const auto& ladder = enc.ladder();
  size_t c_in = 1;
  for (size_t s = 0; s < enc.stages().size(); ++s) {
    const size_t f = cfg.conv_maps[s];
    layers.push_back(
        {{"name", "encoder.conv" + std::to_string(s)},
         {"in", shape_str(c_in, ladder[s].first, ladder[s].second)},
         {"out", shape_str(f, ladder[s + 1].first, ladder[s + 1].second)},
         {"params", f * c_in * 9 + f + 2 * f}});
    c_in = f;
  }
  layers.push_back({{"name", "encoder.fc1"},
                    {"in", std::to_string(enc.flat_size())},
                    {"out", std::to_string(cfg.fc_hidden)},
                    {"params", cfg.fc_hidden * enc.flat_size() + cfg.fc_hidden}});
  layers.push_back(
      {{"name", "encoder.fc2"},
       {"in", std::to_string(cfg.fc_hidden)},
       {"out", std::to_string(cfg.bottleneck)},
       {"params", cfg.bottleneck * cfg.fc_hidden + cfg.bottleneck}});
  layers.push_back({{"name", "decoder.fc1"},
                    {"in", std::to_string(cfg.bottleneck)},
                    {"out", std::to_string(cfg.fc_hidden)},
                    {"params", cfg.fc_hidden * cfg.bottleneck + cfg.fc_hidden}});
  layers.push_back(
      {{"name", "decoder.fc2"},
       {"in", std::to_string(cfg.fc_hidden)},
       {"out", std::to_string(enc.flat_size())},
       {"params", enc.flat_size() * cfg.fc_hidden + enc.flat_size()}});
  const size_t n = dec.stages().size();
  size_t d_in = cfg.conv_maps.back();
  for (size_t s = 0; s < n; ++s) {
    const size_t out_c = s + 1 < n ? cfg.conv_maps[n - 2 - s] : 1;
    const auto tgt = dec.targets()[s];
    size_t p = d_in * out_c * 9 + out_c;
    if (s + 1 < n) p += 2 * out_c;
    layers.push_back({{"name", "decoder.deconv" + std::to_string(s)},
                      {"in", shape_str(d_in, tgt.first, tgt.second)},
                      {"out", shape_str(out_c, tgt.first, tgt.second)},
                      {"params", p}});
    d_in = out_c;
  }
  return {{"layers", layers},
          {"encoder_params", expected_encoder_params(cfg)},
          {"decoder_params", expected_decoder_params(cfg)}};
}

using Encoder = EncoderT<float>;
using Decoder = DecoderT<float>;
using Head = HeadT<float>;

}  // namespace advrep
