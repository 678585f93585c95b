#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "advrep/model.hpp"
#include "advrep/rng.hpp"

using namespace advrep;

namespace {

ModelConfig tiny_cfg() {
  ModelConfig cfg;
  cfg.input_h = 18;
  cfg.input_w = 17;
  cfg.conv_maps = {2, 3};
  cfg.fc_hidden = 8;
  cfg.bottleneck = 6;
  cfg.head_hidden = 5;
  return cfg;
}

}  // namespace

TEST_CASE("encoder ladder and flat size at full scale") {
  ModelConfig cfg;
  ParamSet<float> ps;
  Rng rng(1);
  Encoder enc(cfg, ps, rng);

  const std::vector<std::pair<size_t, size_t>> want = {
      {126, 125}, {63, 62}, {31, 31}, {15, 15}, {7, 7}};
  REQUIRE(enc.ladder().size() == want.size());
  for (size_t i = 0; i < want.size(); ++i) {
    CHECK(enc.ladder()[i].first == want[i].first);
    CHECK(enc.ladder()[i].second == want[i].second);
  }
  CHECK(enc.flat_size() == 128 * 7 * 7);
  CHECK(enc.flat_size() == 6272);
}

TEST_CASE("forward shapes at full scale") {
  ModelConfig cfg;
  ParamSet<float> ps;
  Rng rng(1);
  Encoder enc(cfg, ps, rng);
  Decoder dec(cfg, enc, ps, rng);

  Rng data(2);
  TensorT<float> x({2, 1, 126, 125});
  for (size_t i = 0; i < x.numel(); ++i)
    x.data()[i] = static_cast<float>(data.normal());

  Tape<float> tape;
  auto z = enc.forward(tape, x, BnMode::kEval, false);
  REQUIRE(z.ndim() == 2);
  CHECK(z.dim(0) == 2);
  CHECK(z.dim(1) == 128);

  auto xhat = dec.forward(tape, z, BnMode::kEval, false);
  REQUIRE(xhat.ndim() == 4);
  CHECK(xhat.dim(0) == 2);
  CHECK(xhat.dim(1) == 1);
  CHECK(xhat.dim(2) == 126);
  CHECK(xhat.dim(3) == 125);
  tape.clear();

  TensorT<float> bad({2, 1, 100, 125});
  Tape<float> t2;
  CHECK_THROWS_AS(enc.forward(t2, bad, BnMode::kEval, false), ShapeError);
}

TEST_CASE("registered parameter counts match the symbolic counts") {
  for (bool tiny : {false, true}) {
    ModelConfig cfg = tiny ? tiny_cfg() : ModelConfig{};
    ParamSet<float> ps;
    Rng rng(1);
    Encoder enc(cfg, ps, rng);
    Decoder dec(cfg, enc, ps, rng);
    Head pd(cfg, 2, ParamGroup::kPdHead, "pd_head", ps, rng);
    Head spk(cfg, 9, ParamGroup::kSpkHead, "spk_head", ps, rng);

    CHECK(ps.param_count(ParamGroup::kEncoder) == expected_encoder_params(cfg));
    CHECK(ps.param_count(ParamGroup::kDecoder) == expected_decoder_params(cfg));
    CHECK(ps.param_count(ParamGroup::kPdHead) == expected_head_params(cfg, 2));
    CHECK(ps.param_count(ParamGroup::kSpkHead) ==
          expected_head_params(cfg, 9));
  }
}

TEST_CASE("full-scale head has 8386 trainable parameters for two classes") {
  ModelConfig cfg;
  CHECK(expected_head_params(cfg, 2) == 64 * 128 + 64 + 2 * 64 + 2);
  CHECK(expected_head_params(cfg, 2) == 8386);
}

TEST_CASE("architecture summary agrees with the registry") {
  ModelConfig cfg = tiny_cfg();
  ParamSet<float> ps;
  Rng rng(3);
  Encoder enc(cfg, ps, rng);
  Decoder dec(cfg, enc, ps, rng);
  const auto summary = architecture_summary(enc, dec);
  CHECK(summary["encoder_params"].get<size_t>() ==
        ps.param_count(ParamGroup::kEncoder));
  CHECK(summary["decoder_params"].get<size_t>() ==
        ps.param_count(ParamGroup::kDecoder));
  // 2 conv stages + 2 fc per side + 2 deconv stages.
  CHECK(summary["layers"].size() == 2 + 2 + 2 + 2);
  size_t layer_total = 0;
  for (const auto& l : summary["layers"]) layer_total += l["params"].get<size_t>();
  CHECK(layer_total == ps.param_count(ParamGroup::kEncoder) +
                           ps.param_count(ParamGroup::kDecoder));
}

TEST_CASE("initialization is seed deterministic") {
  ModelConfig cfg = tiny_cfg();
  auto build_checksum = [&](uint64_t seed) {
    ParamSet<float> ps;
    Rng rng(seed);
    Encoder enc(cfg, ps, rng);
    Decoder dec(cfg, enc, ps, rng);
    return ps.checksum();
  };
  CHECK(build_checksum(5) == build_checksum(5));
  CHECK(build_checksum(5) != build_checksum(6));
}

TEST_CASE("biases start at zero so a zero input maps to a zero bottleneck") {
  ModelConfig cfg = tiny_cfg();
  ParamSet<float> ps;
  Rng rng(4);
  Encoder enc(cfg, ps, rng);
  TensorT<float> x({2, 1, cfg.input_h, cfg.input_w});
  Tape<float> tape;
  auto z = enc.forward(tape, x, BnMode::kEval, false);
  for (size_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == 0.0f);
  tape.clear();
}

TEST_CASE("head classification gradients reach the encoder but not the decoder") {
  ModelConfig cfg = tiny_cfg();
  ParamSet<float> ps;
  Rng rng(7);
  Encoder enc(cfg, ps, rng);
  Decoder dec(cfg, enc, ps, rng);
  Head head(cfg, 3, ParamGroup::kPdHead, "pd_head", ps, rng);

  Rng data(8);
  TensorT<float> x({3, 1, cfg.input_h, cfg.input_w});
  for (size_t i = 0; i < x.numel(); ++i)
    x.data()[i] = static_cast<float>(data.normal());

  Tape<float> tape;
  auto z = enc.forward(tape, x, BnMode::kTrain, false);
  auto logits = head.forward(tape, z, false);
  auto out = softmax_cross_entropy(tape, logits, {0, 2, 1});
  tape.backward(out.loss);

  const auto* ew = ps.find("encoder.conv0.weight");
  REQUIRE(ew != nullptr);
  REQUIRE(ew->tensor.has_grad());
  TensorT<float> ew_t = ew->tensor;  // handle copy for mutable grad access
  double enc_grad_norm = 0.0;
  for (float g : ew_t.grad_values()) enc_grad_norm += std::abs(g);
  CHECK(enc_grad_norm > 0.0);

  const auto* hw = ps.find("pd_head.fc2.weight");
  REQUIRE(hw != nullptr);
  CHECK(hw->tensor.has_grad());

  for (const auto& e : ps.entries())
    if (e.group == ParamGroup::kDecoder) CHECK(!e.tensor.has_grad());
  tape.clear();
}

TEST_CASE("head dropout is train-only and uses the provided stream") {
  ModelConfig cfg = tiny_cfg();
  ParamSet<float> ps;
  Rng rng(9);
  Head head(cfg, 2, ParamGroup::kPdHead, "pd_head", ps, rng);

  Rng data(10);
  TensorT<float> z({4, cfg.bottleneck});
  for (size_t i = 0; i < z.numel(); ++i)
    z.data()[i] = static_cast<float>(data.normal());

  auto run = [&](bool train, uint64_t mask_seed) {
    Tape<float> tape;
    Rng mask(mask_seed);
    auto logits = head.forward(tape, z, train, &mask);
    std::vector<float> out = logits.values();
    tape.clear();
    return out;
  };

  CHECK(run(false, 1) == run(false, 2));   // eval ignores the stream
  CHECK(run(true, 1) == run(true, 1));     // fixed mask is deterministic
  CHECK(run(true, 1) != run(false, 1));    // dropout changes the output

  Tape<float> tape;
  auto logits = head.forward(tape, z, true, nullptr);
  CHECK(logits.values() == run(false, 1));  // no stream, no dropout
  tape.clear();
}

TEST_CASE("heads require at least two outputs") {
  ModelConfig cfg = tiny_cfg();
  ParamSet<float> ps;
  Rng rng(11);
  CHECK_THROWS_AS(Head(cfg, 1, ParamGroup::kPdHead, "pd_head", ps, rng),
                  ConfigError);
}
