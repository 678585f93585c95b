#include "advrep/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

#include "advrep/gradcheck.hpp"
#include "advrep/model.hpp"
#include "advrep/ops.hpp"
#include "advrep/rng.hpp"
#include "advrep/tensor.hpp"

namespace advrep {

namespace {

using Dbl = TensorT<double>;

Dbl randn(const std::vector<size_t>& shape, Rng& rng, bool requires_grad,
          double scale = 1.0) {
  Dbl t(shape, requires_grad);
  for (size_t i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

// One randomized gradient-check trial: build() must construct the scalar
// loss from the current values of the checked tensors, fresh each call.
struct Trial {
  std::vector<Dbl> checked;
  std::function<Dbl(Tape<double>&)> build;
};

double run_trial(const Trial& trial, Rng& rng) {
  Tape<double> tape;
  Dbl loss = trial.build(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto t : trial.checked) analytic.push_back(t.grad_values());
  tape.clear();

  auto loss_fn = [&]() {
    Tape<double> fresh;
    const double v = trial.build(fresh).data()[0];
    fresh.clear();
    return v;
  };
  double worst = 0.0;
  for (size_t i = 0; i < trial.checked.size(); ++i) {
    auto param = trial.checked[i];
    const GradCheckResult r =
        gradcheck(param, std::function<double()>(loss_fn), analytic[i], 1e-6,
                  8, rng);
    worst = std::max(worst, r.max_rel_err);
  }
  return worst;
}

Trial conv_trial(Rng& rng) {
  const size_t C = 1 + rng.below(3), F = 1 + rng.below(3);
  const size_t H = 3 + rng.below(4), W = 3 + rng.below(4);
  const size_t pad = rng.below(2);
  Dbl x = randn({2, C, H, W}, rng, true);
  Dbl w = randn({F, C, 3, 3}, rng, true, 0.5);
  Dbl b = randn({F}, rng, true, 0.2);
  Dbl target = randn({2, F, H + 2 * pad - 2, W + 2 * pad - 2}, rng, false);
  Trial t;
  t.checked = {x, w, b};
  t.build = [=](Tape<double>& tape) {
    return mse_loss(tape, conv2d(tape, x, w, b, pad), target);
  };
  return t;
}

Trial conv_transpose_trial(Rng& rng) {
  const size_t C = 1 + rng.below(3), F = 1 + rng.below(3);
  const size_t H = 2 + rng.below(4), W = 2 + rng.below(4);
  const size_t pad = rng.below(2);
  Dbl x = randn({2, F, H, W}, rng, true);
  Dbl w = randn({F, C, 3, 3}, rng, true, 0.5);
  Dbl b = randn({C}, rng, true, 0.2);
  Dbl target = randn({2, C, H + 2 - 2 * pad, W + 2 - 2 * pad}, rng, false);
  Trial t;
  t.checked = {x, w, b};
  t.build = [=](Tape<double>& tape) {
    return mse_loss(tape, conv_transpose2d(tape, x, w, b, pad), target);
  };
  return t;
}

Trial maxpool_trial(Rng& rng) {
  const size_t C = 1 + rng.below(3);
  const size_t H = 4 + rng.below(4), W = 4 + rng.below(4);
  Dbl x = randn({2, C, H, W}, rng, true);
  Dbl target = randn({2, C, H / 2, W / 2}, rng, false);
  Trial t;
  t.checked = {x};
  t.build = [=](Tape<double>& tape) {
    return mse_loss(tape, maxpool2d(tape, x), target);
  };
  return t;
}

Trial batchnorm_trial(Rng& rng) {
  const size_t C = 1 + rng.below(3);
  const size_t H = 3 + rng.below(3), W = 3 + rng.below(3);
  Dbl x = randn({3, C, H, W}, rng, true);
  Dbl gamma = randn({C}, rng, true, 0.5);
  Dbl beta = randn({C}, rng, true, 0.5);
  Dbl rm(std::vector<size_t>{C}), rv(std::vector<size_t>{C});
  for (size_t i = 0; i < C; ++i) rv.data()[i] = 1.0;
  Dbl target = randn({3, C, H, W}, rng, false);
  Trial t;
  t.checked = {x, gamma, beta};
  t.build = [=](Tape<double>& tape) {
    Dbl y = batchnorm2d(tape, x, gamma, beta, rm, rv, BnMode::kTrain, false);
    return mse_loss(tape, y, target);
  };
  return t;
}

Trial leaky_relu_trial(Rng& rng) {
  const size_t n = 8 + rng.below(16);
  Dbl x = randn({2, n}, rng, true);
  nudge_off_kinks(x, 1e-3);
  Dbl target = randn({2, n}, rng, false);
  Trial t;
  t.checked = {x};
  t.build = [=](Tape<double>& tape) {
    return mse_loss(tape, leaky_relu(tape, x, 0.01), target);
  };
  return t;
}

Trial interpolate_trial(Rng& rng) {
  const size_t C = 1 + rng.below(3);
  const size_t h = 2 + rng.below(3), w = 2 + rng.below(3);
  const size_t H = h + 1 + rng.below(4), W = w + 1 + rng.below(4);
  Dbl x = randn({2, C, h, w}, rng, true);
  Dbl target = randn({2, C, H, W}, rng, false);
  Trial t;
  t.checked = {x};
  t.build = [=](Tape<double>& tape) {
    return mse_loss(tape, interpolate_nearest(tape, x, H, W), target);
  };
  return t;
}

Trial linear_trial(Rng& rng) {
  const size_t in = 3 + rng.below(6), out = 2 + rng.below(5);
  Dbl x = randn({3, in}, rng, true);
  Dbl w = randn({out, in}, rng, true, 0.5);
  Dbl b = randn({out}, rng, true, 0.2);
  Dbl target = randn({3, out}, rng, false);
  Trial t;
  t.checked = {x, w, b};
  t.build = [=](Tape<double>& tape) {
    return mse_loss(tape, linear(tape, x, w, b), target);
  };
  return t;
}

Trial dropout_trial(Rng& rng) {
  const size_t n = 8 + rng.below(16);
  const uint64_t mask_seed = rng.next_u64();
  Dbl x = randn({2, n}, rng, true);
  Dbl target = randn({2, n}, rng, false);
  Trial t;
  t.checked = {x};
  t.build = [=](Tape<double>& tape) {
    Rng mask = Rng::substream(mask_seed, "verify.dropout");
    return mse_loss(tape, dropout(tape, x, 0.3, mask, true), target);
  };
  return t;
}

Trial softmax_ce_trial(Rng& rng) {
  const size_t N = 3 + rng.below(3), K = 2 + rng.below(4);
  Dbl logits = randn({N, K}, rng, true);
  std::vector<int> labels(N);
  for (auto& l : labels) l = static_cast<int>(rng.below(K));
  Trial t;
  t.checked = {logits};
  t.build = [=](Tape<double>& tape) {
    return softmax_cross_entropy(tape, logits, labels).loss;
  };
  return t;
}

Trial mse_trial(Rng& rng) {
  const size_t n = 6 + rng.below(10);
  Dbl a = randn({n}, rng, true);
  Dbl b = randn({n}, rng, true);
  Trial t;
  t.checked = {a, b};
  t.build = [=](Tape<double>& tape) { return mse_loss(tape, a, b); };
  return t;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.input_h = 18;
  cfg.input_w = 17;
  cfg.conv_maps = {2, 3, 4, 5};
  cfg.fc_hidden = 8;
  cfg.bottleneck = 6;
  cfg.head_hidden = 5;
  return cfg;
}

// Full autoencoder graph: a few parameters from every depth, plus the input.
Trial autoencoder_trial(Rng& rng) {
  const ModelConfig cfg = tiny_model();
  auto params = std::make_shared<ParamSet<double>>();
  Rng init(rng.next_u64());
  auto enc = std::make_shared<EncoderT<double>>(cfg, *params, init);
  auto dec = std::make_shared<DecoderT<double>>(cfg, *enc, *params, init);
  Dbl x = randn({2, 1, cfg.input_h, cfg.input_w}, rng, true);
  Trial t;
  t.checked = {x};
  for (const char* name :
       {"encoder.conv1.weight", "encoder.conv3.bn.gamma", "encoder.fc2.weight",
        "decoder.fc1.weight", "decoder.deconv2.weight",
        "decoder.deconv3.bias"}) {
    const auto* e = params->find(name);
    ADVREP_CHECK(e != nullptr, "verification parameter lookup failed");
    t.checked.push_back(e->tensor);
  }
  t.build = [=](Tape<double>& tape) {
    Dbl z = enc->forward(tape, x, BnMode::kTrain, false);
    Dbl xhat = dec->forward(tape, z, BnMode::kTrain, false);
    return mse_loss(tape, xhat, x);
  };
  return t;
}

// Encoder + classification head with dropout active (fixed mask per build).
Trial head_trial(Rng& rng) {
  const ModelConfig cfg = tiny_model();
  auto params = std::make_shared<ParamSet<double>>();
  Rng init(rng.next_u64());
  auto enc = std::make_shared<EncoderT<double>>(cfg, *params, init);
  auto head = std::make_shared<HeadT<double>>(cfg, 3, ParamGroup::kPdHead,
                                              "pd_head", *params, init);
  Dbl x = randn({3, 1, cfg.input_h, cfg.input_w}, rng, true);
  std::vector<int> labels = {0, 2, 1};
  const uint64_t mask_seed = rng.next_u64();
  Trial t;
  t.checked = {x};
  for (const char* name : {"encoder.conv2.weight", "pd_head.fc1.weight",
                           "pd_head.fc2.bias"}) {
    const auto* e = params->find(name);
    ADVREP_CHECK(e != nullptr, "verification parameter lookup failed");
    t.checked.push_back(e->tensor);
  }
  t.build = [=](Tape<double>& tape) {
    Dbl z = enc->forward(tape, x, BnMode::kTrain, false);
    Rng mask = Rng::substream(mask_seed, "verify.head");
    Dbl logits = head->forward(tape, z, true, &mask);
    return softmax_cross_entropy(tape, logits, labels).loss;
  };
  return t;
}

double adjoint_case(Rng& rng) {
  const size_t N = 1 + rng.below(2), C = 1 + rng.below(3), F = 1 + rng.below(3);
  const size_t H = 3 + rng.below(5), W = 3 + rng.below(5);
  const size_t pad = rng.below(2);
  Tape<double> tape;
  Dbl x = randn({N, C, H, W}, rng, false);
  Dbl w = randn({F, C, 3, 3}, rng, false);
  Dbl zb_f(std::vector<size_t>{F}), zb_c(std::vector<size_t>{C});
  Dbl y = conv2d(tape, x, w, zb_f, pad);
  Dbl v = randn(y.shape(), rng, false);
  Dbl u = conv_transpose2d(tape, v, w, zb_c, pad);
  ADVREP_CHECK(u.shape() == x.shape(), "adjoint shapes disagree");
  long double lhs = 0, rhs = 0;
  for (size_t i = 0; i < y.numel(); ++i)
    lhs += static_cast<long double>(y.data()[i]) * v.data()[i];
  for (size_t i = 0; i < x.numel(); ++i)
    rhs += static_cast<long double>(x.data()[i]) * u.data()[i];
  const long double scale =
      std::max<long double>(1.0L, std::max(std::abs(lhs), std::abs(rhs)));
  return static_cast<double>(std::abs(lhs - rhs) / scale);
}

}  // namespace

VerifyReport run_numeric_verification(uint64_t seed, size_t trials,
                                      size_t adjoint_cases) {
  using Maker = Trial (*)(Rng&);
  const std::vector<std::pair<const char*, Maker>> makers = {
      {"conv2d", conv_trial},
      {"conv_transpose2d", conv_transpose_trial},
      {"maxpool2d", maxpool_trial},
      {"batchnorm2d", batchnorm_trial},
      {"leaky_relu", leaky_relu_trial},
      {"interpolate_nearest", interpolate_trial},
      {"linear", linear_trial},
      {"dropout", dropout_trial},
      {"softmax_cross_entropy", softmax_ce_trial},
      {"mse_loss", mse_trial},
      {"autoencoder_graph", autoencoder_trial},
      {"encoder_head_graph", head_trial},
  };

  VerifyReport report;
  std::map<std::string, double> worst_by_name;
  for (size_t i = 0; i < trials; ++i) {
    const auto& [name, maker] = makers[i % makers.size()];
    Rng rng = Rng::substream(seed, "verify.trial", i);
    Trial trial = maker(rng);
    const double err = run_trial(trial, rng);
    worst_by_name[name] = std::max(worst_by_name[name], err);
    report.max_rel_err = std::max(report.max_rel_err, err);
    ++report.gradcheck_trials;
  }
  for (const auto& [name, maker] : makers) {
    char line[128];
    std::snprintf(line, sizeof(line), "gradcheck %-22s max rel err %.3e",
                  name, worst_by_name[name]);
    report.lines.push_back(line);
  }

  for (size_t i = 0; i < adjoint_cases; ++i) {
    Rng rng = Rng::substream(seed, "verify.adjoint", i);
    report.adjoint_worst = std::max(report.adjoint_worst, adjoint_case(rng));
    ++report.adjoint_cases;
  }
  {
    char line[128];
    std::snprintf(line, sizeof(line),
                  "adjoint identity over %zu cases: worst %.3e",
                  report.adjoint_cases, report.adjoint_worst);
    report.lines.push_back(line);
  }

  report.pass = report.max_rel_err < 1e-4 && report.adjoint_worst < 1e-10;
  return report;
}

}  // namespace advrep
