#include "hlgt/gradcheck_suite.hpp"

#include "hlgt/model.hpp"

namespace hlgt {

namespace {

TensorD rand_tensor(int64_t r, int64_t c, Rng& rng, double scale = 1.0,
                    bool requires_grad = true) {
  TensorD t(r, c, 0.0, requires_grad);
  for (auto& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

void append(GradCheckReport& into, const GradCheckReport& part,
            const std::string& prefix) {
  for (auto e : part.entries) {
    e.param = prefix + "/" + e.param;
    into.entries.push_back(e);
    into.max_rel_err = std::max(into.max_rel_err, e.max_rel_err);
    into.pass = into.pass && e.pass;
  }
}

// Forward doubles the input but the recorded rule claims triple: any honest
// finite-difference comparison has to flag it.
TensorD buggy_double(const TensorD& x) {
  TensorD out(x.rows(), x.cols());
  for (size_t i = 0; i < out.values().size(); ++i)
    out.values()[i] = 2.0 * x.values()[i];
  if (auto* tape = TapeD::current(); tape && x.requires_grad()) {
    out.set_requires_grad(true);
    tape->mark_output(out);
    TensorD xc = x, oc = out;
    tape->record("buggy_double", [xc, oc]() mutable {
      if (!oc.has_grad()) return;
      const auto& og = oc.grad();
      auto& g = xc.grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * og[i];
    });
  }
  return out;
}

GradCheckReport check_ops(double h, double tol, Rng& rng) {
  GradCheckReport report;
  report.tol = tol;

  {
    auto a = rand_tensor(3, 4, rng).set_name("a");
    auto b = rand_tensor(4, 2, rng).set_name("b");
    auto c = rand_tensor(3, 2, rng).set_name("c");
    auto f = [=] { return sum(mul(softmax_rows(matmul(a, b)), c)); };
    append(report, grad_check(f, {a, b, c}, h, tol), "matmul+softmax+mul");
  }
  {
    auto x = rand_tensor(3, 5, rng).set_name("x");
    auto f = [=] {
      return mean(add(gelu(x), add(tanh(x), add(sigmoid(x), exp(scale(x, 0.3))))));
    };
    append(report, grad_check(f, {x}, h, tol), "elementwise");
  }
  {
    auto a = rand_tensor(2, 3, rng).set_name("a");
    auto b = rand_tensor(2, 4, rng).set_name("b");
    auto f = [=] { return sum(mul(concat_cols(a, b), concat_cols(a, b))); };
    append(report, grad_check(f, {a, b}, h, tol), "concat_cols");
  }
  {
    auto x = rand_tensor(4, 3, rng).set_name("x");
    auto g = rand_tensor(1, 3, rng, 0.5).set_name("gain");
    auto b = rand_tensor(1, 3, rng, 0.5).set_name("bias");
    auto f = [=] { return sum(layer_norm_rows(x, g, b)); };
    append(report, grad_check(f, {x, g, b}, h, tol), "layer_norm");
  }
  {
    // offset keeps probes away from the |x| and min/max kinks
    auto a = rand_tensor(3, 3, rng).set_name("a");
    auto b = rand_tensor(3, 3, rng, 0.3).set_name("b");
    auto f = [=] {
      auto shifted = add_scalar(a, 2.5);
      return sum(add(abs(shifted), add(maximum(a, b), minimum(a, b))));
    };
    append(report, grad_check(f, {a, b}, h, tol), "abs+minmax");
  }
  {
    auto a = rand_tensor(2, 2, rng).set_name("a");
    auto b = rand_tensor(2, 2, rng).set_name("b");
    auto f = [=] { return sum(div(a, add_scalar(b, 4.0))); };
    append(report, grad_check(f, {a, b}, h, tol), "div");
  }
  {
    auto x = rand_tensor(3, 4, rng).set_name("x");
    auto bias = rand_tensor(1, 4, rng).set_name("bias");
    auto s = rand_tensor(1, 1, rng).set_name("alpha");
    auto f = [=] {
      auto y = add_row_bias(x, bias);
      return sum(scale_by(concat_rows<double>({slice(y, 0, 2, 1, 2), slice(y, 1, 2, 0, 2)}), s));
    };
    append(report, grad_check(f, {x, bias, s}, h, tol), "bias+slice+scale_by");
  }
  {
    auto x = rand_tensor(1, 4, rng).set_name("x");
    auto f = [=] { return sqrt(add_scalar(sum(mul(x, x)), 1.0)); };
    append(report, grad_check(f, {x}, h, tol), "sqrt-norm");
  }
  {
    auto x = rand_tensor(2, 3, rng, 0.45).set_name("x");
    auto f = [=] { return sum(clamp01(add_scalar(x, 0.5))); };
    append(report, grad_check(f, {x}, h, tol), "clamp01-interior");
  }
  {
    auto v = rand_tensor(1, 3, rng).set_name("v");
    auto f = [=] { return sum(mul(repeat_row(v, 4), repeat_row(v, 4))); };
    append(report, grad_check(f, {v}, h, tol), "repeat_row");
  }
  return report;
}

GradCheckReport check_blocks(double h, double tol, Rng& rng) {
  GradCheckReport report;
  report.tol = tol;
  const int64_t d = 4;
  {
    auto p = TrmParamsT<double>::init(d, 2, rng);
    NamedParams<double> params;
    p.collect("trm", params);
    auto x = rand_tensor(3, d, rng).set_name("trm.input");
    params.push_back(x);
    auto f = [=] { return mean(trm_forward(x, p)); };
    append(report, grad_check(f, params, h, tol), "trm_forward");
  }
  {
    auto q = rand_tensor(2, d, rng).set_name("mha.q");
    auto k = rand_tensor(3, d, rng).set_name("mha.k");
    auto v = rand_tensor(3, d, rng).set_name("mha.v");
    auto f = [=] { return sum(mha_core(q, k, v, 2)); };
    append(report, grad_check(f, {q, k, v}, h, tol), "mha_core");
  }
  {
    auto p = FusionParamsT<double>::init(d, d, rng);
    NamedParams<double> params;
    p.collect("fusion", params);
    auto x = rand_tensor(4, d, rng).set_name("fusion.input");
    params.push_back(x);
    auto f = [=] { return sum(attention_fusion(x, p)); };
    append(report, grad_check(f, params, h, tol), "attention_fusion");
  }
  {
    auto p = TrmParamsT<double>::init(d, 2, rng);
    NamedParams<double> params;
    p.collect("ffn", params);
    auto x = rand_tensor(2, d, rng).set_name("ffn.input");
    params.push_back(x);
    auto f = [=] { return mean(ffn_forward(x, p)); };
    append(report, grad_check(f, params, h, tol), "ffn_forward");
  }
  return report;
}

GroundTruth toy_gt() {
  GroundTruth gt;
  gt.b = Interval{0.3, 0.8};
  gt.tau_s = 1.2;
  gt.tau_e = 3.2;
  gt.duration = 4.0;
  return gt;
}

GradCheckReport check_encoder(double h, double tol, Rng& rng) {
  GradCheckReport report;
  report.tol = tol;
  ModelConfig cfg;
  cfg.d_model = 4;
  cfg.heads = 2;
  cfg.slots = 2;
  cfg.clip_len = 2;
  cfg.phrases = 2;
  cfg.t_max = 4;
  auto model = ModelT<double>::init(cfg, 11);
  auto video = rand_tensor(4, 4, rng, 1.0, false);
  auto query = rand_tensor(4, 4, rng, 1.0, false);
  auto f = [=] {
    auto fwd = model.forward(video, query);
    return add(mean(fwd.visual_tokens), mean(fwd.textual_tokens));
  };
  NamedParams<double> params;
  for (const auto& p : model.params) {
    const auto& n = p.name();
    if (n.rfind("visual", 0) == 0 || n.rfind("textual", 0) == 0 || n.rfind("conv", 0) == 0)
      params.push_back(p);
  }
  append(report, grad_check(f, params, h, tol), "encoder");
  return report;
}

GradCheckReport check_decoder(double h, double tol, Rng& rng) {
  GradCheckReport report;
  report.tol = tol;
  const int64_t d = 4;
  auto p = DecoderParamsT<double>::init(d, 2, 2, rng);
  NamedParams<double> params;
  p.collect("decoder", params);
  auto fv = rand_tensor(3, d, rng).set_name("decoder.fv");
  auto fq = rand_tensor(2, d, rng).set_name("decoder.fq");
  params.push_back(fv);
  params.push_back(fq);
  auto f = [=] { return mean(decode_cross(fv, fq, p, false)); };
  append(report, grad_check(f, params, h, tol), "decode_cross");
  return report;
}

GradCheckReport check_losses(double h, double tol, Rng& rng) {
  GradCheckReport report;
  report.tol = tol;
  const int64_t d = 4;
  {
    auto clips = rand_tensor(3, d, rng).set_name("cmcc.clips");
    auto phrases = rand_tensor(2, d, rng).set_name("cmcc.phrases");
    auto f = [=] { return cmcc_loss(clips, phrases); };
    append(report, grad_check(f, {clips, phrases}, h, tol), "cmcc");
  }
  {
    auto head = HeadParamsT<double>::init(d, rng);
    NamedParams<double> params;
    head.collect("head", params);
    auto o_cross = rand_tensor(2, d, rng).set_name("head.o_cross");
    params.push_back(o_cross);
    const auto gt = toy_gt();
    LossWeights w;
    auto f = [=] {
      auto preds = predict_boundaries(o_cross, head);
      auto cmcc = TensorD::scalar(0.4);
      return final_loss(preds, gt, cmcc, w).total;
    };
    append(report, grad_check(f, params, h, tol), "boundary+final");
  }
  return report;
}

GradCheckReport check_full(double h, double tol, Rng& rng) {
  GradCheckReport report;
  report.tol = tol;
  // toy instance: 2 clips x 2 frames, 2 phrases x 2 words, D=4, M=2
  ModelConfig cfg;
  cfg.d_model = 4;
  cfg.heads = 2;
  cfg.slots = 2;
  cfg.clip_len = 2;
  cfg.phrases = 2;
  cfg.t_max = 4;
  auto model = ModelT<double>::init(cfg, 23);
  auto video = rand_tensor(4, 4, rng, 1.0, false);
  auto query = rand_tensor(4, 4, rng, 1.0, false);
  const auto gt = toy_gt();
  LossWeights w;
  auto f = [=] { return model.loss(video, query, gt, w).total; };
  append(report, grad_check(f, model.params, h, tol), "full");
  return report;
}

}  // namespace

GradCheckReport run_gradcheck_scope(const std::string& scope, double h, double tol,
                                    bool inject_bug) {
  Rng rng(401);
  GradCheckReport report;
  report.tol = tol;
  if (scope == "ops")
    report = check_ops(h, tol, rng);
  else if (scope == "blocks")
    report = check_blocks(h, tol, rng);
  else if (scope == "encoder")
    report = check_encoder(h, tol, rng);
  else if (scope == "decoder")
    report = check_decoder(h, tol, rng);
  else if (scope == "losses")
    report = check_losses(h, tol, rng);
  else if (scope == "full")
    report = check_full(h, tol, rng);
  else
    throw std::invalid_argument("unknown gradcheck scope '" + scope +
                                "' (ops|blocks|encoder|decoder|losses|full)");

  if (inject_bug) {
    auto x = rand_tensor(2, 2, rng).set_name("injected-bug");
    auto f = [=] { return sum(buggy_double(x)); };
    append(report, grad_check(f, {x}, h, tol), scope);
  }
  return report;
}

}  // namespace hlgt
