#pragma once

#include <string>
#include <vector>

#include "caia/blur.hpp"
#include "caia/fusion.hpp"
#include "caia/grad_check.hpp"
#include "caia/rng.hpp"
#include "caia/spectral.hpp"
#include "caia/synth.hpp"
#include "caia/train.hpp"

namespace caia {

struct FdSuiteEntry {
  std::string name;
  FdCheckReport report;
};

/// The finite-difference certification suite: every differentiable surface of
/// the pipeline on small seeded inputs. h = 1e-4, tol = 1e-4.
inline std::vector<FdSuiteEntry> run_fd_suite(std::size_t workers = 1) {
  std::vector<FdSuiteEntry> out;
  const double h = 1e-4, tol = 1e-4;

  {  // Blur paths with respect to the image values (saliency held fixed).
    const std::size_t ih = 6, iw = 7;
    Rng rng(11);
    Image base(ih, iw);
    for (double& v : base.data) v = rng.uniform();
    BlurConfig cfg{1.0, 0.5, 3.0};
    const Plane sal = compute_saliency(base, {2});
    const Plane radial = center_weight_map(ih, iw, cfg);
    std::vector<double> pa(ih * iw * 3), pb(ih * iw * 3);
    for (auto& v : pa) v = rng.gaussian();
    for (auto& v : pb) v = rng.gaussian();

    ParamStore store;
    store.add("img", Tensor::from({ih, iw, 3}, base.data));
    auto f = [&](const ParamStore& s) {
      Image img(ih, iw);
      img.data = s.value("img").values();
      const Image blurred = gaussian_blur(img, cfg);
      const auto xa = saliency_blur(img, blurred, sal, cfg);
      const auto xb = center_blur(img, blurred, cfg);
      double acc = 0.0;
      for (std::size_t i = 0; i < pa.size(); ++i) {
        acc += pa[i] * xa.image.data[i] + pb[i] * xb.image.data[i];
      }
      return acc;
    };
    Image grad(ih, iw, 0.0), ga(ih, iw), gb(ih, iw);
    ga.data = pa;
    gb.data = pb;
    const Plane ws = saliency_blur(base, sal, cfg).weight;
    blur_path_backward(ga, ws, cfg, grad);
    blur_path_backward(gb, radial, cfg, grad);
    store.accumulate_grad("img", grad.data);
    out.push_back({"blur paths wrt image", fd_gradient_check(f, store, h, tol, workers)});
  }

  {  // Attention fusion with respect to q, key_proj, query_proj, X_A, X_B.
    const std::size_t ih = 6, iw = 6, de = 4;
    FusionConfig fcfg;
    fcfg.grid_h = 3;
    fcfg.grid_w = 3;
    fcfg.key_dim = 3;
    Rng rng(21);
    Image xa0(ih, iw), xb0(ih, iw);
    for (double& v : xa0.data) v = rng.uniform();
    for (double& v : xb0.data) v = rng.uniform();
    ParamStore store;
    init_fusion_params(store, fcfg, de, 22);
    Tensor q0({de});
    for (auto& v : q0.values()) v = rng.gaussian();
    store.add("q", q0);
    store.add("xa", Tensor::from({ih, iw, 3}, xa0.data));
    store.add("xb", Tensor::from({ih, iw, 3}, xb0.data));
    std::vector<double> probe(ih * iw * 3);
    for (double& v : probe) v = rng.gaussian();

    auto f = [&](const ParamStore& s) {
      Image xa(ih, iw), xb(ih, iw);
      xa.data = s.value("xa").values();
      xb.data = s.value("xb").values();
      const auto feat = pixel_key_features(xa, xb, fcfg);
      const auto keys = pixel_keys(feat, s.value("fusion.key_proj"), fcfg);
      const auto scores = attention_scores(s.value("q").values(), s.value("fusion.query_proj"),
                                           keys, fcfg);
      const auto res = fuse_images(xa, xb, scores, fcfg);
      double acc = 0.0;
      for (std::size_t i = 0; i < probe.size(); ++i) acc += probe[i] * res.fused.data[i];
      return acc;
    };
    const auto feat = pixel_key_features(xa0, xb0, fcfg);
    const auto keys = pixel_keys(feat, store.value("fusion.key_proj"), fcfg);
    const auto scores =
        attention_scores(store.value("q").values(), store.value("fusion.query_proj"), keys, fcfg);
    FuseCache cache;
    fuse_images(xa0, xb0, scores, fcfg, &cache);
    Image d_fused(ih, iw);
    d_fused.data = probe;
    Image dxa(ih, iw, 0.0), dxb(ih, iw, 0.0);
    const auto grads = fusion_backward(d_fused, xa0, xb0, feat, keys, store.value("q").values(),
                                       store, cache, fcfg, store, &dxa, &dxb);
    store.accumulate_grad("q", grads.d_query);
    store.accumulate_grad("xa", dxa.data);
    store.accumulate_grad("xb", dxb.data);
    out.push_back({"fusion wrt q and projections", fd_gradient_check(f, store, h, tol, workers)});
  }

  {  // Spectral screening with respect to the selection logits and gammas.
    const std::size_t C = 2, T = 64;
    const double tau = 1.0;
    Rng rng(31);
    EegTrial x(C, T, 250.0);
    for (double& v : x.data) v = rng.gaussian();
    std::vector<double> probe(C * T);
    for (double& v : probe) v = rng.gaussian();
    BandSpec base = BandSpec::canonical(250.0);
    ParamStore store;
    Tensor logits({5}), graw({5});
    for (std::size_t i = 0; i < 5; ++i) {
      logits[i] = rng.uniform(-0.5, 0.5);
      graw[i] = gamma_raw_init(base) + rng.uniform(-0.4, 0.4);
    }
    store.add("logits", logits);
    store.add("gamma_raw", graw);
    auto build = [&](const ParamStore& s) {
      BandSpec spec = base;
      for (std::size_t i = 0; i < 5; ++i) spec.gamma[i] = gamma_from_raw(s.value("gamma_raw")[i], spec);
      return spec;
    };
    auto f = [&](const ParamStore& s) {
      const auto m = selection_weights(s.value("logits").values(), tau);
      const EegTrial y = screen_trial(x, build(s), m);
      double acc = 0.0;
      for (std::size_t p = 0; p < y.data.size(); ++p) acc += probe[p] * y.data[p];
      return acc;
    };
    const auto m = selection_weights(store.value("logits").values(), tau);
    ScreenCache cache;
    screen_trial(x, build(store), m, &cache);
    std::vector<double> dm(5, 0.0), dgamma(5, 0.0);
    screen_backward(cache, probe, dm, dgamma);
    store.accumulate_grad("logits", selection_weights_backward(m, dm, tau));
    std::vector<double> draw(5);
    for (std::size_t i = 0; i < 5; ++i) {
      draw[i] = dgamma[i] * gamma_from_raw_deriv(store.value("gamma_raw")[i], base);
    }
    store.accumulate_grad("gamma_raw", draw);
    out.push_back({"spectral wrt w and gamma", fd_gradient_check(f, store, h, tol, workers)});
  }

  {  // All three losses end to end through both encoders.
    SynthConfig synth;
    synth.n_classes = 4;
    synth.n_test_classes = 1;
    synth.imgs_per_class = 1;
    synth.trials_per_image = 1;
    synth.image_height = 16;
    synth.image_width = 16;
    synth.channels = 3;
    synth.samples = 32;
    synth.noise_scale = 0.3;
    synth.seed = 3;
    TrainConfig cfg;
    cfg.encoder.feature_maps = 2;
    cfg.encoder.kernel_len = 5;
    cfg.encoder.embed_dim = 8;
    cfg.fusion.grid_h = 4;
    cfg.fusion.grid_w = 4;
    cfg.fusion.key_dim = 3;
    cfg.saliency_scales = {2};
    cfg.workers = workers;
    FrozenVisualEncoder visual(cfg.visual_seed, cfg.encoder.embed_dim);
    const SynthDataset ds = synth_dataset(synth, visual);
    Trainer trainer(ds, cfg);
    const std::vector<std::size_t> batch = {0, 1, 2};
    const auto base = trainer.batch_eval(batch, trainer.params(), false);
    const auto frozen = batch_stats(base.sims.matched, cfg.alpha);
    trainer.params().zero_grads();
    trainer.batch_eval(batch, trainer.params(), true, &trainer.params(), &frozen);
    auto f = [&](const ParamStore& s) {
      return trainer.batch_eval(batch, s, false, nullptr, &frozen).overall;
    };
    out.push_back(
        {"losses end-to-end through encoders", fd_gradient_check(f, trainer.params(), h, tol, workers)});
  }

  return out;
}

}  // namespace caia
