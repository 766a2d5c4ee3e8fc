#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "caia/adam.hpp"
#include "caia/align.hpp"
#include "caia/blur.hpp"
#include "caia/encoders.hpp"
#include "caia/fusion.hpp"
#include "caia/parallel.hpp"
#include "caia/param_store.hpp"
#include "caia/retrieval.hpp"
#include "caia/spectral.hpp"
#include "caia/synth.hpp"

namespace caia {

enum class FusionMode { attention, linear, learnable_mask, center_only, saliency_only, original };

inline const char* fusion_mode_name(FusionMode m) {
  switch (m) {
    case FusionMode::attention: return "attention";
    case FusionMode::linear: return "linear";
    case FusionMode::learnable_mask: return "learnable_mask";
    case FusionMode::center_only: return "center_only";
    case FusionMode::saliency_only: return "saliency_only";
    case FusionMode::original: return "original";
  }
  return "attention";
}

inline FusionMode fusion_mode_from_name(const std::string& name) {
  for (FusionMode m : {FusionMode::attention, FusionMode::linear, FusionMode::learnable_mask,
                       FusionMode::center_only, FusionMode::saliency_only, FusionMode::original}) {
    if (name == fusion_mode_name(m)) return m;
  }
  throw std::invalid_argument("unknown fusion mode '" + name + "'");
}

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t steps = 500;
  double lr = 2e-3;
  double weight_decay = 0.0;
  double w1 = 0.01;
  double w2 = 0.01;
  double tau = 1.0;
  double alpha = 0.05;
  double w0 = 0.5;
  double blur_decay = 3.0;  // g
  double sigma = 0.0;       // 0 = 10 px at 224, scaled with min(H, W)
  double temperature_init = 0.07;
  std::uint64_t seed = 0;
  std::uint64_t visual_seed = 42;
  bool use_fusion = true;   // ATTN ablation flag
  bool use_ibwave = true;   // spectral screening flag
  bool use_bound = true;    // boundary calibration flag
  FusionMode fusion_mode = FusionMode::attention;
  bool detach_stats = true;
  bool frozen_query = false;
  bool avg_trials = true;
  std::size_t workers = 1;
  std::vector<std::size_t> saliency_scales = {2, 4, 8};
  EegEncoderConfig encoder;
  FusionConfig fusion;

  /// ATTN off forces the center-biased path (the ablation baseline).
  FusionMode effective_mode() const { return use_fusion ? fusion_mode : FusionMode::center_only; }
};

struct ModuleCounters {
  std::uint64_t attention_fusions = 0;
  std::uint64_t spectral_screens = 0;
  std::uint64_t boundary_evals = 0;
};

struct StepMetrics {
  std::size_t step = 0;
  double clip = 0.0;
  double bound = 0.0;
  double entropy = 0.0;
  double overall = 0.0;
  double probe_top1 = 0.0;
};

inline constexpr const char* kMetricsCsvHeader = "step,clip_loss,bound_loss,entropy,overall,probe_top1";

inline std::string metrics_to_csv(const std::vector<StepMetrics>& log) {
  std::string out = kMetricsCsvHeader;
  out += "\n";
  char buf[256];
  for (const auto& m : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.step, m.clip, m.bound,
                  m.entropy, m.overall, m.probe_top1);
    out += buf;
  }
  return out;
}

struct PreparedImage {
  const Image* original = nullptr;
  Image xa;                          // saliency-guided path
  Image xb;                          // center-guided path
  std::vector<double> key_features;  // attention grid features
};

struct PreparedData {
  std::vector<PreparedImage> images;
  BlurConfig blur;
};

struct TrainResult {
  ParamStore params;
  std::vector<StepMetrics> log;
  ModuleCounters counters;
  bool diverged = false;
};

struct ModelEval {
  RetrievalResult retrieval;
  std::vector<double> matched_sims;
  std::vector<std::size_t> query_class;
  std::vector<bool> query_outlier_truth;
  std::vector<double> band_weights;
  CalibrationStats stats;
  double outlier_fraction = 0.0;
};

/// Everything the pipeline shares between training and evaluation.
class Trainer {
 public:
  Trainer(const SynthDataset& data, const TrainConfig& cfg)
      : data_(data),
        cfg_(cfg),
        visual_(cfg.visual_seed, cfg.encoder.embed_dim),
        base_bands_(BandSpec::canonical(data.cfg.sample_rate)) {
    blur_cfg_.sigma = cfg.sigma > 0.0 ? cfg.sigma
                                      : default_sigma(data.cfg.image_height, data.cfg.image_width);
    blur_cfg_.w0 = cfg.w0;
    blur_cfg_.decay = cfg.blur_decay;
    fusion_cfg_ = cfg.fusion;
    fusion_cfg_.frozen_query = cfg.frozen_query;
    prepare();
    init_params();
  }

  const TrainConfig& config() const { return cfg_; }
  const PreparedData& prepared() const { return prepared_; }
  const FrozenVisualEncoder& visual() const { return visual_; }
  const BandSpec& base_bands() const { return base_bands_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  ModuleCounters counters() const { return counters_; }

  struct BatchResult {
    double clip = 0.0;
    double bound = 0.0;
    double entropy = 0.0;
    double overall = 0.0;
    double probe_top1 = 0.0;
    SimilarityBatch sims;
  };

  /// Forward (and optionally backward) over a fixed set of training samples.
  /// Gradients are accumulated per sample into private buffers and merged in
  /// sample order, so the result does not depend on the worker count.
  BatchResult batch_eval(const std::vector<std::size_t>& indices, const ParamStore& store,
                         bool compute_grads, ParamStore* grad_sink = nullptr,
                         const CalibrationStats* frozen_stats = nullptr) {
    const std::size_t b = indices.size();
    if (b < 2) throw std::invalid_argument("batch_eval: need a batch of at least two samples");
    const FusionMode mode = cfg_.effective_mode();

    // Shared spectral state for this evaluation.
    BandSpec spec = base_bands_;
    std::vector<double> m;
    if (cfg_.use_ibwave) {
      const auto& raw = store.value("spectral.gamma_raw").values();
      for (std::size_t i = 0; i < spec.gamma.size(); ++i) {
        spec.gamma[i] = gamma_from_raw(raw[i], spec);
      }
      m = selection_weights(store.value("spectral.logits").values(), cfg_.tau);
      counters_.spectral_screens += b;
    }
    if (mode == FusionMode::attention) counters_.attention_fusions += b;

    struct SampleCtx {
      ScreenCache screen;
      EegEncodeCache eeg;
      FuseCache fuse;
      std::vector<double> keys;
      VisualEncodeCache vis;
      Embedding z, y;
      double mask_a = 0.5;
    };
    std::vector<SampleCtx> ctx(b);

    const double mask_logit = store.value("fusion.mask_logit")[0];
    const double mask_a = 1.0 / (1.0 + std::exp(-mask_logit));

    parallel_for(b, cfg_.workers, [&](std::size_t i) {
      const SynthSample& sample = data_.train[indices[i]];
      const PreparedImage& prep = prepared_.images[sample.image_index];
      SampleCtx& c = ctx[i];

      EegTrial screened;
      const EegTrial* enc_in = &sample.trial;
      if (cfg_.use_ibwave) {
        screened = screen_trial(sample.trial, spec, m, compute_grads ? &c.screen : nullptr);
        enc_in = &screened;
      }
      c.z = eeg_encode(*enc_in, store, cfg_.encoder, compute_grads ? &c.eeg : nullptr);

      Image fused;
      switch (mode) {
        case FusionMode::attention: {
          c.keys = pixel_keys(prep.key_features, store.value("fusion.key_proj"), fusion_cfg_);
          const auto scores =
              attention_scores(c.z, store.value("fusion.query_proj"), c.keys, fusion_cfg_);
          fused = fuse_images(prep.xa, prep.xb, scores, fusion_cfg_, &c.fuse).fused;
          break;
        }
        case FusionMode::linear:
          fused = blend_images(prep.xa, prep.xb, 0.5);
          break;
        case FusionMode::learnable_mask:
          c.mask_a = mask_a;
          fused = blend_images(prep.xa, prep.xb, mask_a);
          break;
        case FusionMode::center_only:
          fused = prep.xb;
          break;
        case FusionMode::saliency_only:
          fused = prep.xa;
          break;
        case FusionMode::original:
          fused = *prep.original;
          break;
      }
      c.y = visual_.encode(fused, compute_grads ? &c.vis : nullptr);
    });

    std::vector<Embedding> z(b), y(b);
    for (std::size_t i = 0; i < b; ++i) {
      z[i] = ctx[i].z;
      y[i] = ctx[i].y;
    }

    BatchResult res;
    res.sims = cosine_similarity_matrix(z, y);
    const double temperature = std::exp(store.value("align.log_temperature")[0]);
    auto clip = clip_contrastive_loss(res.sims, temperature);
    res.clip = clip.loss;

    CalibrationStats stats;
    BoundaryLossResult bound;
    if (cfg_.use_bound) {
      stats = frozen_stats ? *frozen_stats : batch_stats(res.sims.matched, cfg_.alpha);
      bound = boundary_loss(res.sims.matched, stats, cfg_.detach_stats);
      res.bound = bound.loss;
      counters_.boundary_evals += 1;
    }
    if (cfg_.use_ibwave) res.entropy = selection_entropy(m);
    res.overall = overall_loss(res.clip, res.bound, res.entropy, cfg_.use_bound ? cfg_.w1 : 0.0,
                               cfg_.use_ibwave ? cfg_.w2 : 0.0);

    std::size_t hits = 0;
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < b; ++j) {
        if (res.sims.at(i, j) > res.sims.at(i, best)) best = j;
      }
      if (best == i) ++hits;
    }
    res.probe_top1 = static_cast<double>(hits) / b;

    if (!compute_grads) return res;
    if (!grad_sink) throw std::invalid_argument("batch_eval: gradients requested without a sink");

    // dL/dsim: contrastive plus the diagonal boundary pull.
    std::vector<double> dsim = clip.dsim;
    if (cfg_.use_bound) {
      for (std::size_t i = 0; i < b; ++i) dsim[i * b + i] += cfg_.w1 * bound.ds[i];
    }
    grad_sink->grad("align.log_temperature")[0] += clip.dtemperature * temperature;

    std::vector<Embedding> dz(b, Embedding(cfg_.encoder.embed_dim, 0.0));
    std::vector<Embedding> dy(b, Embedding(cfg_.encoder.embed_dim, 0.0));
    cosine_similarity_backward(z, y, res.sims, dsim, dz, dy);

    ensure_slots(b);
    parallel_for(b, cfg_.workers, [&](std::size_t i) {
      const SynthSample& sample = data_.train[indices[i]];
      const PreparedImage& prep = prepared_.images[sample.image_index];
      SampleCtx& c = ctx[i];
      ParamStore& slot = slots_[i];
      slot.zero_grads();
      slot_dm_[i].assign(spec.gamma.size(), 0.0);
      slot_dgamma_[i].assign(spec.gamma.size(), 0.0);

      Image d_fused(data_.cfg.image_height, data_.cfg.image_width, 0.0);
      visual_.encode_backward(c.vis, dy[i], d_fused);

      Embedding dz_total = dz[i];
      switch (mode) {
        case FusionMode::attention: {
          const auto fg = fusion_backward(d_fused, prep.xa, prep.xb, prep.key_features, c.keys,
                                          c.z, store, c.fuse, fusion_cfg_, slot, nullptr, nullptr);
          if (!fusion_cfg_.frozen_query) {
            for (std::size_t k = 0; k < dz_total.size(); ++k) dz_total[k] += fg.d_query[k];
          }
          break;
        }
        case FusionMode::learnable_mask: {
          const double da = blend_backward_scalar(d_fused, prep.xa, prep.xb, c.mask_a);
          slot.grad("fusion.mask_logit")[0] += da * c.mask_a * (1.0 - c.mask_a);
          break;
        }
        default:
          break;  // fixed blends contribute no parameter gradients
      }

      std::vector<double> d_screen;
      eeg_encode_backward(c.eeg, store, cfg_.encoder, dz_total, slot,
                          cfg_.use_ibwave ? &d_screen : nullptr);
      if (cfg_.use_ibwave) {
        screen_backward(c.screen, d_screen, slot_dm_[i], slot_dgamma_[i]);
      }
    });

    // Fixed-order merge: names outer (sorted), sample slots inner.
    grad_sink->for_each([&](const std::string& name, ParamEntry& e) {
      if (!e.trainable) return;
      for (std::size_t i = 0; i < b; ++i) {
        if (!slots_[i].contains(name)) continue;
        const Tensor& g = slots_[i].grad(name);
        for (std::size_t k = 0; k < g.size(); ++k) e.grad[k] += g[k];
      }
    });

    if (cfg_.use_ibwave) {
      const std::size_t n = spec.gamma.size();
      std::vector<double> dm_total(n, 0.0), dgamma_total(n, 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          dm_total[k] += slot_dm_[i][k];
          dgamma_total[k] += slot_dgamma_[i][k];
        }
      }
      const auto dh = selection_entropy_backward(m);
      for (std::size_t k = 0; k < n; ++k) dm_total[k] += cfg_.w2 * dh[k];
      grad_sink->accumulate_grad("spectral.logits",
                                 selection_weights_backward(m, dm_total, cfg_.tau));
      const auto& raw = store.value("spectral.gamma_raw").values();
      std::vector<double> dgamma_raw(n);
      for (std::size_t k = 0; k < n; ++k) {
        dgamma_raw[k] = dgamma_total[k] * gamma_from_raw_deriv(raw[k], base_bands_);
      }
      grad_sink->accumulate_grad("spectral.gamma_raw", dgamma_raw);
    }
    return res;
  }

  TrainResult run() {
    TrainResult out;
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg_.lr;
    adam_cfg.weight_decay = cfg_.weight_decay;
    AdamState adam;
    Rng batch_rng(Rng::derive(cfg_.seed, "batch"));
    std::vector<std::size_t> pool(data_.train.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    const std::size_t b = std::min(cfg_.batch_size, pool.size());

    for (std::size_t step = 0; step < cfg_.steps; ++step) {
      // Partial Fisher-Yates: a fresh batch without replacement every step.
      // Batches are sets; sorting them canonicalizes reduction order.
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t swap_with = j + batch_rng.uniform_index(pool.size() - j);
        std::swap(pool[j], pool[swap_with]);
      }
      std::vector<std::size_t> batch(pool.begin(), pool.begin() + b);
      std::sort(batch.begin(), batch.end());

      const BatchResult res = batch_eval(batch, store_, /*compute_grads=*/true, &store_);
      out.log.push_back({step, res.clip, res.bound, res.entropy, res.overall, res.probe_top1});
      if (!std::isfinite(res.overall)) {
        out.diverged = true;
        store_.zero_grads();
        break;
      }
      adam_step(store_, adam, adam_cfg);
    }
    out.params = store_;
    out.counters = counters_;
    return out;
  }

  /// Zero-shot evaluation on the held-out classes. In attention mode each
  /// query re-fuses every candidate image with its own EEG embedding; fixed
  /// blends embed candidates once.
  ModelEval evaluate(const ParamStore& store) {
    const FusionMode mode = cfg_.effective_mode();
    BandSpec spec = base_bands_;
    std::vector<double> m(spec.gamma.size(), 1.0 / spec.gamma.size());
    if (cfg_.use_ibwave) {
      const auto& raw = store.value("spectral.gamma_raw").values();
      for (std::size_t i = 0; i < spec.gamma.size(); ++i) {
        spec.gamma[i] = gamma_from_raw(raw[i], spec);
      }
      m = selection_weights(store.value("spectral.logits").values(), cfg_.tau);
    }

    // Candidate images: the held-out split, ordered by class.
    std::vector<std::size_t> candidate_images;
    for (std::size_t i = 0; i < data_.images.size(); ++i) {
      if (data_.images[i].test_split) candidate_images.push_back(i);
    }
    if (candidate_images.empty()) throw std::invalid_argument("evaluate: empty candidate set");

    // Queries: averaged per test image, or every raw trial.
    struct Query {
      EegTrial trial;
      std::size_t class_id = 0;
      bool outlier = false;
    };
    std::vector<Query> queries;
    if (cfg_.avg_trials) {
      for (std::size_t img = 0; img < candidate_images.size(); ++img) {
        Query q;
        std::size_t count = 0, outliers = 0;
        for (const SynthSample& s : data_.test) {
          if (s.image_index != candidate_images[img]) continue;
          if (count == 0) {
            q.trial = s.trial;
          } else {
            for (std::size_t p = 0; p < q.trial.data.size(); ++p) q.trial.data[p] += s.trial.data[p];
          }
          q.class_id = s.class_id;
          outliers += s.outlier ? 1 : 0;
          ++count;
        }
        for (double& v : q.trial.data) v /= static_cast<double>(count);
        q.outlier = 2 * outliers > count;
        queries.push_back(std::move(q));
      }
    } else {
      for (const SynthSample& s : data_.test) {
        queries.push_back({s.trial, s.class_id, s.outlier});
      }
    }

    const std::size_t nq = queries.size();
    const std::size_t nc = candidate_images.size();
    if (cfg_.use_ibwave) counters_.spectral_screens += nq;
    if (mode == FusionMode::attention) counters_.attention_fusions += nq * nc;

    std::vector<Embedding> z(nq);
    parallel_for(nq, cfg_.workers, [&](std::size_t i) {
      if (cfg_.use_ibwave) {
        const EegTrial screened = screen_trial(queries[i].trial, spec, m);
        z[i] = eeg_encode(screened, store, cfg_.encoder);
      } else {
        z[i] = eeg_encode(queries[i].trial, store, cfg_.encoder);
      }
    });

    std::vector<double> sims(nq * nc, 0.0);
    if (mode == FusionMode::attention) {
      parallel_for(nq, cfg_.workers, [&](std::size_t i) {
        for (std::size_t c = 0; c < nc; ++c) {
          const PreparedImage& prep = prepared_.images[candidate_images[c]];
          const auto keys =
              pixel_keys(prep.key_features, store.value("fusion.key_proj"), fusion_cfg_);
          const auto scores =
              attention_scores(z[i], store.value("fusion.query_proj"), keys, fusion_cfg_);
          const Image fused = fuse_images(prep.xa, prep.xb, scores, fusion_cfg_).fused;
          const Embedding y = visual_.encode(fused);
          double dot = 0.0, ny = 0.0, nz = 0.0;
          for (std::size_t k = 0; k < y.size(); ++k) {
            dot += z[i][k] * y[k];
            ny += y[k] * y[k];
            nz += z[i][k] * z[i][k];
          }
          sims[i * nc + c] = dot / std::sqrt(ny * nz);
        }
      });
    } else {
      const double mask_logit = store.value("fusion.mask_logit")[0];
      const double mask_a = 1.0 / (1.0 + std::exp(-mask_logit));
      std::vector<Embedding> y(nc);
      parallel_for(nc, cfg_.workers, [&](std::size_t c) {
        const PreparedImage& prep = prepared_.images[candidate_images[c]];
        Image fused;
        switch (mode) {
          case FusionMode::linear: fused = blend_images(prep.xa, prep.xb, 0.5); break;
          case FusionMode::learnable_mask: fused = blend_images(prep.xa, prep.xb, mask_a); break;
          case FusionMode::center_only: fused = prep.xb; break;
          case FusionMode::saliency_only: fused = prep.xa; break;
          default: fused = *prep.original; break;
        }
        y[c] = visual_.encode(fused);
      });
      for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t c = 0; c < nc; ++c) {
          double dot = 0.0, nyv = 0.0, nzv = 0.0;
          for (std::size_t k = 0; k < y[c].size(); ++k) {
            dot += z[i][k] * y[c][k];
            nyv += y[c][k] * y[c][k];
            nzv += z[i][k] * z[i][k];
          }
          sims[i * nc + c] = dot / std::sqrt(nyv * nzv);
        }
      }
    }

    ModelEval eval;
    std::vector<std::size_t> true_candidate(nq);
    for (std::size_t i = 0; i < nq; ++i) {
      true_candidate[i] = queries[i].class_id - data_.cfg.train_classes();
      eval.query_class.push_back(queries[i].class_id);
      eval.query_outlier_truth.push_back(queries[i].outlier);
      eval.matched_sims.push_back(sims[i * nc + true_candidate[i]]);
    }
    eval.retrieval =
        evaluate_retrieval_from_sims(sims, nq, nc, true_candidate, eval.query_class, {1, 5});
    eval.band_weights = m;
    eval.stats = batch_stats(eval.matched_sims, cfg_.alpha);
    eval.outlier_fraction = static_cast<double>(eval.stats.outlier_count) / nq;
    return eval;
  }

 private:
  void prepare() {
    for (std::size_t r : cfg_.saliency_scales) {
      if (2 * r >= std::min(data_.cfg.image_height, data_.cfg.image_width)) {
        throw std::invalid_argument("TrainConfig: saliency scale too large for the images");
      }
    }
    prepared_.blur = blur_cfg_;
    prepared_.images.resize(data_.images.size());
    parallel_for(data_.images.size(), cfg_.workers, [&](std::size_t i) {
      const Image& img = data_.images[i].image;
      PreparedImage& p = prepared_.images[i];
      p.original = &img;
      const Image blurred = gaussian_blur(img, blur_cfg_);
      const Plane sal = compute_saliency(img, cfg_.saliency_scales);
      p.xa = saliency_blur(img, blurred, sal, blur_cfg_).image;
      p.xb = center_blur(img, blurred, blur_cfg_).image;
      p.key_features = pixel_key_features(p.xa, p.xb, fusion_cfg_);
    });
  }

  void init_params() {
    init_eeg_encoder_params(store_, cfg_.encoder, data_.cfg.channels, data_.cfg.samples, cfg_.seed);
    init_fusion_params(store_, fusion_cfg_, cfg_.encoder.embed_dim, cfg_.seed);
    store_.add("fusion.mask_logit", Tensor::scalar(0.0));
    const std::size_t n = base_bands_.bands();
    store_.add("spectral.logits", Tensor({n}, 0.0));
    store_.add("spectral.gamma_raw", Tensor({n}, gamma_raw_init(base_bands_)));
    store_.add("align.log_temperature", Tensor::scalar(std::log(cfg_.temperature_init)));
  }

  void ensure_slots(std::size_t b) {
    while (slots_.size() < b) {
      ParamStore slot;
      store_.for_each([&](const std::string& name, const ParamEntry& e) {
        slot.add(name, Tensor(e.value.shape(), 0.0), e.trainable);
      });
      slots_.push_back(std::move(slot));
      slot_dm_.emplace_back();
      slot_dgamma_.emplace_back();
    }
  }

  const SynthDataset& data_;
  TrainConfig cfg_;
  FrozenVisualEncoder visual_;
  BandSpec base_bands_;
  BlurConfig blur_cfg_;
  FusionConfig fusion_cfg_;
  PreparedData prepared_;
  ParamStore store_;
  ModuleCounters counters_;
  std::vector<ParamStore> slots_;
  std::vector<std::vector<double>> slot_dm_;
  std::vector<std::vector<double>> slot_dgamma_;
};

}  // namespace caia
