#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "caia/align.hpp"
#include "caia/image.hpp"
#include "caia/param_store.hpp"
#include "caia/rng.hpp"
#include "caia/spectral.hpp"

namespace caia {

struct EegEncoderConfig {
  std::size_t feature_maps = 8;   // F temporal filters
  std::size_t kernel_len = 9;     // k_t
  std::size_t stride = 2;
  std::size_t embed_dim = 64;     // d, shared with the visual encoder
  bool nonlinearity = true;

  std::size_t conv_out(std::size_t samples) const {
    if (samples < kernel_len) {
      throw std::invalid_argument("EegEncoderConfig: trial shorter than the temporal kernel");
    }
    return (samples - kernel_len) / stride + 1;
  }
};

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)); }

inline double gelu_deriv(double x) {
  const double phi = std::exp(-0.5 * x * x) * 0.39894228040143267794;  // standard normal pdf
  return 0.5 * (1.0 + std::erf(x * 0.70710678118654752440)) + x * phi;
}

}  // namespace detail

/// Seeds the three trainable tensors of the EEG encoder. Scales are 1/sqrt of
/// the fan-in so pre-normalization outputs start at O(1).
inline void init_eeg_encoder_params(ParamStore& store, const EegEncoderConfig& cfg,
                                    std::size_t channels, std::size_t samples, std::uint64_t seed) {
  const std::size_t t_out = cfg.conv_out(samples);
  auto fill = [&](const char* name, std::vector<std::size_t> shape, double scale) {
    Tensor t(shape);
    Rng rng(Rng::derive(seed, name));
    for (auto& v : t.values()) v = scale * rng.gaussian();
    store.add(name, std::move(t));
  };
  fill("eeg.temporal_kernel", {cfg.feature_maps, cfg.kernel_len},
       1.0 / std::sqrt(static_cast<double>(cfg.kernel_len)));
  fill("eeg.channel_mixer", {channels, cfg.feature_maps},
       1.0 / std::sqrt(static_cast<double>(channels)));
  fill("eeg.projection", {cfg.feature_maps * t_out, cfg.embed_dim},
       1.0 / std::sqrt(static_cast<double>(cfg.feature_maps * t_out)));
}

struct EegEncodeCache {
  std::size_t channels = 0, samples = 0, t_out = 0;
  std::vector<double> input;     // C x T
  std::vector<double> conv;      // F x C x T' (pre-nonlinearity)
  std::vector<double> act;       // F x C x T'
  std::vector<double> flat;      // F * T'
  std::vector<double> pre_norm;  // d
  double norm = 0.0;
  Embedding embedding;
};

/// Temporal convolution (stride cfg.stride) -> smooth nonlinearity -> channel
/// mixing -> flatten -> linear projection -> Euclidean normalization.
inline Embedding eeg_encode(const EegTrial& x, const ParamStore& store, const EegEncoderConfig& cfg,
                            EegEncodeCache* cache = nullptr) {
  const Tensor& kernel = store.value("eeg.temporal_kernel");
  const Tensor& mixer = store.value("eeg.channel_mixer");
  const Tensor& proj = store.value("eeg.projection");
  const std::size_t F = cfg.feature_maps, K = cfg.kernel_len, C = x.channels, T = x.samples;
  const std::size_t t_out = cfg.conv_out(T);
  const std::size_t d = cfg.embed_dim;
  if (mixer.shape()[0] != C || proj.shape()[0] != F * t_out) {
    throw std::invalid_argument("eeg_encode: parameter shapes do not match the trial");
  }

  std::vector<double> conv(F * C * t_out);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* row = x.data.data() + c * T;
      for (std::size_t t = 0; t < t_out; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) acc += kernel.at(f, k) * row[t * cfg.stride + k];
        conv[(f * C + c) * t_out + t] = acc;
      }
    }
  }
  std::vector<double> act(conv.size());
  if (cfg.nonlinearity) {
    for (std::size_t i = 0; i < conv.size(); ++i) act[i] = detail::gelu(conv[i]);
  } else {
    act = conv;
  }
  std::vector<double> flat(F * t_out, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < C; ++c) {
      const double m = mixer.at(c, f);
      for (std::size_t t = 0; t < t_out; ++t) flat[f * t_out + t] += m * act[(f * C + c) * t_out + t];
    }
  }
  std::vector<double> pre(d, 0.0);
  for (std::size_t j = 0; j < flat.size(); ++j) {
    const double v = flat[j];
    if (v == 0.0) continue;
    for (std::size_t dd = 0; dd < d; ++dd) pre[dd] += v * proj.at(j, dd);
  }
  double norm = 0.0;
  for (double v : pre) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw std::runtime_error("eeg_encode: degenerate zero-norm embedding");
  Embedding e(d);
  for (std::size_t dd = 0; dd < d; ++dd) e[dd] = pre[dd] / norm;

  if (cache) {
    cache->channels = C;
    cache->samples = T;
    cache->t_out = t_out;
    cache->input = x.data;
    cache->conv = std::move(conv);
    cache->act = std::move(act);
    cache->flat = std::move(flat);
    cache->pre_norm = std::move(pre);
    cache->norm = norm;
    cache->embedding = e;
  }
  return e;
}

/// Accumulates parameter gradients and (optionally) the gradient with respect
/// to the input signal.
inline void eeg_encode_backward(const EegEncodeCache& cache, const ParamStore& store,
                                const EegEncoderConfig& cfg, const std::vector<double>& d_embedding,
                                ParamStore& grads_out, std::vector<double>* d_input = nullptr) {
  const Tensor& kernel = store.value("eeg.temporal_kernel");
  const Tensor& mixer = store.value("eeg.channel_mixer");
  const Tensor& proj = store.value("eeg.projection");
  const std::size_t F = cfg.feature_maps, K = cfg.kernel_len, C = cache.channels;
  const std::size_t t_out = cache.t_out, d = cfg.embed_dim;

  // Normalization: d_pre = (dE - (dE . e) e) / norm
  double dot = 0.0;
  for (std::size_t dd = 0; dd < d; ++dd) dot += d_embedding[dd] * cache.embedding[dd];
  std::vector<double> d_pre(d);
  for (std::size_t dd = 0; dd < d; ++dd) {
    d_pre[dd] = (d_embedding[dd] - dot * cache.embedding[dd]) / cache.norm;
  }

  // Projection layer.
  Tensor d_proj(proj.shape(), 0.0);
  std::vector<double> d_flat(cache.flat.size(), 0.0);
  for (std::size_t j = 0; j < cache.flat.size(); ++j) {
    double acc = 0.0;
    for (std::size_t dd = 0; dd < d; ++dd) {
      d_proj.at(j, dd) += cache.flat[j] * d_pre[dd];
      acc += proj.at(j, dd) * d_pre[dd];
    }
    d_flat[j] = acc;
  }

  // Channel mixing.
  Tensor d_mixer(mixer.shape(), 0.0);
  std::vector<double> d_act(cache.act.size(), 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < C; ++c) {
      const double m = mixer.at(c, f);
      double acc = 0.0;
      for (std::size_t t = 0; t < t_out; ++t) {
        const double g = d_flat[f * t_out + t];
        acc += cache.act[(f * C + c) * t_out + t] * g;
        d_act[(f * C + c) * t_out + t] = m * g;
      }
      d_mixer.at(c, f) += acc;
    }
  }

  // Nonlinearity.
  std::vector<double> d_conv(cache.conv.size());
  if (cfg.nonlinearity) {
    for (std::size_t i = 0; i < cache.conv.size(); ++i) {
      d_conv[i] = d_act[i] * detail::gelu_deriv(cache.conv[i]);
    }
  } else {
    d_conv = d_act;
  }

  // Temporal convolution.
  Tensor d_kernel(kernel.shape(), 0.0);
  if (d_input) d_input->assign(cache.input.size(), 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* row = cache.input.data() + c * cache.samples;
      for (std::size_t t = 0; t < t_out; ++t) {
        const double g = d_conv[(f * C + c) * t_out + t];
        if (g == 0.0) continue;
        for (std::size_t k = 0; k < K; ++k) {
          d_kernel.at(f, k) += row[t * cfg.stride + k] * g;
          if (d_input) (*d_input)[c * cache.samples + t * cfg.stride + k] += kernel.at(f, k) * g;
        }
      }
    }
  }

  grads_out.accumulate_grad("eeg.temporal_kernel", d_kernel);
  grads_out.accumulate_grad("eeg.channel_mixer", d_mixer);
  grads_out.accumulate_grad("eeg.projection", d_proj);
}

struct VisualEncodeCache {
  std::vector<double> patch;  // patch*patch*3 flattened downsample
  std::vector<double> pre_norm;
  double norm = 0.0;
  Embedding embedding;
  std::size_t in_h = 0, in_w = 0;
};

/// Frozen stand-in for a pretrained image backbone: area-downsample to a
/// fixed patch grid, then a seeded random projection with orthonormal rows,
/// then normalization. Deterministic in (seed, image).
class FrozenVisualEncoder {
 public:
  explicit FrozenVisualEncoder(std::uint64_t seed, std::size_t embed_dim = 64,
                               std::size_t patch = 16)
      : seed_(seed), embed_dim_(embed_dim), patch_(patch) {
    const std::size_t n = patch_ * patch_ * 3;
    if (embed_dim_ > n) {
      throw std::invalid_argument("FrozenVisualEncoder: embed_dim exceeds patch features");
    }
    proj_.resize(embed_dim_ * n);
    Rng rng(Rng::derive(seed, "visual_proj"));
    for (double& v : proj_) v = rng.gaussian();
    // Two rounds of modified Gram-Schmidt over the rows.
    for (int round = 0; round < 2; ++round) {
      for (std::size_t i = 0; i < embed_dim_; ++i) {
        double* ri = proj_.data() + i * n;
        for (std::size_t j = 0; j < i; ++j) {
          const double* rj = proj_.data() + j * n;
          double dot = 0.0;
          for (std::size_t k = 0; k < n; ++k) dot += ri[k] * rj[k];
          for (std::size_t k = 0; k < n; ++k) ri[k] -= dot * rj[k];
        }
        double norm = 0.0;
        for (std::size_t k = 0; k < n; ++k) norm += ri[k] * ri[k];
        norm = std::sqrt(norm);
        for (std::size_t k = 0; k < n; ++k) ri[k] /= norm;
      }
    }
  }

  std::size_t embed_dim() const { return embed_dim_; }
  std::size_t patch() const { return patch_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& projection() const { return proj_; }

  Embedding encode(const Image& img, VisualEncodeCache* cache = nullptr) const {
    if (img.height < patch_ || img.width < patch_) {
      throw std::invalid_argument("FrozenVisualEncoder: image smaller than the patch grid");
    }
    const Image small = area_downsample(img, patch_, patch_);
    const std::size_t n = patch_ * patch_ * 3;
    std::vector<double> pre(embed_dim_, 0.0);
    for (std::size_t dd = 0; dd < embed_dim_; ++dd) {
      const double* row = proj_.data() + dd * n;
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += row[k] * small.data[k];
      pre[dd] = acc;
    }
    double norm = 0.0;
    for (double v : pre) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw std::runtime_error("FrozenVisualEncoder: zero-norm embedding");
    Embedding e(embed_dim_);
    for (std::size_t dd = 0; dd < embed_dim_; ++dd) e[dd] = pre[dd] / norm;
    if (cache) {
      cache->patch = small.data;
      cache->pre_norm = std::move(pre);
      cache->norm = norm;
      cache->embedding = e;
      cache->in_h = img.height;
      cache->in_w = img.width;
    }
    return e;
  }

  void encode_backward(const VisualEncodeCache& cache, const std::vector<double>& d_embedding,
                       Image& d_image_accum) const {
    const std::size_t n = patch_ * patch_ * 3;
    double dot = 0.0;
    for (std::size_t dd = 0; dd < embed_dim_; ++dd) dot += d_embedding[dd] * cache.embedding[dd];
    std::vector<double> d_pre(embed_dim_);
    for (std::size_t dd = 0; dd < embed_dim_; ++dd) {
      d_pre[dd] = (d_embedding[dd] - dot * cache.embedding[dd]) / cache.norm;
    }
    Image d_patch(patch_, patch_);
    for (std::size_t dd = 0; dd < embed_dim_; ++dd) {
      const double* row = proj_.data() + dd * n;
      const double g = d_pre[dd];
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < n; ++k) d_patch.data[k] += row[k] * g;
    }
    area_downsample_adjoint(d_patch, cache.in_h, cache.in_w, d_image_accum);
  }

 private:
  std::uint64_t seed_;
  std::size_t embed_dim_;
  std::size_t patch_;
  std::vector<double> proj_;  // embed_dim x (patch*patch*3), orthonormal rows
};

}  // namespace caia
