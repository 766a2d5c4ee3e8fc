#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "caia/align.hpp"
#include "caia/image.hpp"
#include "caia/param_store.hpp"
#include "caia/rng.hpp"

namespace caia {

/// Attention runs on a coarse grid and is bilinearly upsampled to the image;
/// a full-resolution score row would be O(HW d) for no extra mechanism.
struct FusionConfig {
  std::size_t grid_h = 32;
  std::size_t grid_w = 32;
  std::size_t key_dim = 16;    // d
  bool frozen_query = false;   // ablation: detach the EEG query

  void validate(std::size_t h, std::size_t w) const {
    if (grid_h == 0 || grid_w == 0 || grid_h > h || grid_w > w) {
      throw std::invalid_argument("FusionConfig: attention grid must fit inside the image");
    }
    if (key_dim == 0) throw std::invalid_argument("FusionConfig: key_dim must be positive");
  }
};

inline constexpr std::size_t kKeyFeatures = 8;  // rgb of both paths + cell coordinates

inline void init_fusion_params(ParamStore& store, const FusionConfig& cfg, std::size_t query_dim,
                               std::uint64_t seed) {
  Tensor qp({query_dim, cfg.key_dim});
  Rng rq(Rng::derive(seed, "fusion.query_proj"));
  for (auto& v : qp.values()) v = rq.gaussian() / std::sqrt(static_cast<double>(query_dim));
  store.add("fusion.query_proj", std::move(qp));

  Tensor kp({kKeyFeatures, cfg.key_dim});
  Rng rk(Rng::derive(seed, "fusion.key_proj"));
  for (auto& v : kp.values()) v = rk.gaussian() / std::sqrt(static_cast<double>(kKeyFeatures));
  store.add("fusion.key_proj", std::move(kp));
}

/// Per-cell 8-vectors [rgb of X_A, rgb of X_B, x_norm, y_norm] on the
/// attention grid; depends only on the two blurred images, so it can be
/// precomputed per image pair.
inline std::vector<double> pixel_key_features(const Image& xa, const Image& xb,
                                              const FusionConfig& cfg) {
  if (!xa.same_dims(xb)) throw std::invalid_argument("pixel_key_features: dimension mismatch");
  cfg.validate(xa.height, xa.width);
  const Image da = area_downsample(xa, cfg.grid_h, cfg.grid_w);
  const Image db = area_downsample(xb, cfg.grid_h, cfg.grid_w);
  const std::size_t cells = cfg.grid_h * cfg.grid_w;
  std::vector<double> feat(cells * kKeyFeatures);
  for (std::size_t gy = 0; gy < cfg.grid_h; ++gy) {
    for (std::size_t gx = 0; gx < cfg.grid_w; ++gx) {
      const std::size_t c = gy * cfg.grid_w + gx;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        feat[c * kKeyFeatures + ch] = da.at(gy, gx, ch);
        feat[c * kKeyFeatures + 3 + ch] = db.at(gy, gx, ch);
      }
      feat[c * kKeyFeatures + 6] = (gx + 0.5) / cfg.grid_w;
      feat[c * kKeyFeatures + 7] = (gy + 0.5) / cfg.grid_h;
    }
  }
  return feat;
}

/// keys[c] = features[c]^T key_proj, one d-vector per grid cell.
inline std::vector<double> pixel_keys(const std::vector<double>& features, const Tensor& key_proj,
                                      const FusionConfig& cfg) {
  const std::size_t d = cfg.key_dim;
  if (key_proj.shape() != std::vector<std::size_t>{kKeyFeatures, d}) {
    throw std::invalid_argument("pixel_keys: key projection has the wrong shape");
  }
  const std::size_t cells = features.size() / kKeyFeatures;
  std::vector<double> keys(cells * d, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    const double* f = features.data() + c * kKeyFeatures;
    double* k = keys.data() + c * d;
    for (std::size_t j = 0; j < kKeyFeatures; ++j) {
      const double fj = f[j];
      if (fj == 0.0) continue;
      for (std::size_t dd = 0; dd < d; ++dd) k[dd] += fj * key_proj.at(j, dd);
    }
  }
  return keys;
}

inline std::vector<double> pixel_keys(const Image& xa, const Image& xb, const Tensor& key_proj,
                                      const FusionConfig& cfg) {
  return pixel_keys(pixel_key_features(xa, xb, cfg), key_proj, cfg);
}

/// Q = q^T query_proj; S_c = <Q, keys_c>.
inline std::vector<double> attention_scores(const Embedding& q, const Tensor& query_proj,
                                            const std::vector<double>& keys,
                                            const FusionConfig& cfg) {
  const std::size_t d = cfg.key_dim;
  if (query_proj.shape().size() != 2 || query_proj.shape()[0] != q.size() ||
      query_proj.shape()[1] != d) {
    throw std::invalid_argument("attention_scores: query projection has the wrong shape");
  }
  std::vector<double> big_q(d, 0.0);
  for (std::size_t e = 0; e < q.size(); ++e) {
    const double qe = q[e];
    if (qe == 0.0) continue;
    for (std::size_t dd = 0; dd < d; ++dd) big_q[dd] += qe * query_proj.at(e, dd);
  }
  const std::size_t cells = keys.size() / d;
  std::vector<double> scores(cells, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    const double* k = keys.data() + c * d;
    double acc = 0.0;
    for (std::size_t dd = 0; dd < d; ++dd) acc += k[dd] * big_q[dd];
    scores[c] = acc;
  }
  return scores;
}

struct FuseCache {
  std::vector<double> attn_grid;  // sigmoid(S - mean(S)) on the grid
  Plane attention;                // upsampled to image resolution
};

struct FuseResult {
  Image fused;
  Plane attention;
};

/// A = sigmoid(S - mean(S)) upsampled; X_fused = A .* X_A + (1-A) .* X_B.
/// Mean-centering makes the map invariant to constant score offsets.
inline FuseResult fuse_images(const Image& xa, const Image& xb, const std::vector<double>& scores,
                              const FusionConfig& cfg, FuseCache* cache = nullptr) {
  if (!xa.same_dims(xb)) throw std::invalid_argument("fuse_images: dimension mismatch");
  cfg.validate(xa.height, xa.width);
  const std::size_t cells = cfg.grid_h * cfg.grid_w;
  if (scores.size() != cells) throw std::invalid_argument("fuse_images: score count mismatch");
  double mean = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("fuse_images: non-finite score");
    mean += s;
  }
  mean /= cells;

  Plane grid(cfg.grid_h, cfg.grid_w);
  for (std::size_t c = 0; c < cells; ++c) grid.data[c] = 1.0 / (1.0 + std::exp(-(scores[c] - mean)));
  Plane attention = bilinear_upsample(grid, xa.height, xa.width);

  FuseResult res;
  res.fused = Image(xa.height, xa.width);
  for (std::size_t p = 0; p < xa.pixels(); ++p) {
    const double a = attention.data[p];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      res.fused.data[p * 3 + ch] = a * xa.data[p * 3 + ch] + (1.0 - a) * xb.data[p * 3 + ch];
    }
  }
  res.attention = attention;
  if (cache) {
    cache->attn_grid = std::move(grid.data);
    cache->attention = res.attention;
  }
  return res;
}

struct FusionGrads {
  std::vector<double> d_query;   // optional: empty when frozen_query
  std::vector<double> d_scores;  // dL/dS (useful for tests)
};

/// Full backward through the attention fusion. Accumulates into the parameter
/// gradients, the two blurred images (both the direct blend term and the key
/// feature path), and returns dL/dq.
inline FusionGrads fusion_backward(const Image& d_fused, const Image& xa, const Image& xb,
                                   const std::vector<double>& features,
                                   const std::vector<double>& keys, const Embedding& q,
                                   const ParamStore& store, const FuseCache& cache,
                                   const FusionConfig& cfg, ParamStore& grads_out,
                                   Image* d_xa = nullptr, Image* d_xb = nullptr) {
  const Tensor& query_proj = store.value("fusion.query_proj");
  const Tensor& key_proj = store.value("fusion.key_proj");
  const std::size_t d = cfg.key_dim;
  const std::size_t cells = cfg.grid_h * cfg.grid_w;

  // Blend: dA and the direct image terms.
  Plane d_attention(xa.height, xa.width);
  for (std::size_t p = 0; p < xa.pixels(); ++p) {
    const double a = cache.attention.data[p];
    double acc = 0.0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double g = d_fused.data[p * 3 + ch];
      acc += g * (xa.data[p * 3 + ch] - xb.data[p * 3 + ch]);
      if (d_xa) d_xa->data[p * 3 + ch] += a * g;
      if (d_xb) d_xb->data[p * 3 + ch] += (1.0 - a) * g;
    }
    d_attention.data[p] = acc;
  }

  // Upsample adjoint, sigmoid, centering.
  Plane d_grid(cfg.grid_h, cfg.grid_w, 0.0);
  bilinear_upsample_adjoint(d_attention, cfg.grid_h, cfg.grid_w, d_grid);
  std::vector<double> u(cells);
  double u_mean = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    const double a = cache.attn_grid[c];
    u[c] = d_grid.data[c] * a * (1.0 - a);
    u_mean += u[c];
  }
  u_mean /= cells;
  std::vector<double> d_scores(cells);
  for (std::size_t c = 0; c < cells; ++c) d_scores[c] = u[c] - u_mean;

  // Scores: S_c = <Q, K_c> with Q = q^T query_proj.
  std::vector<double> big_q(d, 0.0);
  for (std::size_t e = 0; e < q.size(); ++e) {
    for (std::size_t dd = 0; dd < d; ++dd) big_q[dd] += q[e] * query_proj.at(e, dd);
  }
  std::vector<double> d_big_q(d, 0.0);
  Tensor d_key_proj(key_proj.shape(), 0.0);
  std::vector<double> d_feat(features.size(), 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    const double g = d_scores[c];
    if (g == 0.0) continue;
    const double* k = keys.data() + c * d;
    const double* f = features.data() + c * kKeyFeatures;
    for (std::size_t dd = 0; dd < d; ++dd) {
      d_big_q[dd] += g * k[dd];
      const double dk = g * big_q[dd];  // dL/dK_{c,dd}
      for (std::size_t j = 0; j < kKeyFeatures; ++j) {
        d_key_proj.at(j, dd) += f[j] * dk;
        d_feat[c * kKeyFeatures + j] += key_proj.at(j, dd) * dk;
      }
    }
  }
  grads_out.accumulate_grad("fusion.key_proj", d_key_proj);

  Tensor d_query_proj(query_proj.shape(), 0.0);
  FusionGrads out;
  out.d_scores = std::move(d_scores);
  if (!cfg.frozen_query) out.d_query.assign(q.size(), 0.0);
  for (std::size_t e = 0; e < q.size(); ++e) {
    double acc = 0.0;
    for (std::size_t dd = 0; dd < d; ++dd) {
      d_query_proj.at(e, dd) += q[e] * d_big_q[dd];
      acc += query_proj.at(e, dd) * d_big_q[dd];
    }
    if (!cfg.frozen_query) out.d_query[e] = acc;
  }
  grads_out.accumulate_grad("fusion.query_proj", d_query_proj);

  // Key features: color components flow back through the downsample; the
  // coordinate entries are constants of the grid.
  if (d_xa || d_xb) {
    Image dsa(cfg.grid_h, cfg.grid_w), dsb(cfg.grid_h, cfg.grid_w);
    for (std::size_t c = 0; c < cells; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        dsa.data[c * 3 + ch] = d_feat[c * kKeyFeatures + ch];
        dsb.data[c * 3 + ch] = d_feat[c * kKeyFeatures + 3 + ch];
      }
    }
    if (d_xa) area_downsample_adjoint(dsa, xa.height, xa.width, *d_xa);
    if (d_xb) area_downsample_adjoint(dsb, xb.height, xb.width, *d_xb);
  }
  return out;
}

/// Fixed or single-scalar blends, the two reference fusion baselines.
inline Image blend_images(const Image& xa, const Image& xb, double a) {
  if (!xa.same_dims(xb)) throw std::invalid_argument("blend_images: dimension mismatch");
  Image out(xa.height, xa.width);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = a * xa.data[i] + (1.0 - a) * xb.data[i];
  }
  return out;
}

/// d(blend)/da for the learnable scalar mask baseline.
inline double blend_backward_scalar(const Image& d_fused, const Image& xa, const Image& xb,
                                    double a, Image* d_xa = nullptr, Image* d_xb = nullptr) {
  double da = 0.0;
  for (std::size_t i = 0; i < d_fused.data.size(); ++i) {
    da += d_fused.data[i] * (xa.data[i] - xb.data[i]);
    if (d_xa) d_xa->data[i] += a * d_fused.data[i];
    if (d_xb) d_xb->data[i] += (1.0 - a) * d_fused.data[i];
  }
  return da;
}

}  // namespace caia
