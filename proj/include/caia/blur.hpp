#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "caia/image.hpp"

namespace caia {

struct BlurConfig {
  double sigma = 5.0;   // pixels
  double w0 = 0.5;      // overall blur strength, in [0, 1]
  double decay = 3.0;   // radial decay rate g

  std::size_t kernel_radius() const { return static_cast<std::size_t>(std::ceil(3.0 * sigma)); }

  void validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("BlurConfig: sigma must be positive");
    if (w0 < 0.0 || w0 > 1.0) throw std::invalid_argument("BlurConfig: w0 must be in [0,1]");
    if (!(decay > 0.0)) throw std::invalid_argument("BlurConfig: decay rate must be positive");
  }
};

/// Default blur strength: 10 px at 224, scaled with the short image side.
inline double default_sigma(std::size_t h, std::size_t w) {
  return 10.0 * static_cast<double>(std::min(h, w)) / 224.0;
}

/// 1-D Gaussian taps truncated at radius ceil(3*sigma), renormalized to sum 1.
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const std::size_t r = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(r);
    k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace detail {

// y[i] = sum_k w[k] * x[reflect(i + k - r)], along one axis of a plane held
// in `src` with the given stride layout.
inline void conv1d_reflect(const double* src, double* dst, std::size_t n, std::size_t stride,
                           const std::vector<double>& kernel) {
  const long long r = static_cast<long long>(kernel.size() / 2);
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    double acc = 0.0;
    for (long long k = -r; k <= r; ++k) {
      acc += kernel[k + r] * src[reflect_index(i + k, n) * stride];
    }
    dst[i * stride] = acc;
  }
}

inline void conv1d_reflect_adjoint(const double* grad_out, double* grad_in, std::size_t n,
                                   std::size_t stride, const std::vector<double>& kernel) {
  const long long r = static_cast<long long>(kernel.size() / 2);
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const double g = grad_out[i * stride];
    for (long long k = -r; k <= r; ++k) {
      grad_in[reflect_index(i + k, n) * stride] += kernel[k + r] * g;
    }
  }
}

}  // namespace detail

/// Separable Gaussian blur with mirrored borders, applied per channel.
inline Image gaussian_blur(const Image& img, const BlurConfig& cfg) {
  cfg.validate();
  const auto kernel = gaussian_kernel(cfg.sigma);
  Image out(img.height, img.width);
  std::vector<double> channel(img.pixels()), tmp(img.pixels());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < img.pixels(); ++p) channel[p] = img.data[p * 3 + c];
    // rows
    for (std::size_t y = 0; y < img.height; ++y) {
      detail::conv1d_reflect(channel.data() + y * img.width, tmp.data() + y * img.width, img.width, 1,
                             kernel);
    }
    // columns
    for (std::size_t x = 0; x < img.width; ++x) {
      detail::conv1d_reflect(tmp.data() + x, channel.data() + x, img.height, img.width, kernel);
    }
    for (std::size_t p = 0; p < img.pixels(); ++p) out.data[p * 3 + c] = channel[p];
  }
  return out;
}

/// Adjoint of gaussian_blur (columns then rows, each transposed).
inline void gaussian_blur_adjoint(const Image& grad_out, const BlurConfig& cfg, Image& grad_in_accum) {
  const auto kernel = gaussian_kernel(cfg.sigma);
  std::vector<double> channel(grad_out.pixels()), tmp(grad_out.pixels());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < grad_out.pixels(); ++p) channel[p] = grad_out.data[p * 3 + c];
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t x = 0; x < grad_out.width; ++x) {
      detail::conv1d_reflect_adjoint(channel.data() + x, tmp.data() + x, grad_out.height,
                                     grad_out.width, kernel);
    }
    std::fill(channel.begin(), channel.end(), 0.0);
    for (std::size_t y = 0; y < grad_out.height; ++y) {
      detail::conv1d_reflect_adjoint(tmp.data() + y * grad_out.width,
                                     channel.data() + y * grad_out.width, grad_out.width, 1, kernel);
    }
    for (std::size_t p = 0; p < grad_out.pixels(); ++p) grad_in_accum.data[p * 3 + c] += channel[p];
  }
}

/// Multi-scale center-surround color contrast, min-max normalized to [0,1].
/// Stand-in for an external salient-object detector: per pixel, the mean over
/// scales of the Euclidean RGB distance to the mean color of the (2r+1)^2
/// neighborhood (windows clamped at borders).
inline Plane compute_saliency(const Image& img, const std::vector<std::size_t>& scales) {
  if (scales.empty()) throw std::invalid_argument("compute_saliency: need at least one scale");
  for (std::size_t r : scales) {
    if (r == 0 || 2 * r >= std::min(img.height, img.width)) {
      throw std::invalid_argument("compute_saliency: scale too large for image");
    }
  }
  const std::size_t h = img.height, w = img.width;
  // Summed-area tables, one per channel.
  std::vector<double> sat((h + 1) * (w + 1) * 3, 0.0);
  auto sat_at = [&](std::size_t y, std::size_t x, std::size_t c) -> double& {
    return sat[(y * (w + 1) + x) * 3 + c];
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        sat_at(y + 1, x + 1, c) =
            img.at(y, x, c) + sat_at(y, x + 1, c) + sat_at(y + 1, x, c) - sat_at(y, x, c);
      }
    }
  }
  Plane sal(h, w, 0.0);
  for (std::size_t r : scales) {
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t y0 = y > r ? y - r : 0;
      const std::size_t y1 = std::min(y + r, h - 1);
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t x0 = x > r ? x - r : 0;
        const std::size_t x1 = std::min(x + r, w - 1);
        const double count = static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
        double dist2 = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double sum = sat_at(y1 + 1, x1 + 1, c) - sat_at(y0, x1 + 1, c) -
                             sat_at(y1 + 1, x0, c) + sat_at(y0, x0, c);
          const double d = img.at(y, x, c) - sum / count;
          dist2 += d * d;
        }
        sal.at(y, x) += std::sqrt(dist2);
      }
    }
  }
  double lo = sal.data[0], hi = sal.data[0];
  for (double v : sal.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Sub-epsilon contrast ranges are accumulation noise from the summed-area
  // tables; treat them as an all-equal image.
  if (hi - lo <= 1e-12) {
    std::fill(sal.data.begin(), sal.data.end(), 0.0);
  } else {
    for (double& v : sal.data) v = (v - lo) / (hi - lo);
  }
  return sal;
}

struct BlurPathResult {
  Image image;
  Plane weight;
};

/// Saliency-guided path: w_S = (1 - w0) * saliency, output
/// w_S * X + (1 - w_S) * blur(X). `blurred` must be gaussian_blur(img, cfg).
inline BlurPathResult saliency_blur(const Image& img, const Image& blurred, const Plane& sal,
                                    const BlurConfig& cfg) {
  cfg.validate();
  if (sal.height != img.height || sal.width != img.width || !img.same_dims(blurred)) {
    throw std::invalid_argument("saliency_blur: dimension mismatch");
  }
  for (double v : sal.data) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("saliency_blur: saliency out of [0,1]");
  }
  BlurPathResult res;
  res.weight = Plane(img.height, img.width);
  res.image = Image(img.height, img.width);
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    const double ws = (1.0 - cfg.w0) * sal.data[p];
    res.weight.data[p] = ws;
    for (std::size_t c = 0; c < 3; ++c) {
      res.image.data[p * 3 + c] = ws * img.data[p * 3 + c] + (1.0 - ws) * blurred.data[p * 3 + c];
    }
  }
  return res;
}

inline BlurPathResult saliency_blur(const Image& img, const Plane& sal, const BlurConfig& cfg) {
  return saliency_blur(img, gaussian_blur(img, cfg), sal, cfg);
}

/// Radial center-bias weights, Eq-style: w_R = (1 - w0) * exp(-g * d) with d
/// the distance to the image center normalized so corners sit at d = 1.
inline Plane center_weight_map(std::size_t h, std::size_t w, const BlurConfig& cfg) {
  cfg.validate();
  if (h == 0 || w == 0) throw std::invalid_argument("center_weight_map: empty image");
  Plane map(h, w);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double corner = std::sqrt(cy * cy + cx * cx);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double d = corner > 0.0 ? std::sqrt(dy * dy + dx * dx) / corner : 0.0;
      map.at(y, x) = (1.0 - cfg.w0) * std::exp(-cfg.decay * d);
    }
  }
  return map;
}

/// Center-guided path: w_R * X + (1 - w_R) * blur(X).
inline BlurPathResult center_blur(const Image& img, const Image& blurred, const BlurConfig& cfg) {
  if (!img.same_dims(blurred)) throw std::invalid_argument("center_blur: dimension mismatch");
  BlurPathResult res;
  res.weight = center_weight_map(img.height, img.width, cfg);
  res.image = Image(img.height, img.width);
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    const double wr = res.weight.data[p];
    for (std::size_t c = 0; c < 3; ++c) {
      res.image.data[p * 3 + c] = wr * img.data[p * 3 + c] + (1.0 - wr) * blurred.data[p * 3 + c];
    }
  }
  return res;
}

inline BlurPathResult center_blur(const Image& img, const BlurConfig& cfg) {
  return center_blur(img, gaussian_blur(img, cfg), cfg);
}

/// Backward of either blur path for a fixed weight map: the output is
/// weight * X + (1 - weight) * blur(X), so
/// dX = weight .* dOut + blur_adjoint((1 - weight) .* dOut).
/// The saliency map is treated as a fixed input (it comes from a detector,
/// not from the differentiable graph).
inline void blur_path_backward(const Image& grad_out, const Plane& weight, const BlurConfig& cfg,
                               Image& grad_in_accum) {
  Image blurred_part(grad_out.height, grad_out.width);
  for (std::size_t p = 0; p < grad_out.pixels(); ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      grad_in_accum.data[p * 3 + c] += weight.data[p] * grad_out.data[p * 3 + c];
      blurred_part.data[p * 3 + c] = (1.0 - weight.data[p]) * grad_out.data[p * 3 + c];
    }
  }
  gaussian_blur_adjoint(blurred_part, cfg, grad_in_accum);
}

}  // namespace caia
