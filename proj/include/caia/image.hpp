#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace caia {

/// H x W x 3 image, row-major (y, x, channel), values nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * 3 + c]; }
  std::size_t pixels() const { return height * width; }
  bool same_dims(const Image& o) const { return height == o.height && width == o.width; }
};

/// Single-channel H x W map (saliency, blur weights, attention).
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t size() const { return data.size(); }
};

/// Mirror index with edge repetition (..., x1, x0 | x0, x1, ...), defined for
/// any offset. Keeps symmetric-kernel convolutions mean-preserving.
inline std::size_t reflect_index(long long i, long long n) {
  if (n == 1) return 0;
  const long long period = 2 * n;
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

namespace detail {

struct AxisSegments {
  std::vector<std::size_t> start;
  std::vector<std::vector<double>> weights;  // per output cell, overlap lengths
  double scale = 1.0;
};

inline AxisSegments box_segments(std::size_t in, std::size_t out) {
  AxisSegments seg;
  seg.scale = static_cast<double>(in) / static_cast<double>(out);
  seg.start.resize(out);
  seg.weights.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = o * seg.scale;
    const double hi = (o + 1) * seg.scale;
    std::size_t first = static_cast<std::size_t>(lo);
    if (first >= in) first = in - 1;
    seg.start[o] = first;
    for (std::size_t i = first; i < in && i < static_cast<std::size_t>(std::ceil(hi)); ++i) {
      const double w = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (w <= 0.0) break;
      seg.weights[o].push_back(w);
    }
  }
  return seg;
}

}  // namespace detail

/// Exact fractional box filter; each output cell averages the input pixels it
/// covers, weighted by overlap area. Identity when dimensions match.
inline Image area_downsample(const Image& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || out_h > img.height || out_w > img.width) {
    throw std::invalid_argument("area_downsample: invalid output dimensions");
  }
  const auto rows = detail::box_segments(img.height, out_h);
  const auto cols = detail::box_segments(img.width, out_w);
  const double inv_area = 1.0 / (rows.scale * cols.scale);
  Image out(out_h, out_w);
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (std::size_t ry = 0; ry < rows.weights[oy].size(); ++ry) {
        const std::size_t y = rows.start[oy] + ry;
        const double wy = rows.weights[oy][ry];
        for (std::size_t rx = 0; rx < cols.weights[ox].size(); ++rx) {
          const std::size_t x = cols.start[ox] + rx;
          const double w = wy * cols.weights[ox][rx];
          for (std::size_t c = 0; c < 3; ++c) acc[c] += w * img.at(y, x, c);
        }
      }
      for (std::size_t c = 0; c < 3; ++c) out.at(oy, ox, c) = acc[c] * inv_area;
    }
  }
  return out;
}

/// Adjoint of area_downsample: scatters cell gradients back over the covered
/// pixels with the same fractional weights.
inline void area_downsample_adjoint(const Image& grad_out, std::size_t in_h, std::size_t in_w,
                                    Image& grad_in_accum) {
  const auto rows = detail::box_segments(in_h, grad_out.height);
  const auto cols = detail::box_segments(in_w, grad_out.width);
  const double inv_area = 1.0 / (rows.scale * cols.scale);
  for (std::size_t oy = 0; oy < grad_out.height; ++oy) {
    for (std::size_t ox = 0; ox < grad_out.width; ++ox) {
      for (std::size_t ry = 0; ry < rows.weights[oy].size(); ++ry) {
        const std::size_t y = rows.start[oy] + ry;
        const double wy = rows.weights[oy][ry];
        for (std::size_t rx = 0; rx < cols.weights[ox].size(); ++rx) {
          const std::size_t x = cols.start[ox] + rx;
          const double w = wy * cols.weights[ox][rx] * inv_area;
          for (std::size_t c = 0; c < 3; ++c) grad_in_accum.at(y, x, c) += w * grad_out.at(oy, ox, c);
        }
      }
    }
  }
}

/// Bilinear upsample with half-pixel centers; identity when dimensions match.
inline Plane bilinear_upsample(const Plane& grid, std::size_t out_h, std::size_t out_w) {
  Plane out(out_h, out_w);
  const double sy = static_cast<double>(grid.height) / out_h;
  const double sx = static_cast<double>(grid.width) / out_w;
  for (std::size_t y = 0; y < out_h; ++y) {
    const double gy = (y + 0.5) * sy - 0.5;
    long long y0 = static_cast<long long>(std::floor(gy));
    double ty = gy - y0;
    if (y0 < 0) { y0 = 0; ty = 0.0; }
    if (y0 >= static_cast<long long>(grid.height) - 1) { y0 = grid.height - 1; ty = 0.0; }
    const std::size_t y1 = std::min<std::size_t>(y0 + 1, grid.height - 1);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double gx = (x + 0.5) * sx - 0.5;
      long long x0 = static_cast<long long>(std::floor(gx));
      double tx = gx - x0;
      if (x0 < 0) { x0 = 0; tx = 0.0; }
      if (x0 >= static_cast<long long>(grid.width) - 1) { x0 = grid.width - 1; tx = 0.0; }
      const std::size_t x1 = std::min<std::size_t>(x0 + 1, grid.width - 1);
      out.at(y, x) = (1.0 - ty) * ((1.0 - tx) * grid.at(y0, x0) + tx * grid.at(y0, x1)) +
                     ty * ((1.0 - tx) * grid.at(y1, x0) + tx * grid.at(y1, x1));
    }
  }
  return out;
}

inline void bilinear_upsample_adjoint(const Plane& grad_out, std::size_t grid_h, std::size_t grid_w,
                                      Plane& grad_grid_accum) {
  const double sy = static_cast<double>(grid_h) / grad_out.height;
  const double sx = static_cast<double>(grid_w) / grad_out.width;
  for (std::size_t y = 0; y < grad_out.height; ++y) {
    const double gy = (y + 0.5) * sy - 0.5;
    long long y0 = static_cast<long long>(std::floor(gy));
    double ty = gy - y0;
    if (y0 < 0) { y0 = 0; ty = 0.0; }
    if (y0 >= static_cast<long long>(grid_h) - 1) { y0 = grid_h - 1; ty = 0.0; }
    const std::size_t y1 = std::min<std::size_t>(y0 + 1, grid_h - 1);
    for (std::size_t x = 0; x < grad_out.width; ++x) {
      const double gx = (x + 0.5) * sx - 0.5;
      long long x0 = static_cast<long long>(std::floor(gx));
      double tx = gx - x0;
      if (x0 < 0) { x0 = 0; tx = 0.0; }
      if (x0 >= static_cast<long long>(grid_w) - 1) { x0 = grid_w - 1; tx = 0.0; }
      const std::size_t x1 = std::min<std::size_t>(x0 + 1, grid_w - 1);
      const double g = grad_out.at(y, x);
      grad_grid_accum.at(y0, x0) += (1.0 - ty) * (1.0 - tx) * g;
      grad_grid_accum.at(y0, x1) += (1.0 - ty) * tx * g;
      grad_grid_accum.at(y1, x0) += ty * (1.0 - tx) * g;
      grad_grid_accum.at(y1, x1) += ty * tx * g;
    }
  }
}

}  // namespace caia
