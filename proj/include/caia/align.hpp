#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace caia {

using Embedding = std::vector<double>;

struct SimilarityBatch {
  std::size_t batch = 0;
  std::vector<double> matrix;   // B x B cosine values
  std::vector<double> matched;  // diagonal s_i

  double at(std::size_t i, std::size_t j) const { return matrix[i * batch + j]; }
};

inline SimilarityBatch cosine_similarity_matrix(const std::vector<Embedding>& z,
                                                const std::vector<Embedding>& y) {
  if (z.size() != y.size() || z.empty()) {
    throw std::invalid_argument("cosine_similarity_matrix: batch sizes must match and be nonzero");
  }
  const std::size_t b = z.size();
  const std::size_t d = z[0].size();
  auto norm = [&](const Embedding& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    const double n = std::sqrt(s);
    if (!(n > 0.0)) throw std::invalid_argument("cosine_similarity_matrix: zero-norm vector");
    return n;
  };
  std::vector<double> nz(b), ny(b);
  for (std::size_t i = 0; i < b; ++i) {
    if (z[i].size() != d || y[i].size() != d) {
      throw std::invalid_argument("cosine_similarity_matrix: inconsistent embedding dimension");
    }
    nz[i] = norm(z[i]);
    ny[i] = norm(y[i]);
  }
  SimilarityBatch out;
  out.batch = b;
  out.matrix.resize(b * b);
  out.matched.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += z[i][k] * y[j][k];
      out.matrix[i * b + j] = dot / (nz[i] * ny[j]);
    }
    out.matched[i] = out.matrix[i * b + i];
  }
  return out;
}

/// Accumulates dL/dZ and dL/dY given dL/dsim, with the full quotient-rule
/// Jacobian of the cosine.
inline void cosine_similarity_backward(const std::vector<Embedding>& z,
                                       const std::vector<Embedding>& y, const SimilarityBatch& sim,
                                       const std::vector<double>& dsim,
                                       std::vector<Embedding>& dz_accum,
                                       std::vector<Embedding>& dy_accum) {
  const std::size_t b = z.size();
  const std::size_t d = z[0].size();
  std::vector<double> nz(b), ny(b);
  for (std::size_t i = 0; i < b; ++i) {
    double sz = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      sz += z[i][k] * z[i][k];
      sy += y[i][k] * y[i][k];
    }
    nz[i] = std::sqrt(sz);
    ny[i] = std::sqrt(sy);
  }
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double g = dsim[i * b + j];
      if (g == 0.0) continue;
      const double s = sim.matrix[i * b + j];
      const double inv = 1.0 / (nz[i] * ny[j]);
      for (std::size_t k = 0; k < d; ++k) {
        dz_accum[i][k] += g * (y[j][k] * inv - s * z[i][k] / (nz[i] * nz[i]));
        dy_accum[j][k] += g * (z[i][k] * inv - s * y[j][k] / (ny[j] * ny[j]));
      }
    }
  }
}

struct ClipLossResult {
  double loss = 0.0;
  std::vector<double> dsim;     // dL/dsim, B x B
  double dtemperature = 0.0;    // dL/dt
};

/// Symmetric CLIP-style contrastive loss: cross-entropy against the diagonal
/// over rows and columns of sim / t, averaged over both directions.
inline ClipLossResult clip_contrastive_loss(const SimilarityBatch& sim, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("clip_contrastive_loss: temperature must be positive");
  }
  const std::size_t b = sim.batch;
  const double t = temperature;
  ClipLossResult res;
  res.dsim.assign(b * b, 0.0);

  std::vector<double> logits(b * b);
  for (std::size_t i = 0; i < b * b; ++i) logits[i] = sim.matrix[i] / t;

  double loss = 0.0;
  std::vector<double> dlogits(b * b, 0.0);
  // rows: EEG -> image direction
  for (std::size_t i = 0; i < b; ++i) {
    double mx = logits[i * b];
    for (std::size_t j = 1; j < b; ++j) mx = std::max(mx, logits[i * b + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < b; ++j) sum += std::exp(logits[i * b + j] - mx);
    const double lse = mx + std::log(sum);
    loss += (lse - logits[i * b + i]) / b;
    for (std::size_t j = 0; j < b; ++j) {
      const double p = std::exp(logits[i * b + j] - mx) / sum;
      dlogits[i * b + j] += 0.5 * (p - (i == j ? 1.0 : 0.0)) / b;
    }
  }
  // columns: image -> EEG direction
  for (std::size_t j = 0; j < b; ++j) {
    double mx = logits[j];
    for (std::size_t i = 1; i < b; ++i) mx = std::max(mx, logits[i * b + j]);
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) sum += std::exp(logits[i * b + j] - mx);
    const double lse = mx + std::log(sum);
    loss += (lse - logits[j * b + j]) / b;
    for (std::size_t i = 0; i < b; ++i) {
      const double p = std::exp(logits[i * b + j] - mx) / sum;
      dlogits[i * b + j] += 0.5 * (p - (i == j ? 1.0 : 0.0)) / b;
    }
  }
  res.loss = 0.5 * loss;
  for (std::size_t i = 0; i < b * b; ++i) {
    res.dsim[i] = dlogits[i] / t;
    res.dtemperature -= dlogits[i] * sim.matrix[i] / (t * t);
  }
  return res;
}

struct CalibrationStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double alpha = 0.0;
  double z = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<bool> outlier_mask;
  std::size_t outlier_count = 0;
};

/// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Upper alpha/2 quantile of the standard normal. The three paper-tested
/// levels come from a pinned table; anything else is bisected on the CDF.
inline double normal_quantile_two_sided(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("normal_quantile_two_sided: alpha must be in (0,1)");
  }
  if (std::fabs(alpha - 0.10) < 1e-12) return 1.6449;
  if (std::fabs(alpha - 0.05) < 1e-12) return 1.9600;
  if (std::fabs(alpha - 0.01) < 1e-12) return 2.5758;
  const double target = 1.0 - alpha / 2.0;
  double lo = 0.0, hi = 16.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (normal_cdf(mid) < target) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline CalibrationStats batch_stats(const std::vector<double>& s, double alpha) {
  if (s.size() < 2) throw std::invalid_argument("batch_stats: need at least two similarities");
  CalibrationStats st;
  st.alpha = alpha;
  st.z = normal_quantile_two_sided(alpha);
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= s.size();
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  var /= s.size();
  st.mean = mean;
  st.stddev = std::sqrt(var);
  st.lower = mean - st.z * st.stddev;
  st.upper = mean + st.z * st.stddev;
  st.outlier_mask.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool out = s[i] < st.lower || s[i] > st.upper;
    st.outlier_mask[i] = out;
    if (out) ++st.outlier_count;
  }
  return st;
}

struct BoundaryLossResult {
  double loss = 0.0;
  std::vector<double> ds;  // dL/ds_i
};

/// Hinge pull toward [mean - z sigma, mean + z sigma], averaged over the
/// outlier set; zero when the set is empty. With detach_stats the interval is
/// a constant of the batch (the loss moves outliers, not the interval); the
/// non-detached variant differentiates through mean and sigma too.
inline BoundaryLossResult boundary_loss(const std::vector<double>& s, const CalibrationStats& stats,
                                        bool detach_stats = true) {
  BoundaryLossResult res;
  res.ds.assign(s.size(), 0.0);
  if (stats.outlier_count == 0) return res;
  const double inv_m = 1.0 / static_cast<double>(stats.outlier_count);
  const std::size_t b = s.size();

  double dmean_coeff = 0.0;   // total d(loss)/d(mean)
  double dsigma_coeff = 0.0;  // total d(loss)/d(sigma)
  for (std::size_t i = 0; i < b; ++i) {
    if (!stats.outlier_mask[i]) continue;
    const double left = std::max(stats.lower - s[i], 0.0);
    const double right = std::max(s[i] - stats.upper, 0.0);
    res.loss += (left + right) * inv_m;
    if (left > 0.0) {
      res.ds[i] -= inv_m;
      dmean_coeff += inv_m;
      dsigma_coeff -= stats.z * inv_m;
    }
    if (right > 0.0) {
      res.ds[i] += inv_m;
      dmean_coeff -= inv_m;
      dsigma_coeff -= stats.z * inv_m;
    }
  }
  if (!detach_stats && stats.stddev > 0.0) {
    for (std::size_t j = 0; j < b; ++j) {
      const double dmean_dsj = 1.0 / b;
      const double dsigma_dsj = (s[j] - stats.mean) / (b * stats.stddev);
      res.ds[j] += dmean_coeff * dmean_dsj + dsigma_coeff * dsigma_dsj;
    }
  }
  return res;
}

/// Eq-13 combination. Gradients distribute linearly, so callers scale the
/// component gradients by w1/w2 themselves.
inline double overall_loss(double clip, double bound, double entropy, double w1, double w2) {
  return clip + w1 * bound + w2 * entropy;
}

}  // namespace caia
