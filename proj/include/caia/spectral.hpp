#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "caia/fft.hpp"

namespace caia {

/// C x T multichannel signal with its sampling rate.
struct EegTrial {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate = 0.0;
  std::vector<double> data;  // row-major (channel, time)

  EegTrial() = default;
  EegTrial(std::size_t c, std::size_t t, double fs)
      : channels(c), samples(t), sample_rate(fs), data(c * t, 0.0) {}

  double& at(std::size_t c, std::size_t t) { return data[c * samples + t]; }
  double at(std::size_t c, std::size_t t) const { return data[c * samples + t]; }

  void validate() const {
    if (samples < 8) throw std::invalid_argument("EegTrial: need at least 8 samples");
    if (!(sample_rate > 0.0)) throw std::invalid_argument("EegTrial: sample rate must be positive");
    if (data.size() != channels * samples) throw std::invalid_argument("EegTrial: bad buffer size");
    for (double v : data) {
      if (!std::isfinite(v)) throw std::invalid_argument("EegTrial: non-finite sample");
    }
  }
};

/// Frequency-band layout with learnable edge scales. Band i spans effective
/// edges [E_i, E_{i+1}] where E_i = base_edges[i] * clamp(gamma[i]) for i < n
/// and the top edge is fixed. The outermost bands absorb DC and Nyquist tails
/// so the filter bank always partitions the whole spectrum.
struct BandSpec {
  std::vector<double> base_edges;  // n+1 ascending, Hz
  std::vector<double> gamma;       // n per-band scale factors
  double gamma_min = 0.5;
  double gamma_max = 2.0;
  double crossfade_hz = 1.0;

  std::size_t bands() const { return gamma.size(); }

  static BandSpec canonical(double sample_rate) {
    BandSpec spec;
    spec.base_edges = {0.5, 4.0, 8.0, 13.0, 30.0, std::min(100.0, sample_rate / 2.0)};
    spec.gamma.assign(5, 1.0);
    return spec;
  }

  static const char* band_name(std::size_t i) {
    static const char* names[5] = {"delta", "theta", "alpha", "beta", "gamma"};
    return i < 5 ? names[i] : "band";
  }

  /// Scaled, clamped, Nyquist-clipped edges. Throws if the scaled edges are
  /// no longer strictly ascending.
  std::vector<double> effective_edges(double sample_rate) const {
    if (base_edges.size() != gamma.size() + 1 || gamma.empty()) {
      throw std::invalid_argument("BandSpec: need n+1 edges for n bands");
    }
    const double nyquist = sample_rate / 2.0;
    std::vector<double> edges(base_edges.size());
    for (std::size_t i = 0; i < base_edges.size(); ++i) {
      double e = base_edges[i];
      if (i < gamma.size()) e *= std::clamp(gamma[i], gamma_min, gamma_max);
      edges[i] = std::min(e, nyquist);
    }
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      if (!(edges[i] < edges[i + 1])) {
        throw std::invalid_argument("BandSpec: edges collapse after scaling (band " +
                                    std::to_string(i) + ")");
      }
    }
    if (!(edges.front() > 0.0)) throw std::invalid_argument("BandSpec: lowest edge must be positive");
    return edges;
  }
};

namespace detail {

// Raised-cosine step: 0 below the window, 1 above, C1-smooth in between.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return 0.5 * (1.0 - std::cos(3.14159265358979323846 * t));
}

inline double smooth_step_deriv(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return 0.5 * 3.14159265358979323846 * std::sin(3.14159265358979323846 * t);
}

// Rising crossfade through edge `e` with total width `delta`.
inline double edge_up(double f, double e, double delta) {
  return smooth_step((f - e + 0.5 * delta) / delta);
}

inline double edge_up_ddedge(double f, double e, double delta) {
  return -smooth_step_deriv((f - e + 0.5 * delta) / delta) / delta;
}

/// Per-band weights over the rfft bins. W_i = u_i - u_{i+1} with u_0 == 1 and
/// u_n == 0, so the bands telescope to exactly 1 at every bin.
inline std::vector<double> band_weights(const std::vector<double>& edges, std::size_t n_bands,
                                        std::size_t n_bins, double bin_hz, double delta) {
  std::vector<double> up((n_bands + 1) * n_bins);
  for (std::size_t j = 0; j <= n_bands; ++j) {
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double u;
      if (j == 0) u = 1.0;
      else if (j == n_bands) u = 0.0;
      else u = edge_up(f, edges[j], delta);
      up[j * n_bins + k] = u;
    }
  }
  std::vector<double> w(n_bands * n_bins);
  for (std::size_t i = 0; i < n_bands; ++i) {
    for (std::size_t k = 0; k < n_bins; ++k) {
      w[i * n_bins + k] = up[i * n_bins + k] - up[(i + 1) * n_bins + k];
    }
  }
  return w;
}

}  // namespace detail

struct SubBandSet {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate = 0.0;
  std::vector<std::vector<double>> bands;  // n components, each channels*samples
  std::vector<double> effective_edges;     // n+1
};

/// FFT partition filter bank: per channel, the spectrum is split by
/// raised-cosine crossfades around the effective edges and inverted per band.
/// The components always sum back to the input.
inline SubBandSet decompose_bands(const EegTrial& x, const BandSpec& spec) {
  x.validate();
  SubBandSet out;
  out.channels = x.channels;
  out.samples = x.samples;
  out.sample_rate = x.sample_rate;
  out.effective_edges = spec.effective_edges(x.sample_rate);

  const std::size_t n = spec.bands();
  const std::size_t nb = RealFft::bins(x.samples);
  const double bin_hz = x.sample_rate / static_cast<double>(x.samples);
  const std::vector<double> w =
      detail::band_weights(out.effective_edges, n, nb, bin_hz, spec.crossfade_hz);

  out.bands.assign(n, std::vector<double>(x.channels * x.samples, 0.0));
  std::vector<std::complex<double>> spectrum(nb), filtered(nb);
  for (std::size_t c = 0; c < x.channels; ++c) {
    RealFft::forward(x.data.data() + c * x.samples, spectrum.data(), x.samples);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < nb; ++k) filtered[k] = spectrum[k] * w[i * nb + k];
      RealFft::inverse(filtered.data(), out.bands[i].data() + c * x.samples, x.samples);
    }
  }
  return out;
}

/// Numerically stable temperature softmax (Eq-style selection weights).
inline std::vector<double> selection_weights(const std::vector<double>& logits, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("selection_weights: temperature must be positive");
  if (logits.empty()) throw std::invalid_argument("selection_weights: empty logits");
  double max_logit = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("selection_weights: non-finite logit");
    max_logit = std::max(max_logit, v);
  }
  std::vector<double> m(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    m[i] = std::exp((logits[i] - max_logit) / tau);
    sum += m[i];
  }
  for (double& v : m) v /= sum;
  return m;
}

/// dL/dlogits from dL/dm for the temperature softmax.
inline std::vector<double> selection_weights_backward(const std::vector<double>& m,
                                                      const std::vector<double>& dm, double tau) {
  double dot = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) dot += m[i] * dm[i];
  std::vector<double> dlogits(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) dlogits[i] = m[i] * (dm[i] - dot) / tau;
  return dlogits;
}

/// Natural-log entropy with the 0 log 0 = 0 convention.
inline double selection_entropy(const std::vector<double>& m) {
  double h = 0.0;
  for (double v : m) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

/// dH/dm for the entropy above (only meaningful where m > 0).
inline std::vector<double> selection_entropy_backward(const std::vector<double>& m) {
  std::vector<double> dm(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] > 0.0) dm[i] = -(std::log(m[i]) + 1.0);
  }
  return dm;
}

/// Weighted fusion of sub-bands, rescaled by the band count so uniform
/// weights reproduce the input exactly.
inline EegTrial fuse_bands(const SubBandSet& bands, const std::vector<double>& m) {
  if (m.size() != bands.bands.size()) {
    throw std::invalid_argument("fuse_bands: weight count does not match band count");
  }
  EegTrial out(bands.channels, bands.samples, bands.sample_rate);
  const double scale = static_cast<double>(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double w = scale * m[i];
    const auto& b = bands.bands[i];
    for (std::size_t p = 0; p < out.data.size(); ++p) out.data[p] += w * b[p];
  }
  return out;
}

/// Raised-cosine band-pass. lo <= 0 disables the low edge and hi >= Nyquist
/// disables the high edge, so (0, fs/2) is the identity.
inline EegTrial static_bandpass(const EegTrial& x, double lo, double hi) {
  x.validate();
  const double nyquist = x.sample_rate / 2.0;
  if (!(lo >= 0.0 && lo < hi && hi <= nyquist)) {
    throw std::invalid_argument("static_bandpass: need 0 <= lo < hi <= fs/2");
  }
  const std::size_t nb = RealFft::bins(x.samples);
  const double bin_hz = x.sample_rate / static_cast<double>(x.samples);
  const double delta = 1.0;  // same crossfade width as decompose_bands defaults
  std::vector<double> w(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    const double f = bin_hz * static_cast<double>(k);
    const double up = lo <= 0.0 ? 1.0 : detail::edge_up(f, lo, delta);
    const double down = hi >= nyquist ? 1.0 : 1.0 - detail::edge_up(f, hi, delta);
    w[k] = up * down;
  }
  EegTrial out(x.channels, x.samples, x.sample_rate);
  std::vector<std::complex<double>> spectrum(nb);
  for (std::size_t c = 0; c < x.channels; ++c) {
    RealFft::forward(x.data.data() + c * x.samples, spectrum.data(), x.samples);
    for (std::size_t k = 0; k < nb; ++k) spectrum[k] *= w[k];
    RealFft::inverse(spectrum.data(), out.data.data() + c * x.samples, x.samples);
  }
  return out;
}

/// Appendix-style static filter presets.
inline EegTrial bandpass_low(const EegTrial& x) { return static_bandpass(x, 0.0, 8.0); }
inline EegTrial bandpass_mid(const EegTrial& x) { return static_bandpass(x, 8.0, 40.0); }
inline EegTrial bandpass_high(const EegTrial& x) { return static_bandpass(x, 40.0, x.sample_rate / 2.0); }

/// Smooth squash keeping gamma inside [gamma_min, gamma_max] under gradient
/// updates. raw = 0 does not map to gamma = 1; use gamma_raw_init for that.
inline double gamma_from_raw(double raw, const BandSpec& spec) {
  const double s = 1.0 / (1.0 + std::exp(-raw));
  return spec.gamma_min + (spec.gamma_max - spec.gamma_min) * s;
}

inline double gamma_from_raw_deriv(double raw, const BandSpec& spec) {
  const double s = 1.0 / (1.0 + std::exp(-raw));
  return (spec.gamma_max - spec.gamma_min) * s * (1.0 - s);
}

/// Raw value that squashes to gamma = 1.
inline double gamma_raw_init(const BandSpec& spec) {
  const double s = (1.0 - spec.gamma_min) / (spec.gamma_max - spec.gamma_min);
  return std::log(s / (1.0 - s));
}

/// One-shot screened signal with everything the backward pass needs.
struct ScreenCache {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate = 0.0;
  std::vector<std::complex<double>> spectra;  // channels x bins
  SubBandSet bands;
  std::vector<double> m;
  BandSpec spec;
};

inline EegTrial screen_trial(const EegTrial& x, const BandSpec& spec, const std::vector<double>& m,
                             ScreenCache* cache = nullptr) {
  SubBandSet bands = decompose_bands(x, spec);
  EegTrial out = fuse_bands(bands, m);
  if (cache) {
    cache->channels = x.channels;
    cache->samples = x.samples;
    cache->sample_rate = x.sample_rate;
    cache->spec = spec;
    cache->m = m;
    const std::size_t nb = RealFft::bins(x.samples);
    cache->spectra.resize(x.channels * nb);
    for (std::size_t c = 0; c < x.channels; ++c) {
      RealFft::forward(x.data.data() + c * x.samples, cache->spectra.data() + c * nb, x.samples);
    }
    cache->bands = std::move(bands);
  }
  return out;
}

/// Gradients of a loss through the screened signal with respect to the
/// selection weights m and the effective gammas. The gamma gradient moves the
/// interior crossfades; gamma[0] scales a decomposition-inert outer edge and
/// therefore receives zero.
inline void screen_backward(const ScreenCache& cache, const std::vector<double>& d_out,
                            std::vector<double>& dm_accum, std::vector<double>& dgamma_accum) {
  const std::size_t n = cache.m.size();
  const std::size_t T = cache.samples;
  const std::size_t nb = RealFft::bins(T);
  const double scale = static_cast<double>(n);
  if (d_out.size() != cache.channels * T) {
    throw std::invalid_argument("screen_backward: gradient size mismatch");
  }

  // dL/dm_i = n * <d_out, band_i>
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    const auto& b = cache.bands.bands[i];
    for (std::size_t p = 0; p < d_out.size(); ++p) acc += d_out[p] * b[p];
    dm_accum[i] += scale * acc;
  }

  // Interior edges j = 1..n-1: dH/dE_j(f) = n (m_{j-1} - m_j) s'((f-E_j+d/2)/d)/d,
  // then dL/dgamma_j = base_j * sum_c <d_out_c, irfft(dH/dE_j . x_c)>.
  const auto& edges = cache.bands.effective_edges;
  const double bin_hz = cache.sample_rate / static_cast<double>(T);
  const double delta = cache.spec.crossfade_hz;
  const double nyquist = cache.sample_rate / 2.0;
  std::vector<double> dh(nb);
  std::vector<std::complex<double>> filtered(nb);
  std::vector<double> time(T);
  for (std::size_t j = 1; j < n; ++j) {
    // Clamped gammas and Nyquist-clipped edges have zero derivative.
    const double g = cache.spec.gamma[j];
    if (g < cache.spec.gamma_min || g > cache.spec.gamma_max) continue;
    if (cache.spec.base_edges[j] * g > nyquist) continue;
    bool any = false;
    for (std::size_t k = 0; k < nb; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      // W_j gains u_j and W_{j-1} loses it, so
      // dH/dE_j = n (m_j - m_{j-1}) du_j/dE_j.
      dh[k] = scale * (cache.m[j] - cache.m[j - 1]) * detail::edge_up_ddedge(f, edges[j], delta);
      if (dh[k] != 0.0) any = true;
    }
    if (!any) continue;
    double acc = 0.0;
    for (std::size_t c = 0; c < cache.channels; ++c) {
      const std::complex<double>* spec_c = cache.spectra.data() + c * nb;
      for (std::size_t k = 0; k < nb; ++k) filtered[k] = spec_c[k] * dh[k];
      RealFft::inverse(filtered.data(), time.data(), T);
      const double* g = d_out.data() + c * T;
      for (std::size_t t = 0; t < T; ++t) acc += g[t] * time[t];
    }
    dgamma_accum[j] += acc * cache.spec.base_edges[j];
  }
}

}  // namespace caia
