#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "caia/encoders.hpp"
#include "caia/image.hpp"
#include "caia/rng.hpp"
#include "caia/spectral.hpp"

namespace caia {

/// Desk-scale surrogate for a zero-shot EEG/image protocol: procedural
/// stimulus images per class, and trials that carry the image's visual
/// embedding as channel amplitudes of a band-limited carrier. The last
/// n_test_classes are held out entirely (unseen classes at test time).
struct SynthConfig {
  std::size_t n_classes = 70;
  std::size_t n_test_classes = 20;
  std::size_t imgs_per_class = 4;   // training split; test classes get one image
  std::size_t trials_per_image = 2;
  std::size_t image_height = 112;
  std::size_t image_width = 112;
  std::size_t channels = 17;
  std::size_t samples = 250;
  double sample_rate = 250.0;
  std::size_t signal_band = 3;  // 0-based index into the canonical bands (beta)
  std::size_t noise_band = 4;   // gamma
  double noise_scale = 0.0;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_classes < 2 || n_test_classes == 0 || n_test_classes >= n_classes) {
      throw std::invalid_argument("SynthConfig: need at least one train and one test class");
    }
    if (imgs_per_class == 0 || trials_per_image == 0) {
      throw std::invalid_argument("SynthConfig: need at least one image and trial");
    }
    const BandSpec spec = BandSpec::canonical(sample_rate);
    if (signal_band >= spec.bands() || noise_band >= spec.bands()) {
      throw std::invalid_argument("SynthConfig: band index out of range");
    }
    if (signal_band == noise_band) {
      throw std::invalid_argument("SynthConfig: signal and noise bands must differ");
    }
    if (outlier_fraction < 0.0 || outlier_fraction >= 1.0) {
      throw std::invalid_argument("SynthConfig: outlier fraction must be in [0,1)");
    }
  }

  std::size_t train_classes() const { return n_classes - n_test_classes; }
};

struct SynthImage {
  std::size_t class_id = 0;
  std::size_t image_id = 0;
  bool test_split = false;
  Image image;
};

struct SynthSample {
  std::size_t class_id = 0;
  std::size_t image_id = 0;
  std::size_t trial_id = 0;
  std::size_t image_index = 0;  // into SynthDataset::images
  bool outlier = false;
  EegTrial trial;
};

struct SynthDataset {
  SynthConfig cfg;
  std::vector<SynthImage> images;
  std::vector<SynthSample> train;
  std::vector<SynthSample> test;
  std::vector<double> mixing;  // channels x embed_dim, shared across classes
};

namespace detail {

inline Image render_class_image(const SynthConfig& cfg, std::size_t class_id,
                                std::size_t image_id) {
  Rng class_rng(Rng::derive(cfg.seed, "class", class_id));
  const std::size_t h = cfg.image_height, w = cfg.image_width;
  const double min_side = static_cast<double>(std::min(h, w));

  struct Blob {
    double cy, cx, radius, color[3];
  };
  // Dark backgrounds and a variable blob count keep class prototypes well
  // separated in embedding space (bright shared backgrounds would dominate
  // every inner product).
  double bg[3];
  for (double& v : bg) v = class_rng.uniform(0.02, 0.10);
  std::vector<Blob> blobs(4 + class_rng.uniform_index(4));
  for (Blob& b : blobs) {
    b.cy = class_rng.uniform(0.10, 0.90) * h;
    b.cx = class_rng.uniform(0.10, 0.90) * w;
    b.radius = class_rng.uniform(0.05, 0.14) * min_side;
    for (double& v : b.color) v = class_rng.uniform(0.0, 1.0);
  }

  // Per-instance jitter keeps images within a class similar but distinct.
  Rng img_rng(Rng::derive(cfg.seed, "image", class_id * 10000 + image_id));
  for (Blob& b : blobs) {
    b.cy += img_rng.uniform(-3.0, 3.0);
    b.cx += img_rng.uniform(-3.0, 3.0);
    b.radius *= img_rng.uniform(0.9, 1.1);
    for (double& v : b.color) {
      v = std::clamp(v + img_rng.uniform(-0.05, 0.05), 0.0, 1.0);
    }
  }

  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double px[3] = {bg[0], bg[1], bg[2]};
      for (const Blob& b : blobs) {
        const double dy = y - b.cy, dx = x - b.cx;
        const double alpha = std::exp(-0.5 * (dy * dy + dx * dx) / (b.radius * b.radius));
        for (std::size_t c = 0; c < 3; ++c) px[c] += alpha * (b.color[c] - px[c]);
      }
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = px[c];
    }
  }
  return img;
}

inline double band_carrier_hz(const SynthConfig& cfg, std::size_t band) {
  const BandSpec spec = BandSpec::canonical(cfg.sample_rate);
  const auto edges = spec.effective_edges(cfg.sample_rate);
  const double center = 0.5 * (edges[band] + edges[band + 1]);
  // Snap to an exact FFT bin so the carrier has no spectral leakage.
  const double bin_hz = cfg.sample_rate / static_cast<double>(cfg.samples);
  return std::round(center / bin_hz) * bin_hz;
}

inline EegTrial make_trial(const SynthConfig& cfg, const std::vector<double>& mixing,
                           const Embedding& visual, std::uint64_t trial_key, bool* outlier_out) {
  Rng rng(Rng::derive(cfg.seed, "trial", trial_key));
  const std::size_t C = cfg.channels, T = cfg.samples;
  EegTrial x(C, T, cfg.sample_rate);

  const double carrier_hz = band_carrier_hz(cfg, cfg.signal_band);
  const double amp = 0.5;
  // The mixing matrix maps the embedding to in-phase and quadrature
  // amplitudes per channel, so the trial modulates both amplitude and phase
  // of the carrier; a plain amplitude code through C channels alone loses
  // too much of the embedding for retrieval to be well-posed.
  std::vector<double> a(2 * C, 0.0);
  for (std::size_t c = 0; c < 2 * C; ++c) {
    for (std::size_t k = 0; k < visual.size(); ++k) a[c] += mixing[c * visual.size() + k] * visual[k];
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      const double phase = 2.0 * 3.14159265358979323846 * carrier_hz * t / cfg.sample_rate;
      x.at(c, t) = amp * (a[c] * std::sin(phase) + a[C + c] * std::cos(phase));
    }
  }

  const bool outlier = rng.uniform() < cfg.outlier_fraction;
  if (outlier) {
    // Attention-drift stand-in: the stimulus-locked component is gone; what
    // remains is ongoing rhythm-band noise at a comparable amplitude.
    double rms = 0.0;
    for (double v : x.data) rms += v * v;
    rms = std::sqrt(rms / x.data.size());
    if (rms <= 0.0) rms = amp;
    EegTrial white(C, T, cfg.sample_rate);
    for (double& v : white.data) v = rng.gaussian();
    const BandSpec spec = BandSpec::canonical(cfg.sample_rate);
    const auto edges = spec.effective_edges(cfg.sample_rate);
    const EegTrial shaped =
        static_bandpass(white, edges[cfg.signal_band],
                        std::min(edges[cfg.signal_band + 1], cfg.sample_rate / 2.0));
    double shaped_rms = 0.0;
    for (double v : shaped.data) shaped_rms += v * v;
    shaped_rms = std::sqrt(shaped_rms / shaped.data.size());
    for (std::size_t p = 0; p < x.data.size(); ++p) {
      x.data[p] = rms * shaped.data[p] / (shaped_rms > 0.0 ? shaped_rms : 1.0);
    }
  } else if (cfg.noise_scale > 0.0) {
    EegTrial white(C, T, cfg.sample_rate);
    for (double& v : white.data) v = rng.gaussian();
    const BandSpec spec = BandSpec::canonical(cfg.sample_rate);
    const auto edges = spec.effective_edges(cfg.sample_rate);
    const EegTrial shaped =
        static_bandpass(white, edges[cfg.noise_band],
                        std::min(edges[cfg.noise_band + 1], cfg.sample_rate / 2.0));
    for (std::size_t p = 0; p < x.data.size(); ++p) x.data[p] += cfg.noise_scale * shaped.data[p];
  } else {
    // Keep the RNG stream aligned across noise settings.
    rng.gaussian();
  }
  if (outlier_out) *outlier_out = outlier;
  return x;
}

}  // namespace detail

/// Deterministic dataset generation. The same seed reproduces the dataset
/// bit for bit; test classes never appear in the training split.
inline SynthDataset synth_dataset(const SynthConfig& cfg, const FrozenVisualEncoder& visual) {
  cfg.validate();
  SynthDataset ds;
  ds.cfg = cfg;

  const std::size_t d = visual.embed_dim();
  ds.mixing.resize(2 * cfg.channels * d);
  Rng mix_rng(Rng::derive(cfg.seed, "mixing"));
  for (double& v : ds.mixing) v = mix_rng.gaussian();

  auto add_samples = [&](std::vector<SynthSample>& out, std::size_t class_id, std::size_t image_id,
                         std::size_t image_index) {
    const Embedding y = visual.encode(ds.images[image_index].image);
    for (std::size_t t = 0; t < cfg.trials_per_image; ++t) {
      SynthSample s;
      s.class_id = class_id;
      s.image_id = image_id;
      s.trial_id = t;
      s.image_index = image_index;
      const std::uint64_t key = (class_id * 100000 + image_id) * 1000 + t;
      s.trial = detail::make_trial(cfg, ds.mixing, y, key, &s.outlier);
      out.push_back(std::move(s));
    }
  };

  for (std::size_t k = 0; k < cfg.train_classes(); ++k) {
    for (std::size_t i = 0; i < cfg.imgs_per_class; ++i) {
      SynthImage si;
      si.class_id = k;
      si.image_id = i;
      si.test_split = false;
      si.image = detail::render_class_image(cfg, k, i);
      ds.images.push_back(std::move(si));
      add_samples(ds.train, k, i, ds.images.size() - 1);
    }
  }
  for (std::size_t k = cfg.train_classes(); k < cfg.n_classes; ++k) {
    SynthImage si;
    si.class_id = k;
    si.image_id = 0;
    si.test_split = true;
    si.image = detail::render_class_image(cfg, k, 0);
    ds.images.push_back(std::move(si));
    add_samples(ds.test, k, 0, ds.images.size() - 1);
  }
  return ds;
}

}  // namespace caia
