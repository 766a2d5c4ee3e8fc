#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "caia/grad_check.hpp"
#include "caia/param_store.hpp"
#include "caia/rng.hpp"
#include "caia/spectral.hpp"

using namespace caia;

namespace {

EegTrial random_trial(std::size_t c, std::size_t t, double fs, std::uint64_t seed) {
  EegTrial x(c, t, fs);
  Rng rng(seed);
  for (double& v : x.data) v = rng.gaussian();
  return x;
}

EegTrial sinusoid_trial(std::size_t c, std::size_t t, double fs, double freq_hz) {
  EegTrial x(c, t, fs);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < t; ++i) {
      x.at(ch, i) = std::sin(2.0 * 3.14159265358979323846 * freq_hz * i / fs);
    }
  }
  return x;
}

double energy(const std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

// FFT energy oracle: energy of x restricted to [lo, hi) Hz.
double band_energy_oracle(const EegTrial& x, double lo, double hi) {
  const std::size_t nb = RealFft::bins(x.samples);
  const double bin_hz = x.sample_rate / x.samples;
  std::vector<std::complex<double>> spec(nb);
  double acc = 0.0;
  for (std::size_t c = 0; c < x.channels; ++c) {
    RealFft::forward(x.data.data() + c * x.samples, spec.data(), x.samples);
    for (std::size_t k = 0; k < nb; ++k) {
      const double f = bin_hz * k;
      if (f >= lo && f < hi) {
        const double mult = (k == 0 || 2 * k == x.samples) ? 1.0 : 2.0;
        acc += mult * std::norm(spec[k]);
      }
    }
  }
  return acc;
}

BandSpec default_spec() { return BandSpec::canonical(250.0); }

}  // namespace

TEST_CASE("sub-bands sum back to the signal for any valid gamma", "[spectral]") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    BandSpec spec = default_spec();
    // Rejection-sample gammas that keep the scaled edges ascending.
    while (true) {
      for (double& g : spec.gamma) g = rng.uniform(0.5, 2.0);
      try {
        spec.effective_edges(250.0);
        break;
      } catch (const std::invalid_argument&) {
      }
    }
    const EegTrial x = random_trial(4, 128, 250.0, 1000 + trial);
    const SubBandSet bands = decompose_bands(x, spec);
    REQUIRE(bands.bands.size() == 5);
    double worst = 0.0;
    for (std::size_t p = 0; p < x.data.size(); ++p) {
      double sum = 0.0;
      for (const auto& b : bands.bands) sum += b[p];
      worst = std::max(worst, std::fabs(sum - x.data[p]));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("a 20 Hz sinusoid lands in the beta band", "[spectral]") {
  const EegTrial x = sinusoid_trial(2, 250, 250.0, 20.0);
  const SubBandSet bands = decompose_bands(x, default_spec());
  std::vector<double> e(5);
  double total = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    e[i] = energy(bands.bands[i]);
    total += e[i];
  }
  CHECK(e[3] / total >= 0.99);
  // Agreement with the direct FFT energy oracle on the same interval.
  const double oracle = band_energy_oracle(x, 13.0, 30.0);
  const double oracle_total = band_energy_oracle(x, 0.0, 126.0);
  CHECK(oracle / oracle_total >= 0.99);
}

TEST_CASE("scaling the 13 Hz edge above 20 Hz moves the energy down a band", "[spectral]") {
  const EegTrial x = sinusoid_trial(1, 250, 250.0, 20.0);
  BandSpec spec = default_spec();
  spec.gamma[3] = 1.7;  // 13 Hz -> 22.1 Hz
  const SubBandSet bands = decompose_bands(x, spec);
  std::vector<double> e(5);
  for (std::size_t i = 0; i < 5; ++i) e[i] = energy(bands.bands[i]);
  const double total = std::accumulate(e.begin(), e.end(), 0.0);
  CHECK(e[2] / total >= 0.99);
  CHECK(e[3] / total <= 0.01);
}

TEST_CASE("collapsed edges after scaling are rejected", "[spectral]") {
  BandSpec spec = default_spec();
  spec.gamma[3] = 2.0;  // 13 -> 26
  spec.gamma[4] = 0.5;  // 30 -> 15, crosses the previous edge
  const EegTrial x = random_trial(1, 64, 250.0, 9);
  CHECK_THROWS_AS(decompose_bands(x, spec), std::invalid_argument);
}

TEST_CASE("selection weights reproduce softmax values", "[spectral]") {
  const auto uniform = selection_weights({0, 0, 0, 0, 0}, 1.0);
  for (double v : uniform) CHECK(v == Catch::Approx(0.2).margin(1e-15));

  const auto pair = selection_weights({1.0, 0.0}, 1.0);
  CHECK(pair[0] == Catch::Approx(0.7311).margin(5e-5));
  CHECK(pair[1] == Catch::Approx(0.2689).margin(5e-5));

  const auto sharp = selection_weights({1.0, 0.0}, 0.1);
  CHECK(sharp[0] > 0.9999);

  CHECK_THROWS_AS(selection_weights({1.0, 0.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(selection_weights({1.0, 0.0}, -1.0), std::invalid_argument);
}

TEST_CASE("softmax laws: simplex, shift invariance, monotonicity", "[spectral]") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> w(5);
    for (double& v : w) v = rng.uniform(-3.0, 3.0);
    const double tau = rng.uniform(0.1, 2.0);
    const auto m = selection_weights(w, tau);

    double sum = 0.0;
    for (double v : m) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);

    std::vector<double> shifted = w;
    const double c = rng.uniform(-5.0, 5.0);
    for (double& v : shifted) v += c;
    const auto ms = selection_weights(shifted, tau);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(ms[i] == Catch::Approx(m[i]).margin(1e-12));

    std::vector<double> bumped = w;
    bumped[2] += 0.25;
    const auto mb = selection_weights(bumped, tau);
    CHECK(mb[2] > m[2]);

    const double h = selection_entropy(m);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(5.0) + 1e-12);
  }
}

TEST_CASE("entropy hits its analytic extremes and hand value", "[spectral]") {
  CHECK(selection_entropy({0.2, 0.2, 0.2, 0.2, 0.2}) == Catch::Approx(std::log(5.0)).margin(1e-12));
  CHECK(selection_entropy({1.0, 0.0}) == 0.0);
  const double hand = -0.75 * std::log(0.75) - 0.25 * std::log(0.25);
  CHECK(selection_entropy({0.75, 0.25}) == Catch::Approx(hand).margin(1e-15));
  CHECK(hand == Catch::Approx(0.5623).margin(5e-5));
}

TEST_CASE("uniform weights make fuse_bands the identity", "[spectral]") {
  const EegTrial x = random_trial(3, 100, 250.0, 21);
  const SubBandSet bands = decompose_bands(x, default_spec());
  const EegTrial fused = fuse_bands(bands, {0.2, 0.2, 0.2, 0.2, 0.2});
  for (std::size_t p = 0; p < x.data.size(); ++p) {
    CHECK(std::fabs(fused.data[p] - x.data[p]) < 1e-9);
  }
  CHECK_THROWS_AS(fuse_bands(bands, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("one-hot weights pick out n times a single band", "[spectral]") {
  const EegTrial x = random_trial(2, 64, 250.0, 22);
  const SubBandSet bands = decompose_bands(x, default_spec());
  const EegTrial fused = fuse_bands(bands, {0.0, 0.0, 0.0, 1.0, 0.0});
  for (std::size_t p = 0; p < x.data.size(); ++p) {
    CHECK(fused.data[p] == Catch::Approx(5.0 * bands.bands[3][p]).margin(1e-12));
  }
}

TEST_CASE("suppressing the noise band raises the carrier-to-noise ratio", "[spectral]") {
  // Beta carrier at 20 Hz plus gamma-band interference at 45 Hz.
  EegTrial x = sinusoid_trial(2, 250, 250.0, 20.0);
  const EegTrial noise = sinusoid_trial(2, 250, 250.0, 45.0);
  for (std::size_t p = 0; p < x.data.size(); ++p) x.data[p] += 0.8 * noise.data[p];

  const SubBandSet bands = decompose_bands(x, default_spec());
  const EegTrial fused = fuse_bands(bands, {0.24, 0.24, 0.24, 0.24, 0.04});

  const double snr_in = band_energy_oracle(x, 13.0, 30.0) / band_energy_oracle(x, 30.0, 126.0);
  const double snr_out =
      band_energy_oracle(fused, 13.0, 30.0) / band_energy_oracle(fused, 30.0, 126.0);
  CHECK(snr_out > snr_in);
}

TEST_CASE("static band-pass presets behave as filters", "[spectral]") {
  // DC-only signal through the high-pass is annihilated.
  EegTrial dc(2, 128, 250.0);
  for (double& v : dc.data) v = 0.7;
  const EegTrial hp = bandpass_high(dc);
  for (double v : hp.data) CHECK(std::fabs(v) < 1e-12);

  // Full-range filter is the identity.
  const EegTrial x = random_trial(2, 100, 250.0, 5);
  const EegTrial idf = static_bandpass(x, 0.0, 125.0);
  for (std::size_t p = 0; p < x.data.size(); ++p) CHECK(std::fabs(idf.data[p] - x.data[p]) < 1e-9);

  // 20 Hz tone passes the mid filter untouched.
  const EegTrial tone = sinusoid_trial(1, 250, 250.0, 20.0);
  const EegTrial mid = bandpass_mid(tone);
  for (std::size_t p = 0; p < tone.data.size(); ++p) {
    CHECK(std::fabs(mid.data[p] - tone.data[p]) < 1e-6);
  }

  CHECK_THROWS_AS(static_bandpass(x, 50.0, 40.0), std::invalid_argument);
  CHECK_THROWS_AS(static_bandpass(x, 0.0, 200.0), std::invalid_argument);
}

TEST_CASE("decompose_bands and static_bandpass are linear", "[spectral]") {
  const EegTrial a = random_trial(2, 96, 250.0, 51);
  const EegTrial b = random_trial(2, 96, 250.0, 52);
  EegTrial combo(2, 96, 250.0);
  for (std::size_t p = 0; p < a.data.size(); ++p) combo.data[p] = 2.0 * a.data[p] - 0.5 * b.data[p];

  const BandSpec spec = default_spec();
  const auto ba = decompose_bands(a, spec);
  const auto bb = decompose_bands(b, spec);
  const auto bc = decompose_bands(combo, spec);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t p = 0; p < combo.data.size(); ++p) {
      CHECK(bc.bands[i][p] ==
            Catch::Approx(2.0 * ba.bands[i][p] - 0.5 * bb.bands[i][p]).margin(1e-10));
    }
  }

  const auto fa = bandpass_mid(a);
  const auto fb = bandpass_mid(b);
  const auto fc = bandpass_mid(combo);
  for (std::size_t p = 0; p < combo.data.size(); ++p) {
    CHECK(fc.data[p] == Catch::Approx(2.0 * fa.data[p] - 0.5 * fb.data[p]).margin(1e-10));
  }
}

TEST_CASE("screen gradients in logits and gamma pass the FD oracle", "[spectral]") {
  const std::size_t C = 2, T = 64;
  const double fs = 250.0;
  const double tau = 1.0;
  const EegTrial x = random_trial(C, T, fs, 77);

  Rng rng(78);
  std::vector<double> probe(C * T);
  for (double& v : probe) v = rng.gaussian();

  BandSpec base_spec = default_spec();
  ParamStore store;
  Tensor logits({5});
  Tensor gamma_raw({5});
  for (std::size_t i = 0; i < 5; ++i) {
    logits[i] = rng.uniform(-0.5, 0.5);
    gamma_raw[i] = gamma_raw_init(base_spec) + rng.uniform(-0.4, 0.4);
  }
  store.add("logits", logits);
  store.add("gamma_raw", gamma_raw);

  auto build_spec = [&](const ParamStore& s) {
    BandSpec spec = base_spec;
    for (std::size_t i = 0; i < 5; ++i) spec.gamma[i] = gamma_from_raw(s.value("gamma_raw")[i], spec);
    return spec;
  };
  auto f = [&](const ParamStore& s) {
    const auto m = selection_weights(s.value("logits").values(), tau);
    const EegTrial y = screen_trial(x, build_spec(s), m);
    double acc = 0.0;
    for (std::size_t p = 0; p < y.data.size(); ++p) acc += probe[p] * y.data[p];
    return acc;
  };

  // Analytic gradients.
  const auto m = selection_weights(store.value("logits").values(), tau);
  ScreenCache cache;
  screen_trial(x, build_spec(store), m, &cache);
  std::vector<double> dm(5, 0.0), dgamma(5, 0.0);
  screen_backward(cache, probe, dm, dgamma);
  store.accumulate_grad("logits", selection_weights_backward(m, dm, tau));
  std::vector<double> dgamma_raw(5);
  for (std::size_t i = 0; i < 5; ++i) {
    dgamma_raw[i] = dgamma[i] * gamma_from_raw_deriv(store.value("gamma_raw")[i], base_spec);
  }
  store.accumulate_grad("gamma_raw", dgamma_raw);

  const auto report = fd_gradient_check(f, store, 1e-4, 1e-4);
  INFO(report.worst_param << "[" << report.worst_index << "] analytic=" << report.worst_analytic
                          << " numeric=" << report.worst_numeric);
  CHECK(report.pass);
}
