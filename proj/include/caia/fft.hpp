#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace caia {

/// Real FFT front-end over FFTW with a per-length plan cache. Plans are
/// created once under a lock (FFTW planning is not thread-safe); execution
/// uses the new-array interface and is safe to call concurrently.
class RealFft {
 public:
  /// n reals -> n/2+1 complex bins (unnormalized).
  static void forward(const double* in, std::complex<double>* out, std::size_t n) {
    const Plans& p = plans(n);
    // new-array execute; plans are created with FFTW_UNALIGNED
    fftw_execute_dft_r2c(p.fwd, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
  }

  /// n/2+1 complex bins -> n reals, normalized by 1/n. The input is copied
  /// because FFTW's c2r transform scribbles on its input.
  static void inverse(const std::complex<double>* in, double* out, std::size_t n) {
    const Plans& p = plans(n);
    std::vector<std::complex<double>> scratch(in, in + n / 2 + 1);
    fftw_execute_dft_c2r(p.inv, reinterpret_cast<fftw_complex*>(scratch.data()), out);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] *= inv_n;
  }

  static std::size_t bins(std::size_t n) { return n / 2 + 1; }

 private:
  struct Plans {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
  };

  static const Plans& plans(std::size_t n) {
    if (n < 2) throw std::invalid_argument("RealFft: length must be at least 2");
    static std::mutex mutex;
    static std::map<std::size_t, Plans> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::vector<double> real(n);
    std::vector<std::complex<double>> cplx(n / 2 + 1);
    Plans p;
    p.fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data(),
                                 reinterpret_cast<fftw_complex*>(cplx.data()),
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.inv = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                 reinterpret_cast<fftw_complex*>(cplx.data()), real.data(),
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p.fwd || !p.inv) throw std::runtime_error("RealFft: plan creation failed");
    return cache.emplace(n, p).first->second;
  }
};

}  // namespace caia
