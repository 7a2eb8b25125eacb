#include "recon/fft.hpp"

#include <fftw3.h>

#include <mutex>

#include "recon/errors.hpp"

namespace recon {

namespace {
// FFTW plan creation is not thread-safe; execution of a private plan is.
std::mutex planner_mutex;
}  // namespace

std::vector<std::complex<double>> fft2(const std::vector<double>& frame, int h, int w) {
  require(static_cast<int>(frame.size()) == h * w, ErrorKind::ShapeError,
          "fft2: frame size mismatch");
  const std::size_t n = frame.size();
  std::vector<std::complex<double>> in(n), out(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = {frame[i], 0.0};

  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    plan = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(in.data()),
                            reinterpret_cast<fftw_complex*>(out.data()),
                            FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    fftw_destroy_plan(plan);
  }
  return out;
}

std::vector<double> ifft2_real(const std::vector<std::complex<double>>& spec, int h, int w) {
  require(static_cast<int>(spec.size()) == h * w, ErrorKind::ShapeError,
          "ifft2_real: spectrum size mismatch");
  const std::size_t n = spec.size();
  std::vector<std::complex<double>> in(spec), out(n);

  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    plan = fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(in.data()),
                            reinterpret_cast<fftw_complex*>(out.data()),
                            FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(planner_mutex);
    fftw_destroy_plan(plan);
  }
  std::vector<double> real(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) real[i] = out[i].real() * scale;
  return real;
}

}  // namespace recon
