#include "stx/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace stx::fft {
namespace {

// FFTW planning is not thread-safe; execution on a cached plan is.
// FFTW_UNALIGNED keeps the chosen codelets independent of buffer alignment,
// so results are bit-identical run to run.
struct PlanCache {
  std::mutex mu;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans;

  fftw_plan get(std::size_t n, int sign) {
    std::lock_guard lock(mu);
    auto key = std::make_pair(n, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    auto* buf = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    plans.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [_, p] : plans) fftw_destroy_plan(p);
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

void run(std::span<cplx> data, int sign) {
  if (data.empty()) return;
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(cache().get(data.size(), sign), ptr, ptr);
}

}  // namespace

void forward(std::span<cplx> data) { run(data, FFTW_FORWARD); }

void inverse(std::span<cplx> data) {
  run(data, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= scale;
}

}  // namespace stx::fft
