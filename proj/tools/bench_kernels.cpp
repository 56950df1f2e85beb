// Timing comparison between the parallel kernels behind the ops layer and
// the single-threaded straight-line reference implementations, plus a
// cross-check that both agree. Thread count comes from WEFT_THREADS or
// --threads.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include "weft/ops.hpp"
#include "weft/reference_kernels.hpp"
#include "weft/rng.hpp"
#include "weft/wavelet.hpp"

using namespace weft;
namespace op = weft::ops;

namespace {

Tensor rnd(Rng& rng, Shape shape) {
  Tensor t(std::move(shape), DType::F32);
  for (i64 i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(-1, 1));
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (i64 i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.at(i) - b.at(i)));
  return m;
}

template <class F>
double time_ms(F&& f, int reps) {
  f();  // warm
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--threads") == 0) set_max_threads(std::atoi(argv[i + 1]));
    if (std::strcmp(argv[i], "--reps") == 0) reps = std::atoi(argv[i + 1]);
  }
  std::printf("threads=%d reps=%d\n", max_threads(), reps);
  std::printf("%-22s %-12s %-12s %-9s %s\n", "kernel", "parallel_ms", "serial_ms", "speedup", "max_diff");

  struct Case {
    std::string name;
    std::function<Tensor()> par;
    std::function<Tensor()> ser;
  };
  Rng rng(7);
  Tensor conv_x = rnd(rng, {4, 32, 32, 32});
  Tensor conv_w = rnd(rng, {32, 32, 3, 3});
  Tensor dw_x = rnd(rng, {4, 32, 64, 64});
  Tensor dw_w = rnd(rng, {32, 1, 7, 7});
  Tensor mm_a = rnd(rng, {256, 64});
  Tensor mm_b = rnd(rng, {64, 5120});
  Tensor sm_x = rnd(rng, {4096, 64});
  Tensor haar_x = rnd(rng, {4, 32, 64, 64});

  std::vector<Case> cases = {
      {"conv2d 3x3 c32", [&] { return op::conv2d(conv_x, conv_w, Tensor()); },
       [&] { return ref::conv2d(conv_x, conv_w); }},
      {"depthwise 7x7", [&] { return op::conv2d(dw_x, dw_w, Tensor(), 1, -1, op::PadMode::Zero, 32); },
       [&] { return ref::conv2d(dw_x, dw_w, 1, -1, 32); }},
      {"matmul 256x64x5120", [&] { return op::matmul(mm_a, mm_b); },
       [&] { return ref::matmul(mm_a, mm_b); }},
      {"softmax 4096x64", [&] { return op::softmax(sm_x, 1); },
       [&] { return ref::softmax_lastaxis(sm_x); }},
      {"haar dwt+idwt 64px",
       [&] {
         Subbands s = haar_dwt2(haar_x);
         return haar_idwt2(s);
       },
       [&] { return ref::haar_idwt2(ref::haar_dwt2(haar_x)); }},
  };

  for (auto& c : cases) {
    Tensor a = c.par();
    Tensor b = c.ser();
    double diff = max_abs_diff(a, b);
    double par_ms = time_ms([&] { (void)c.par(); }, reps);
    double ser_ms = time_ms([&] { (void)c.ser(); }, reps);
    std::printf("%-22s %-12.2f %-12.2f %-9.2f %.2e\n", c.name.c_str(), par_ms, ser_ms, ser_ms / par_ms,
                diff);
    if (diff > 1e-4) {
      std::printf("MISMATCH above tolerance\n");
      return 1;
    }
  }
  return 0;
}
