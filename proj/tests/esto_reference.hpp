#pragma once

// Straight-line scalar transcription of the edge-aware subspace token
// optimizer, written directly from its algorithm box and kept independent of
// the ops/tape implementation. Used as the equivalence oracle.

#include <cmath>
#include <vector>

namespace esto_ref {

struct Input {
  int N = 0, C = 0, H = 1;
  double rho = 1.0, lambda = 1.0, eps = 1e-6;
  std::vector<double> f;       // [N][C] row-major, one sample
  std::vector<double> gate_w;  // [C]
  double gate_b = 0.0;
};

inline std::vector<double> run(const Input& in) {
  const int N = in.N, C = in.C, H = in.H;
  const int d = C / H;

  // 1) L2-normalize along channels
  std::vector<double> norm(static_cast<size_t>(N * C));
  for (int n = 0; n < N; ++n) {
    double ss = 0;
    for (int c = 0; c < C; ++c) ss += in.f[static_cast<size_t>(n * C + c)] * in.f[static_cast<size_t>(n * C + c)];
    double inv = 1.0 / std::sqrt(ss + 1e-12);
    for (int c = 0; c < C; ++c) norm[static_cast<size_t>(n * C + c)] = in.f[static_cast<size_t>(n * C + c)] * inv;
  }

  // 2..5) per-subspace attention against the unnormalized views, concatenated
  std::vector<double> tstar(static_cast<size_t>(N * C), 0.0);
  for (int h = 0; h < H; ++h) {
    // S[i][j] = dot(Fh_i, Fh_j) / (sqrt(d) * rho), subspace h spans channels [h*d, (h+1)*d)
    std::vector<double> attn(static_cast<size_t>(N * N));
    for (int i = 0; i < N; ++i) {
      double mx = -1e300;
      std::vector<double> row(static_cast<size_t>(N));
      for (int j = 0; j < N; ++j) {
        double dot = 0;
        for (int k = 0; k < d; ++k)
          dot += norm[static_cast<size_t>(i * C + h * d + k)] * norm[static_cast<size_t>(j * C + h * d + k)];
        row[static_cast<size_t>(j)] = dot / (std::sqrt(static_cast<double>(d)) * in.rho);
        mx = std::max(mx, row[static_cast<size_t>(j)]);
      }
      double denom = 0;
      for (int j = 0; j < N; ++j) denom += std::exp(row[static_cast<size_t>(j)] - mx);
      for (int j = 0; j < N; ++j) attn[static_cast<size_t>(i * N + j)] = std::exp(row[static_cast<size_t>(j)] - mx) / denom;
    }
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < d; ++k) {
        double acc = 0;
        for (int j = 0; j < N; ++j)
          acc += attn[static_cast<size_t>(i * N + j)] * in.f[static_cast<size_t>(j * C + h * d + k)];
        tstar[static_cast<size_t>(i * C + h * d + k)] = acc;
      }
  }

  // 6) per-token population variance of the INPUT across channels
  std::vector<double> v(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    double mean = 0;
    for (int c = 0; c < C; ++c) mean += in.f[static_cast<size_t>(n * C + c)];
    mean /= C;
    double acc = 0;
    for (int c = 0; c < C; ++c) {
      double dd = in.f[static_cast<size_t>(n * C + c)] - mean;
      acc += dd * dd;
    }
    v[static_cast<size_t>(n)] = acc / C;
  }

  // 7) edge mask from standardized variance (population std over tokens)
  double vmean = 0;
  for (int n = 0; n < N; ++n) vmean += v[static_cast<size_t>(n)];
  vmean /= N;
  double vvar = 0;
  for (int n = 0; n < N; ++n) vvar += (v[static_cast<size_t>(n)] - vmean) * (v[static_cast<size_t>(n)] - vmean);
  double vstd = std::sqrt(vvar / N);
  std::vector<double> mask(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n)
    mask[static_cast<size_t>(n)] = 1.0 / (1.0 + std::exp(-(v[static_cast<size_t>(n)] - vmean) / (vstd + in.eps)));

  // 9) gate from the global mean over tokens and channels
  std::vector<double> gmean(static_cast<size_t>(C), 0.0);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) gmean[static_cast<size_t>(c)] += in.f[static_cast<size_t>(n * C + c)];
  double z = in.gate_b;
  for (int c = 0; c < C; ++c) z += in.gate_w[static_cast<size_t>(c)] * (gmean[static_cast<size_t>(c)] / N);
  double delta = 1.0 / (1.0 + std::exp(-z));

  // 8,10) modulate, gate, residual
  std::vector<double> out(static_cast<size_t>(N * C));
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double t = (1.0 + in.lambda * mask[static_cast<size_t>(n)]) * tstar[static_cast<size_t>(n * C + c)];
      out[static_cast<size_t>(n * C + c)] = delta * t + in.f[static_cast<size_t>(n * C + c)];
    }
  return out;
}

}  // namespace esto_ref
