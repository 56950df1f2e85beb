#include "doctest.h"
#include "esto_reference.hpp"
#include "test_util.hpp"
#include "weft/adapter.hpp"
#include "weft/gradcheck.hpp"

using namespace weft;
using namespace weft::testutil;
namespace op = weft::ops;

namespace {

struct BundleFixture {
  TokenBundle bundle;
  Tensor f8, f16, f32;
};

BundleFixture make_bundle(Rng& rng, i64 B, i64 C, i64 h8, DType dt = DType::F64) {
  BundleFixture fx;
  fx.f8 = rand_tensor(rng, {B, C, h8, h8}, dt);
  fx.f16 = rand_tensor(rng, {B, C, h8 / 2, h8 / 2}, dt);
  fx.f32 = rand_tensor(rng, {B, C, h8 / 4, h8 / 4}, dt);
  fx.bundle = assemble_tokens(fx.f8, fx.f16, fx.f32);
  return fx;
}

}  // namespace

TEST_CASE("token bundle: size arithmetic, additive previous, lossless round-trip") {
  Rng rng(1);
  auto fx = make_bundle(rng, 2, 4, 16);  // image 128: scales 16/8/4
  CHECK(fx.bundle.tokens.shape() == Shape{2, 256 + 64 + 16, 4});
  CHECK(fx.bundle.expected_tokens() == 336);

  // zero previous bundle changes nothing
  TokenBundle zero = fx.bundle;
  zero.tokens = Tensor(fx.bundle.tokens.shape(), DType::F64);
  TokenBundle with_prev = assemble_tokens(fx.f8, fx.f16, fx.f32, &zero);
  CHECK(max_abs_diff(with_prev.tokens, fx.bundle.tokens) == 0.0);

  auto maps = fx.bundle.to_maps();
  CHECK(max_abs_diff(maps[0], fx.f8) == 0.0);
  CHECK(max_abs_diff(maps[1], fx.f16) == 0.0);
  CHECK(max_abs_diff(maps[2], fx.f32) == 0.0);

  TokenBundle rebuilt = assemble_tokens(maps[0], maps[1], maps[2]);
  CHECK(max_abs_diff(rebuilt.tokens, fx.bundle.tokens) == 0.0);

  Tensor bad = rand_tensor(rng, {2, 4, 5, 5});
  CHECK_THROWS_WITH_AS(assemble_tokens(fx.f8, bad, fx.f32), doctest::Contains("/16"), Error);
}

TEST_CASE("esto matches the straight-line transcription on 50 random instances") {
  for (u64 seed = 0; seed < 50; ++seed) {
    Rng rng(seed * 7 + 1);
    i64 N = rng.uniform_int(1, 6);
    i64 H = rng.uniform_int(1, 2) == 1 ? 2 : 4;
    i64 d = rng.uniform_int(1, 2);
    i64 C = H * d;  // C <= 8
    EstoParams p;
    p.subspaces = H;
    p.rho = rng.uniform(0.5, 2.0);
    p.lambda = rng.uniform(0.0, 2.0);

    ParamRegistry reg;
    Esto esto("e", C, p, Rng(seed + 99), DType::F64, reg);
    Tensor tokens = rand_tensor(rng, {1, N, C});
    Tensor out = esto.forward(tokens);

    esto_ref::Input in;
    in.N = static_cast<int>(N);
    in.C = static_cast<int>(C);
    in.H = static_cast<int>(H);
    in.rho = p.rho;
    in.lambda = p.lambda;
    in.eps = p.eps;
    for (i64 i = 0; i < N * C; ++i) in.f.push_back(tokens.at(i));
    Tensor& gw = reg.find("e.gate.w")->tensor;
    for (i64 c = 0; c < C; ++c) in.gate_w.push_back(gw.at(c));
    in.gate_b = reg.find("e.gate.b")->tensor.at(0);

    auto expect = esto_ref::run(in);
    double worst = 0;
    for (i64 i = 0; i < N * C; ++i) worst = std::max(worst, std::fabs(out.at(i) - expect[static_cast<size_t>(i)]));
    CAPTURE(seed);
    CHECK_LE(worst, 1e-5);
  }
}

TEST_CASE("esto single token with lambda=0 and zero gate is 1.5x identity") {
  EstoParams p;
  p.lambda = 0.0;
  ParamRegistry reg;
  Esto esto("e", 4, p, Rng(3), DType::F64, reg);
  Tensor& gw = reg.find("e.gate.w")->tensor;
  for (i64 i = 0; i < gw.numel(); ++i) gw.set(i, 0.0);
  Rng rng(4);
  Tensor x = rand_tensor(rng, {1, 1, 4});
  Tensor out = esto.forward(x);
  for (i64 i = 0; i < 4; ++i) CHECK(out.at(i) == doctest::Approx(1.5 * x.at(i)).epsilon(1e-9));
}

TEST_CASE("esto is token-permutation equivariant and masks stay in (0,1)") {
  ParamRegistry reg;
  Esto esto("e", 8, {}, Rng(5), DType::F64, reg);
  Rng rng(6);
  i64 N = 5, C = 8;
  Tensor x = rand_tensor(rng, {1, N, C});
  Tensor out = esto.forward(x);

  std::vector<i64> perm = {3, 1, 4, 0, 2};
  Tensor xp(Shape{1, N, C}, DType::F64);
  for (i64 n = 0; n < N; ++n)
    for (i64 c = 0; c < C; ++c) xp.set(n * C + c, x.at(perm[static_cast<size_t>(n)] * C + c));
  Tensor outp = esto.forward(xp);
  for (i64 n = 0; n < N; ++n)
    for (i64 c = 0; c < C; ++c)
      CHECK(std::fabs(outp.at(n * C + c) - out.at(perm[static_cast<size_t>(n)] * C + c)) <= 1e-6);

  Tensor mask = esto.edge_mask(x);
  for (i64 i = 0; i < mask.numel(); ++i) {
    CHECK(mask.at(i) > 0.0);
    CHECK(mask.at(i) < 1.0);
  }
}

TEST_CASE("esto rejects empty tokens and indivisible subspaces") {
  ParamRegistry reg;
  EstoParams p;
  p.subspaces = 3;
  CHECK_THROWS_AS(Esto("e", 8, p, Rng(1), DType::F64, reg), Error);
  ParamRegistry reg2;
  Esto ok("e", 8, {}, Rng(1), DType::F64, reg2);
  Tensor bad(Shape{1, 3});
  CHECK_THROWS_AS(ok.forward(bad), Error);
}

TEST_CASE("deform_inject: collapsed attention averages the reference samples") {
  // C == D == 4 so the value/output projections can be identities.
  i64 D = 4, P = 4;
  ParamRegistry reg;
  DeformInject deform("d", D, D, P, Rng(7), DType::F64, reg);
  // identity value and output projections; offsets keep their zero init and
  // the attention logits are cleared so the weights collapse to uniform.
  for (const char* name : {"d.value.w", "d.out.w"}) {
    Tensor& w = reg.find(name)->tensor;
    for (i64 i = 0; i < w.numel(); ++i) w.set(i, 0.0);
    for (i64 i = 0; i < D; ++i) w.set(i * D + i, 1.0);
  }
  Tensor& aw = reg.find("d.attn.w")->tensor;
  for (i64 i = 0; i < aw.numel(); ++i) aw.set(i, 0.0);

  Rng rng(8);
  // One query on a 1x1 frozen grid; maps 4x4 / 2x2 / 1x1.
  Tensor frozen = rand_tensor(rng, {1, 1, D});
  Tensor f8 = rand_tensor(rng, {1, D, 4, 4});
  Tensor f16 = rand_tensor(rng, {1, D, 2, 2});
  Tensor f32 = rand_tensor(rng, {1, D, 1, 1});
  TokenBundle bundle = assemble_tokens(f8, f16, f32);
  Tensor out = deform.forward(frozen, 1, 1, bundle);
  CHECK(out.shape() == Shape{1, 1, D});

  // Expected: mean over the three scales of the value sampled at (0.5, 0.5)
  // of the layer-normalized maps.
  Tensor v = op::layer_norm(bundle.tokens, Tensor::full({D}, 1.0, DType::F64), Tensor(Shape{D}, DType::F64));
  TokenBundle vb = bundle;
  vb.tokens = v;
  auto vmaps = vb.to_maps();
  Tensor expect(Shape{D}, DType::F64);
  for (size_t s = 0; s < 3; ++s) {
    Tensor coords = Tensor::from({1, 1, 1, 2}, {0.5, 0.5}, DType::F64);
    Tensor smp = op::sample_bilinear(vmaps[s], coords);  // [1,1,1,D]
    for (i64 c = 0; c < D; ++c) expect.set(c, expect.at(c) + smp.at(c) / 3.0);
  }
  for (i64 c = 0; c < D; ++c) CHECK(out.at(c) == doctest::Approx(expect.at(c)).epsilon(1e-9));
}

TEST_CASE("deform_inject: all-zero trainable maps give zero output with zero biases") {
  i64 D = 6, C = 4;
  ParamRegistry reg;
  DeformInject deform("d", D, C, 4, Rng(9), DType::F64, reg);
  Rng rng(10);
  Tensor frozen = rand_tensor(rng, {2, 4, D});
  Tensor z8(Shape{2, C, 4, 4}, DType::F64), z16(Shape{2, C, 2, 2}, DType::F64), z32(Shape{2, C, 1, 1}, DType::F64);
  TokenBundle bundle = assemble_tokens(z8, z16, z32);
  Tensor out = deform.forward(frozen, 2, 2, bundle);
  // LN of zeros is zeros (beta = 0), value/out biases are zero.
  for (i64 i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("deform_inject offset gradients pass finite differences") {
  i64 D = 4, C = 3, P = 2;
  ParamRegistry reg;
  DeformInject deform("d", D, C, P, Rng(11), DType::F64, reg);
  // Move offsets off zero so samples land between pixels but away from the
  // clamp boundary; perturb the offset weight matrix.
  Parameter* ow = reg.find("d.offset.w");
  Rng orng(12);
  for (i64 i = 0; i < ow->tensor.numel(); ++i) ow->tensor.set(i, orng.uniform(-0.05, 0.05));

  Rng rng(13);
  Tensor frozen = rand_tensor(rng, {1, 4, D});
  auto fx = make_bundle(rng, 1, C, 4);
  auto rep = finite_difference_check(
      [&](const Tensor& w) {
        // evaluate with the candidate weight swapped in
        Tensor saved = ow->tensor;
        ow->tensor = w;
        Tensor out = deform.forward(frozen, 2, 2, fx.bundle);
        ow->tensor = saved;
        return op::sum_all(op::mul(out, out));
      },
      ow->tensor, 1e-5, 1e-5);
  CHECK_MESSAGE(rep.pass, "max_rel_err=" << rep.max_rel_err);
}

TEST_CASE("see: constant maps kill the Laplacian branch exactly") {
  i64 C = 4;
  ParamRegistry reg;
  See see("s", C, Rng(14), DType::F64, reg);
  // With only the Laplacian branch weighted (logits heavily biased), a
  // constant input map must pass through unchanged up to the mso branch
  // being suppressed to ~0 weight... instead check the branch directly:
  // constant bundle -> merged output equals input + w_a*max + w_m*mso, and
  // the Laplacian contribution is exactly zero. Easiest probe: compare the
  // full SEE output between two constant inputs whose Laplacian would differ
  // if padding were wrong.
  Tensor c8 = Tensor::full({1, C, 4, 4}, 3.25, DType::F64);
  Tensor c16 = Tensor::full({1, C, 2, 2}, 3.25, DType::F64);
  Tensor c32 = Tensor::full({1, C, 1, 1}, 3.25, DType::F64);
  TokenBundle bundle = assemble_tokens(c8, c16, c32);

  // Direct check of the fixed stencil under reflection padding.
  Tensor k(Shape{C, 1, 3, 3}, DType::F64);
  const double kv[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  for (i64 c = 0; c < C; ++c)
    for (i64 i = 0; i < 9; ++i) k.set(c * 9 + i, kv[i]);
  Tensor lap = op::conv2d(c8, k, Tensor(), 1, 1, op::PadMode::Reflect, static_cast<int>(C));
  for (i64 i = 0; i < lap.numel(); ++i) CHECK(lap.at(i) == 0.0);

  (void)see.forward(bundle);  // shape sanity under constants
}

TEST_CASE("see: single centered spike reproduces the stencil; global max broadcasts") {
  // 3x3 map with one centered 1 under edge-repeating reflection padding.
  Tensor x(Shape{1, 1, 3, 3}, DType::F64);
  x.set(4, 1.0);
  Tensor k(Shape{1, 1, 3, 3}, DType::F64);
  const double kv[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
  for (i64 i = 0; i < 9; ++i) k.set(i, kv[i]);
  Tensor lap = op::conv2d(x, k, Tensor(), 1, 1, op::PadMode::Reflect, 1);
  for (i64 i = 0; i < 9; ++i) CHECK(lap.at(i) == doctest::Approx(kv[i]));

  Tensor gmax = op::max(op::max(x, 3, true), 2, true);
  Tensor ones = op::add(op::mul(gmax, Tensor::full({1, 1, 3, 3}, 1.0, DType::F64)), Tensor(Shape{1, 1, 3, 3}, DType::F64));
  for (i64 i = 0; i < 9; ++i) CHECK(ones.at(i) == 1.0);
}

TEST_CASE("see merge weights sum to one and respond to logits") {
  ParamRegistry reg;
  See see("s", 4, Rng(15), DType::F64, reg);
  Tensor w = see.merge_weights();
  CHECK(w.numel() == 3);
  CHECK(w.at(0) + w.at(1) + w.at(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.at(0) == doctest::Approx(1.0 / 3).epsilon(1e-12));  // zero logits

  reg.find("s.merge")->tensor.set(1, 2.0);
  Tensor w2 = see.merge_weights();
  CHECK(w2.at(0) + w2.at(1) + w2.at(2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w2.at(1) > w2.at(0));
}

TEST_CASE("full adapter stage: shape contract and end-to-end gradcheck") {
  i64 D = 8, C = 4, P = 2;
  ParamRegistry reg;
  EstoParams ep;
  ep.subspaces = 2;
  EcAdapterStage stage("ec.stage1", D, C, P, ep, Rng(16), DType::F64, reg);
  Rng rng(17);
  // 32x32 image geometry: frozen 2x2 grid, maps 4/2/1.
  Tensor frozen = rand_tensor(rng, {1, 4, D});
  auto fx = make_bundle(rng, 1, C, 4);

  auto out = stage.forward(frozen, 2, 2, fx.bundle);
  CHECK(out.refined_frozen.shape() == frozen.shape());
  CHECK(out.next_bundle.tokens.shape() == fx.bundle.tokens.shape());

  auto rep = finite_difference_check(
      [&](const Tensor& t) {
        TokenBundle b = fx.bundle;
        b.tokens = t;
        auto o = stage.forward(frozen, 2, 2, b);
        return op::add(op::sum_all(op::mul(o.refined_frozen, o.refined_frozen)),
                       op::sum_all(op::mul(o.next_bundle.tokens, o.next_bundle.tokens)));
      },
      fx.bundle.tokens, 1e-5, 1e-3);
  CHECK_MESSAGE(rep.pass, "max_rel_err=" << rep.max_rel_err);
}
