#include "doctest.h"
#include "test_util.hpp"
#include "weft/gradcheck.hpp"
#include "weft/loss.hpp"
#include "weft/metrics.hpp"
#include "weft/optimizer.hpp"
#include "weft/train.hpp"
#include "weft/wten.hpp"

#include <filesystem>
#include <fstream>

using namespace weft;
using namespace weft::testutil;
namespace op = weft::ops;

namespace {

// Independent scalar recomputation of both loss terms.
std::pair<double, double> loss_by_hand(const Tensor& z, const Tensor& y, double smooth) {
  double bce = 0, inter = 0, psum = 0, ysum = 0;
  for (i64 i = 0; i < z.numel(); ++i) {
    double zi = z.at(i), yi = y.at(i);
    double p = 1.0 / (1.0 + std::exp(-zi));
    bce += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::fabs(zi)));
    inter += p * yi;
    psum += p;
    ysum += yi;
  }
  bce /= static_cast<double>(z.numel());
  double dice = 1.0 - (2 * inter + smooth) / (psum + ysum + smooth);
  return {bce, dice};
}

Tensor random_mask(Rng& rng, Shape shape) {
  Tensor m(std::move(shape), DType::F64);
  for (i64 i = 0; i < m.numel(); ++i) m.set(i, rng.uniform() < 0.4 ? 1.0 : 0.0);
  return m;
}

}  // namespace

TEST_CASE("zero logits give BCE = ln 2 regardless of mask") {
  Rng rng(1);
  Tensor z(Shape{2, 1, 4, 4}, DType::F64);
  Tensor y = random_mask(rng, {2, 1, 4, 4});
  auto parts = composite_loss(z, y, {});
  CHECK(parts.bce.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("confident correct predictions drive the dice loss to ~0") {
  Rng rng(2);
  Tensor y = random_mask(rng, {1, 1, 8, 8});
  Tensor z(Shape{1, 1, 8, 8}, DType::F64);
  for (i64 i = 0; i < z.numel(); ++i) z.set(i, y.at(i) > 0.5 ? 20.0 : -20.0);
  auto parts = composite_loss(z, y, {});
  CHECK(parts.dice.item() <= 1e-4);
  CHECK(parts.total.item() >= 0.0);
}

TEST_CASE("composite loss is exactly 5*BCE + 2*Dice against a scalar recomputation") {
  for (u64 seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Tensor z = rand_tensor(rng, {1, 1, 4, 4}, DType::F64, -4, 4);
    Tensor y = random_mask(rng, {1, 1, 4, 4});
    LossConfig cfg;
    auto parts = composite_loss(z, y, cfg);
    auto [bce, dice] = loss_by_hand(z, y, cfg.smooth);
    CHECK(parts.bce.item() == doctest::Approx(bce).epsilon(1e-9));
    CHECK(parts.dice.item() == doctest::Approx(dice).epsilon(1e-9));
    CHECK(parts.total.item() == doctest::Approx(5.0 * bce + 2.0 * dice).epsilon(1e-9));
    CHECK(parts.total.item() >= 0.0);
  }
}

TEST_CASE("non-binary masks are rejected") {
  Tensor z(Shape{1, 1, 2, 2}, DType::F64);
  Tensor y = Tensor::from({1, 1, 2, 2}, {0, 1, 0.5, 1}, DType::F64);
  CHECK_THROWS_WITH_AS(composite_loss(z, y, {}), doctest::Contains("binary"), Error);
}

TEST_CASE("dice loss decreases as overlap grows on nested masks") {
  // growing prediction sets inside a fixed mask
  Tensor y(Shape{1, 1, 4, 4}, DType::F64);
  for (i64 i = 0; i < 8; ++i) y.set(i, 1.0);
  double prev = 2.0;
  for (int k = 1; k <= 8; ++k) {
    Tensor z = Tensor::full({1, 1, 4, 4}, -20.0, DType::F64);
    for (i64 i = 0; i < k; ++i) z.set(i, 20.0);
    auto parts = composite_loss(z, y, {});
    CHECK(parts.dice.item() < prev);
    prev = parts.dice.item();
  }
}

TEST_CASE("loss gradient flows and matches finite differences") {
  Rng rng(3);
  Tensor z = rand_tensor(rng, {1, 1, 3, 3}, DType::F64, -2, 2);
  Tensor y = random_mask(rng, {1, 1, 3, 3});
  auto rep = finite_difference_check(
      [&](const Tensor& t) { return composite_loss(t, y, {}).total; }, z, 1e-5, 1e-6);
  CHECK_MESSAGE(rep.pass, "max_rel_err=" << rep.max_rel_err);
}

TEST_CASE("adamw: zero gradient leaves only the decay term") {
  Parameter p;
  p.name = "w";
  p.tensor = Tensor::from({2}, {1.0, -2.0}, DType::F64);
  p.grad = Tensor(Shape{2}, DType::F64);  // zeros
  ParamRegistry reg;
  reg.add(&p);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.05;
  AdamW opt(cfg);
  opt.step(reg);
  CHECK(p.tensor.at(0) == doctest::Approx(1.0 * (1 - 0.1 * 0.05)).epsilon(1e-12));
  CHECK(p.tensor.at(1) == doctest::Approx(-2.0 * (1 - 0.1 * 0.05)).epsilon(1e-12));
}

TEST_CASE("adamw: one step on x^2 descends; frozen gradient is an error") {
  Parameter p;
  p.name = "x";
  p.tensor = Tensor::scalar(1.0, DType::F64);
  p.grad = Tensor::scalar(2.0, DType::F64);
  ParamRegistry reg;
  reg.add(&p);
  AdamW opt({});
  opt.step(reg);
  CHECK(p.tensor.at(0) < 1.0);

  Parameter f;
  f.name = "frozen";
  f.tensor = Tensor::scalar(1.0, DType::F64);
  f.frozen = true;
  f.grad = Tensor::scalar(1.0, DType::F64);
  ParamRegistry reg2;
  reg2.add(&f);
  AdamW opt2({});
  CHECK_THROWS_WITH_AS(opt2.step(reg2), doctest::Contains("frozen"), Error);
}

TEST_CASE("adamw: three steps on a quadratic match the scalar oracle") {
  // Frozen from an independent scalar implementation:
  // lr=0.1, wd=0.01, beta1=0.9, beta2=0.999, eps=1e-8, f(x)=x^2 from x=1.
  const double expect[3] = {0.8990000005, 0.7985190271685216, 0.6989111831582323};
  Parameter p;
  p.name = "x";
  p.tensor = Tensor::scalar(1.0, DType::F64);
  ParamRegistry reg;
  reg.add(&p);
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt(cfg);
  for (int t = 0; t < 3; ++t) {
    p.grad = Tensor::scalar(2.0 * p.tensor.at(0), DType::F64);
    opt.step(reg);
    CHECK(p.tensor.at(0) == doctest::Approx(expect[t]).epsilon(1e-10));
  }
}

TEST_CASE("metrics: exact match, total disagreement, half overlap") {
  Tensor perfect(Shape{1, 1, 4, 4}, DType::F32);
  Tensor mask(Shape{1, 1, 4, 4}, DType::F32);
  for (i64 i = 0; i < 8; ++i) {
    perfect.set(i, 1.0);
    mask.set(i, 1.0);
  }
  Metrics m = compute_metrics(perfect, mask);
  CHECK(m.miou == doctest::Approx(1.0));
  CHECK(m.mdice == doctest::Approx(1.0));
  CHECK(m.f_measure == doctest::Approx(1.0));
  CHECK(m.mae == doctest::Approx(0.0));

  Tensor inverted(Shape{1, 1, 4, 4}, DType::F32);
  for (i64 i = 0; i < 16; ++i) inverted.set(i, 1.0 - mask.at(i));
  Metrics mi = compute_metrics(inverted, mask);
  CHECK(mi.miou == doctest::Approx(0.0));
  CHECK(mi.mae == doctest::Approx(1.0));

  // 4x4 grid: prediction covers columns 0-1, truth columns 1-2.
  // Pixel counts: inter 4, union 12 -> IoU 1/3; dice 2*4/(8+8) = 1/2.
  Tensor pred(Shape{1, 1, 4, 4}, DType::F32);
  Tensor gt(Shape{1, 1, 4, 4}, DType::F32);
  for (i64 r = 0; r < 4; ++r) {
    pred.set(r * 4 + 0, 1.0);
    pred.set(r * 4 + 1, 1.0);
    gt.set(r * 4 + 1, 1.0);
    gt.set(r * 4 + 2, 1.0);
  }
  Metrics mh = compute_metrics(pred, gt);
  CHECK(mh.miou == doctest::Approx(1.0 / 3).epsilon(1e-9));
  CHECK(mh.mdice == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("metric bounds and miou <= mdice over 1000 random pairs") {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor p(Shape{1, 1, 4, 4}, DType::F32);
    Tensor y(Shape{1, 1, 4, 4}, DType::F32);
    for (i64 i = 0; i < 16; ++i) {
      p.set(i, rng.uniform());
      y.set(i, rng.uniform() < 0.5 ? 1.0 : 0.0);
    }
    Metrics m = compute_metrics(p, y);
    CHECK(m.miou >= 0.0);
    CHECK(m.miou <= 1.0);
    CHECK(m.mdice >= 0.0);
    CHECK(m.mdice <= 1.0);
    CHECK(m.mae >= 0.0);
    CHECK(m.mae <= 1.0);
    CHECK(m.f_measure >= 0.0);
    CHECK(m.f_measure <= 1.0);
    CHECK(m.miou <= m.mdice + 1e-12);
  }
}

TEST_CASE("synthetic samples are deterministic, binary, and within coverage bounds") {
  Sample a = synth_sample(5, 17, 64);
  Sample b = synth_sample(5, 17, 64);
  CHECK(bitwise_equal(a.image, b.image));
  CHECK(bitwise_equal(a.mask, b.mask));
  CHECK_FALSE(bitwise_equal(a.image, synth_sample(5, 18, 64).image));

  int small_objects = 0, large_objects = 0;
  for (u64 idx = 0; idx < 200; ++idx) {
    Sample s = synth_sample(11, idx, 64);
    double frac = 0;
    for (i64 i = 0; i < s.mask.numel(); ++i) {
      double v = s.mask.at(i);
      CHECK((v == 0.0 || v == 1.0));
      frac += v;
    }
    frac /= static_cast<double>(s.mask.numel());
    CHECK(frac > 0.01);
    CHECK(frac < 0.6);
    for (i64 i = 0; i < s.image.numel(); ++i) {
      CHECK(s.image.at(i) >= 0.0);
      CHECK(s.image.at(i) <= 1.0);
    }
    if (frac < 0.02) ++small_objects;
    if (frac > 0.2) ++large_objects;
  }
  // scale diversity shows up in the union statistics
  CHECK(small_objects > 0);
  CHECK(large_objects > 0);
}

TEST_CASE("dataset round-trips through WTEN files") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "weft_data_test";
  fs::remove_all(dir);
  Dataset d = Dataset::synthetic(3, 4, 32);
  d.write_dir(dir.string());
  Dataset back = Dataset::from_dir(dir.string());
  REQUIRE(back.size() == 4);
  for (i64 i = 0; i < 4; ++i) {
    CHECK(bitwise_equal(back.at(i).image, d.at(i).image));
    CHECK(bitwise_equal(back.at(i).mask, d.at(i).mask));
  }
}

TEST_CASE("short training run: loss drops, artifacts exist, frozen bytes stable") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "weft_train_test";
  fs::remove_all(dir);

  ModelConfig mc;
  mc.image_size = 32;
  mc.channels = 8;
  mc.frozen_dim = 8;
  mc.subspaces = 2;
  mc.points = 2;
  mc.decoder_width = 8;
  mc.frozen_mlp_hidden = 16;
  WeftModel model(mc, 5);

  Dataset train_set = Dataset::synthetic(7, 8, 32);
  Dataset eval_set = Dataset::synthetic(8, 2, 32);

  TrainConfig tc;
  tc.steps = 12;
  tc.batch = 2;
  tc.eval_every = 6;
  tc.optim.lr = 1e-3;
  tc.out_dir = dir.string();
  TrainReport rep = train(model, train_set, eval_set, tc);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows.back().step == 12);
  for (const auto& r : rep.rows) CHECK(std::isfinite(r.loss));

  CHECK(fs::exists(dir / "report.csv"));
  CHECK(fs::exists(dir / "init.wten"));
  CHECK(fs::exists(dir / "checkpoint.wten"));

  // frozen subset byte-identical before/after training
  auto init = wten::read((dir / "init.wten").string());
  auto fin = wten::read((dir / "checkpoint.wten").string());
  REQUIRE(init.size() == fin.size());
  int frozen_checked = 0;
  bool some_trainable_changed = false;
  for (size_t i = 0; i < init.size(); ++i) {
    CHECK(init[i].first == fin[i].first);
    const Parameter* p = model.params().find(init[i].first);
    REQUIRE(p != nullptr);
    if (p->frozen) {
      CHECK(bitwise_equal(init[i].second, fin[i].second));
      ++frozen_checked;
    } else if (!bitwise_equal(init[i].second, fin[i].second)) {
      some_trainable_changed = true;
    }
  }
  CHECK(frozen_checked > 0);
  CHECK(some_trainable_changed);

  TrainConfig bad = tc;
  bad.steps = 0;
  CHECK_THROWS_AS(train(model, train_set, eval_set, bad), Error);
}

TEST_CASE("training twice from the same seed is bit-identical") {
  ModelConfig mc;
  mc.image_size = 32;
  mc.channels = 8;
  mc.frozen_dim = 8;
  mc.subspaces = 2;
  mc.points = 2;
  mc.decoder_width = 8;
  mc.frozen_mlp_hidden = 16;

  auto run = [&](u64 seed) {
    WeftModel model(mc, seed);
    Dataset tr = Dataset::synthetic(21, 6, 32);
    Dataset ev = Dataset::synthetic(22, 2, 32);
    TrainConfig tc;
    tc.steps = 8;
    tc.batch = 2;
    tc.eval_every = 4;
    tc.optim.lr = 1e-3;
    tc.seed = seed;
    return train(model, tr, ev, tc).csv();
  };
  CHECK(run(3) == run(3));
  CHECK(run(3) != run(4));
}
