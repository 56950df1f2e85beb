#include "doctest.h"
#include "test_util.hpp"
#include "weft/gradcheck.hpp"
#include "weft/ops.hpp"
#include "weft/wten.hpp"

#include <filesystem>
#include <fstream>

using namespace weft;
using namespace weft::testutil;
namespace op = weft::ops;

TEST_CASE("softmax of equal logits is uniform") {
  Tensor x = Tensor::from({2}, {0.0, 0.0});
  Tensor y = op::softmax(x, 0);
  CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.at(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("conv2d with identity-center kernel preserves the input") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w(Shape{1, 1, 3, 3});
  w.set(4, 1.0);  // center tap
  Tensor y = op::conv2d(x, w, Tensor(), 1, -1, op::PadMode::Zero, 1);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("matmul hand arithmetic") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {5, 6});
  Tensor c = op::matmul(a, b);
  CHECK(c.at(0) == doctest::Approx(17));
  CHECK(c.at(1) == doctest::Approx(39));
}

TEST_CASE("matmul shape mismatch names the op and shapes") {
  Tensor a(Shape{2, 3}), b(Shape{2, 2});
  CHECK_THROWS_WITH_AS(op::matmul(a, b), doctest::Contains("matmul"), Error);
}

TEST_CASE("backward of sum gives ones") {
  Tensor x = rand_tensor(*(new Rng(1)), {2, 2});
  Tape tape;
  TapeScope scope(tape);
  tape.watch(x);
  Tensor loss = op::sum_all(x);
  tape.backward(loss);
  const Tensor* g = tape.grad(x.node);
  REQUIRE(g != nullptr);
  for (i64 i = 0; i < 4; ++i) CHECK(g->at(i) == doctest::Approx(1.0));
}

TEST_CASE("sigmoid gradient at zero is 1/4") {
  Tensor x = Tensor::scalar(0.0, DType::F64);
  Tape tape;
  TapeScope scope(tape);
  tape.watch(x);
  Tensor loss = op::sigmoid(x);
  tape.backward(loss);
  CHECK(tape.grad(x.node)->at(0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("grad of mean(x*x) matches hand derivative") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, DType::F64);
  Tape tape;
  TapeScope scope(tape);
  tape.watch(x);
  Tensor loss = op::mean_all(op::mul(x, x));
  tape.backward(loss);
  const Tensor* g = tape.grad(x.node);
  CHECK(g->at(0) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(g->at(1) == doctest::Approx(4.0 / 3).epsilon(1e-12));
  CHECK(g->at(2) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x(Shape{2});
  Tape tape;
  TapeScope scope(tape);
  tape.watch(x);
  Tensor y = op::mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("frozen leaves receive no gradient entry") {
  Tensor x = Tensor::from({2}, {1, 2}, DType::F64);
  Tensor w = Tensor::from({2}, {3, 4}, DType::F64);  // never watched
  Tape tape;
  TapeScope scope(tape);
  tape.watch(x);
  Tensor loss = op::sum_all(op::mul(x, w));
  tape.backward(loss);
  CHECK(tape.grad(x.node) != nullptr);
  CHECK(w.node == -1);
}

TEST_CASE("finite_difference_check on a linear function is exact") {
  Rng rng(7);
  Tensor x = rand_tensor(rng, {3, 3});
  auto rep = finite_difference_check([](const Tensor& t) { return op::sum_all(t); }, x, 1e-4, 1e-10);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err <= 1e-10);
}

TEST_CASE("gradient checks across the op set (f64, 20 seeds)") {
  struct Probe {
    const char* name;
    std::function<Tensor(Rng&, const Tensor&)> apply;  // rng builds constants
    Shape shape;
  };
  auto scalarize = [](Tensor t) {
    // weighted sum so every output element matters with distinct weights
    Tensor w(t.shape(), t.dtype());
    for (i64 i = 0; i < w.numel(); ++i) w.set(i, 0.3 + 0.1 * static_cast<double>(i % 7));
    return op::sum_all(op::mul(t, w));
  };
  std::vector<Probe> probes = {
      {"add_bcast", [](Rng& r, const Tensor& x) { return op::add(x, rand_tensor(r, {1, 4})); }, {3, 4}},
      {"sub", [](Rng& r, const Tensor& x) { return op::sub(rand_tensor(r, {3, 4}), x); }, {3, 4}},
      {"mul_bcast", [](Rng& r, const Tensor& x) { return op::mul(x, rand_tensor(r, {3, 1})); }, {3, 4}},
      {"div", [](Rng& r, const Tensor& x) { return op::div(x, rand_tensor(r, {3, 4}, DType::F64, 0.5, 2.0)); }, {3, 4}},
      {"sigmoid", [](Rng&, const Tensor& x) { return op::sigmoid(x); }, {5}},
      {"gelu", [](Rng&, const Tensor& x) { return op::gelu(x); }, {5}},
      {"exp", [](Rng&, const Tensor& x) { return op::exp(x); }, {5}},
      {"sqrt", [](Rng& r, const Tensor& x) { return op::sqrt(op::add(op::mul(x, x), Tensor::full({5}, 0.5, x.dtype()))); }, {5}},
      {"softmax", [](Rng&, const Tensor& x) { return op::softmax(x, 1); }, {2, 5}},
      {"mean_axis", [](Rng&, const Tensor& x) { return op::mean(x, 1); }, {3, 4}},
      {"var_axis", [](Rng&, const Tensor& x) { return op::var(x, 1); }, {3, 4}},
      {"max_axis", [](Rng&, const Tensor& x) { return op::max(x, 1); }, {3, 4}},
      {"matmul", [](Rng& r, const Tensor& x) { return op::matmul(x, rand_tensor(r, {4, 3})); }, {2, 4}},
      {"matmul_batched",
       [](Rng& r, const Tensor& x) { return op::matmul(x, rand_tensor(r, {2, 2, 3, 2})); },
       {2, 2, 4, 3}},
      {"transpose", [](Rng&, const Tensor& x) { return op::transpose(x, 1, 2); }, {2, 3, 4}},
      {"reshape", [](Rng&, const Tensor& x) { return op::reshape(x, {4, 3}); }, {3, 4}},
      {"concat_slice",
       [](Rng& r, const Tensor& x) {
         auto parts = op::split(x, 1, 2);
         return op::concat({parts[1], parts[0], rand_tensor(r, {2, 2})}, 1);
       },
       {2, 4}},
      {"layer_norm",
       [](Rng& r, const Tensor& x) {
         return op::layer_norm(x, rand_tensor(r, {4}, x.dtype(), 0.5, 1.5), rand_tensor(r, {4}));
       },
       {3, 4}},
      {"l2_normalize", [](Rng&, const Tensor& x) { return op::l2_normalize(x); }, {3, 4}},
      {"conv2d_s1",
       [](Rng& r, const Tensor& x) { return op::conv2d(x, rand_tensor(r, {3, 2, 3, 3}), rand_tensor(r, {3})); },
       {2, 2, 5, 5}},
      {"conv2d_s2",
       [](Rng& r, const Tensor& x) {
         return op::conv2d(x, rand_tensor(r, {2, 2, 3, 3}), Tensor(), 2, -1, op::PadMode::Zero, 1);
       },
       {1, 2, 6, 6}},
      {"conv2d_depthwise",
       [](Rng& r, const Tensor& x) {
         return op::conv2d(x, rand_tensor(r, {4, 1, 3, 3}), Tensor(), 1, -1, op::PadMode::Zero, 4);
       },
       {2, 4, 4, 4}},
      {"conv2d_reflect",
       [](Rng& r, const Tensor& x) {
         return op::conv2d(x, rand_tensor(r, {2, 2, 3, 3}), Tensor(), 1, -1, op::PadMode::Reflect, 1);
       },
       {1, 2, 5, 5}},
      {"conv2d_weightgrad",
       [](Rng& r, const Tensor& w) { return op::conv2d(rand_tensor(r, {2, 2, 5, 5}), w, Tensor()); },
       {3, 2, 3, 3}},
      {"pad2d_reflect", [](Rng&, const Tensor& x) { return op::pad2d(x, 2, op::PadMode::Reflect); }, {1, 2, 4, 4}},
      {"resize_bilinear_up", [](Rng&, const Tensor& x) { return op::resize_bilinear(x, 7, 9); }, {1, 2, 4, 4}},
      {"resize_bilinear_down", [](Rng&, const Tensor& x) { return op::resize_bilinear(x, 3, 3); }, {1, 2, 6, 6}},
      {"bce",
       [](Rng& r, const Tensor& x) {
         Tensor y(x.shape(), x.dtype());
         for (i64 i = 0; i < y.numel(); ++i) y.set(i, r.uniform() < 0.5 ? 0.0 : 1.0);
         return op::bce_with_logits(x, y);
       },
       {3, 4}},
      {"sample_bilinear_map",
       [](Rng& r, const Tensor& m) { return op::sample_bilinear(m, rand_tensor(r, {1, 3, 2, 2}, m.dtype(), 0.2, 0.8)); },
       {1, 2, 4, 4}},
      {"sample_bilinear_coords",
       [](Rng& r, const Tensor& c) { return op::sample_bilinear(rand_tensor(r, {1, 2, 4, 4}), c); },
       {1, 3, 2, 2}},
      {"gather_scatter",
       [](Rng&, const Tensor& x) {
         std::vector<i64> idx = {2, 0, 1, 3};
         return op::scatter_rows(op::gather_rows(x, idx, 2), idx, 5);
       },
       {2, 5}},
  };

  for (const auto& p : probes) {
    CAPTURE(p.name);
    double worst = 0.0;
    for (u64 seed = 0; seed < 20; ++seed) {
      Rng rng(seed * 31 + 5);
      Tensor x = p.shape == Shape{1, 3, 2, 2} && std::string(p.name) == "sample_bilinear_coords"
                     ? rand_tensor(rng, p.shape, DType::F64, 0.2, 0.8)
                     : rand_tensor(rng, p.shape);
      auto f = [&](const Tensor& t) {
        Rng local(seed * 31 + 5);
        (void)rand_tensor(local, p.shape);  // keep constant streams aligned
        return scalarize(p.apply(local, t));
      };
      auto rep = finite_difference_check(f, x, 1e-5, 1e-6);
      worst = std::max(worst, rep.max_rel_err);
      if (!rep.pass) { CAPTURE(seed); CHECK_MESSAGE(rep.pass, p.name << " max_rel_err=" << rep.max_rel_err); break; }
    }
    CHECK_LE(worst, 1e-6);
  }
}

TEST_CASE("linearity of add/matmul/conv2d") {
  Rng rng(42);
  double a = 1.7, b = -0.6;
  auto check_linear = [&](auto&& f, const Shape& shape) {
    Tensor x = rand_tensor(rng, shape);
    Tensor y = rand_tensor(rng, shape);
    Tensor lhs = f(op::add(op::mul_scalar(x, a), op::mul_scalar(y, b)));
    Tensor rhs = op::add(op::mul_scalar(f(x), a), op::mul_scalar(f(y), b));
    CHECK_LE(max_rel_diff(lhs, rhs), 1e-5);
  };
  Tensor m = rand_tensor(rng, {4, 5});
  check_linear([&](const Tensor& t) { return op::matmul(t, m); }, {3, 4});
  Tensor k = rand_tensor(rng, {3, 2, 3, 3});
  check_linear([&](const Tensor& t) { return op::conv2d(t, k, Tensor()); }, {1, 2, 6, 6});

  // add is jointly linear in both operands
  Tensor x1 = rand_tensor(rng, {2, 3}), x2 = rand_tensor(rng, {2, 3});
  Tensor y1 = rand_tensor(rng, {2, 3}), y2 = rand_tensor(rng, {2, 3});
  Tensor lhs = op::add(op::add(op::mul_scalar(x1, a), op::mul_scalar(x2, b)),
                       op::add(op::mul_scalar(y1, a), op::mul_scalar(y2, b)));
  Tensor rhs = op::add(op::mul_scalar(op::add(x1, y1), a), op::mul_scalar(op::add(x2, y2), b));
  CHECK_LE(max_rel_diff(lhs, rhs), 1e-5);
}

TEST_CASE("max tie-break picks the lowest index") {
  Tensor x = Tensor::from({1, 4}, {3.0, 7.0, 7.0, 1.0}, DType::F64);
  Tape tape;
  TapeScope scope(tape);
  tape.watch(x);
  Tensor y = op::max(x, 1);
  tape.backward(op::sum_all(y));
  const Tensor* g = tape.grad(x.node);
  CHECK(g->at(1) == 1.0);  // index 1, not 2
  CHECK(g->at(2) == 0.0);
}

TEST_CASE("identical seeds give bitwise identical results") {
  auto run = [] {
    Rng rng(99);
    Tensor x = rand_tensor(rng, {2, 3, 8, 8}, DType::F32);
    Tensor w = rand_tensor(rng, {4, 3, 3, 3}, DType::F32);
    return op::gelu(op::conv2d(x, w, Tensor(), 2));
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("debug checks name the op that produced a NaN") {
  bool was = debug_checks_enabled();
  set_debug_checks(true);
  Tensor x = Tensor::from({1}, {-1.0});
  try {
    (void)op::log(x);
    CHECK(false);
  } catch (const NumericError& e) {
    CHECK(e.op_name == std::string("log"));
  }
  set_debug_checks(was);
}

TEST_CASE("second use of a tensor accumulates gradients") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, DType::F64);
  Tape tape;
  TapeScope scope(tape);
  tape.watch(x);
  Tensor loss = op::sum_all(op::add(op::mul(x, x), x));  // x^2 + x -> 2x + 1
  tape.backward(loss);
  const Tensor* g = tape.grad(x.node);
  CHECK(g->at(0) == doctest::Approx(3.0));
  CHECK(g->at(1) == doctest::Approx(5.0));
}

TEST_CASE("WTEN round-trip and corruption diagnostics") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "weft_wten_test";
  fs::create_directories(dir);
  std::string path = (dir / "t.wten").string();

  Rng rng(5);
  Tensor a = rand_tensor(rng, {2, 3, 4}, DType::F32);
  Tensor b = rand_tensor(rng, {7}, DType::F32);
  wten::write(path, {{"alpha", a}, {"nested.name", b}});
  auto back = wten::read(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "alpha");
  CHECK(bitwise_equal(back[0].second, a));
  CHECK(back[1].first == "nested.name");
  CHECK(bitwise_equal(back[1].second, b));

  // Bad magic
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOPE garbage";
  }
  CHECK_THROWS_WITH_AS(wten::read(path), doctest::Contains("magic"), Error);

  // Truncated payload
  wten::write(path, {{"alpha", a}});
  {
    auto sz = fs::file_size(path);
    fs::resize_file(path, sz - 8);
  }
  CHECK_THROWS_WITH_AS(wten::read(path), doctest::Contains("offset"), Error);
}
