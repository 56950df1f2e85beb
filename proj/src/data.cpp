#include "weft/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "weft/wten.hpp"

namespace weft {

namespace {

namespace fs = std::filesystem;

// Coarse random grid bilinearly upsampled to SxS; values in [0,1].
void add_value_noise(std::vector<float>& out, i64 S, Rng& rng, i64 grid, double weight) {
  std::vector<double> g(static_cast<size_t>((grid + 1) * (grid + 1)));
  for (auto& v : g) v = rng.uniform();
  for (i64 y = 0; y < S; ++y) {
    double gy = static_cast<double>(y) / static_cast<double>(S) * grid;
    i64 y0 = static_cast<i64>(gy);
    double fy = gy - y0;
    for (i64 x = 0; x < S; ++x) {
      double gx = static_cast<double>(x) / static_cast<double>(S) * grid;
      i64 x0 = static_cast<i64>(gx);
      double fx = gx - x0;
      double v00 = g[static_cast<size_t>(y0 * (grid + 1) + x0)];
      double v01 = g[static_cast<size_t>(y0 * (grid + 1) + x0 + 1)];
      double v10 = g[static_cast<size_t>((y0 + 1) * (grid + 1) + x0)];
      double v11 = g[static_cast<size_t>((y0 + 1) * (grid + 1) + x0 + 1)];
      double top = v00 + (v01 - v00) * fx;
      double bot = v10 + (v11 - v10) * fx;
      out[static_cast<size_t>(y * S + x)] += static_cast<float>(weight * (top + (bot - top) * fy));
    }
  }
}

struct Shape2D {
  int kind;  // 0 rect, 1 ellipse, 2 bar
  double cx, cy, ax, ay, cos_t, sin_t;
  double color[3];

  bool inside(double x, double y) const {
    double dx = x - cx, dy = y - cy;
    double u = dx * cos_t + dy * sin_t;
    double v = -dx * sin_t + dy * cos_t;
    if (kind == 1) {
      double e = (u / ax) * (u / ax) + (v / ay) * (v / ay);
      return e <= 1.0;
    }
    return std::fabs(u) <= ax && std::fabs(v) <= ay;
  }
};

Sample try_sample(Rng rng, i64 S) {
  const double area = static_cast<double>(S) * static_cast<double>(S);
  std::vector<float> bg(static_cast<size_t>(S * S), 0.0f);
  Rng noise = rng.fork("noise");
  add_value_noise(bg, S, noise, 4, 0.55);
  add_value_noise(bg, S, noise, 8, 0.30);
  add_value_noise(bg, S, noise, 16, 0.15);

  Rng tint = rng.fork("tint");
  double scale[3], off[3];
  for (int c = 0; c < 3; ++c) {
    scale[c] = tint.uniform(0.45, 0.85);
    off[c] = tint.uniform(0.05, 0.25);
  }

  Rng srng = rng.fork("shapes");
  int count = static_cast<int>(srng.uniform_int(1, 5));
  std::vector<Shape2D> shapes;
  for (int i = 0; i < count; ++i) {
    Shape2D s;
    double kind_draw = srng.uniform();
    s.kind = kind_draw < 0.38 ? 0 : kind_draw < 0.76 ? 1 : 2;
    s.cx = srng.uniform(0.12, 0.88) * S;
    s.cy = srng.uniform(0.12, 0.88) * S;
    double theta = srng.uniform(0.0, M_PI);
    s.cos_t = std::cos(theta);
    s.sin_t = std::sin(theta);
    if (s.kind == 2) {
      s.ax = srng.uniform(0.18, 0.45) * S;  // half length
      s.ay = srng.uniform(1.5, 4.5);        // half width in pixels
    } else {
      // log-uniform area fraction spanning small to a quarter of the image
      double frac = std::exp(srng.uniform(std::log(0.004), std::log(0.28)));
      double aspect = std::exp(srng.uniform(std::log(0.4), std::log(2.5)));
      double target = frac * area;
      double base = s.kind == 1 ? target / M_PI : target / 4.0;
      s.ay = std::sqrt(base / aspect);
      s.ax = s.ay * aspect;
    }
    double mag = srng.uniform(0.22, 0.55);
    double sign = srng.uniform() < 0.5 ? -1.0 : 1.0;
    for (int c = 0; c < 3; ++c) s.color[c] = sign * mag * srng.uniform(0.7, 1.3);
    shapes.push_back(s);
  }

  std::vector<float> fg_noise(static_cast<size_t>(S * S), 0.0f);
  add_value_noise(fg_noise, S, srng, 8, 1.0);

  Sample out;
  out.image = Tensor(Shape{3, S, S}, DType::F32);
  out.mask = Tensor(Shape{1, S, S}, DType::F32);
  auto img = out.image.data<float>();
  auto msk = out.mask.data<float>();
  i64 covered = 0;
  for (i64 y = 0; y < S; ++y) {
    for (i64 x = 0; x < S; ++x) {
      size_t pix = static_cast<size_t>(y * S + x);
      double base = bg[pix];
      const Shape2D* hit = nullptr;
      for (const Shape2D& s : shapes)
        if (s.inside(x + 0.5, y + 0.5)) hit = &s;  // later shapes draw on top
      msk[pix] = hit ? 1.0f : 0.0f;
      covered += hit != nullptr;
      for (int c = 0; c < 3; ++c) {
        double v = base * scale[c] + off[c];
        if (hit) v += hit->color[c] + 0.08 * (fg_noise[pix] - 0.5);
        img[static_cast<size_t>(c) * static_cast<size_t>(S * S) + pix] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  double frac = static_cast<double>(covered) / area;
  if (frac <= 0.01 || frac >= 0.6) out.mask = Tensor();  // rejected
  return out;
}

}  // namespace

Sample synth_sample(u64 seed, u64 index, i64 image_size) {
  Rng base = Rng(seed).fork("data").fork(index);
  for (u64 attempt = 0; attempt < 100; ++attempt) {
    Sample s = try_sample(base.fork(attempt), image_size);
    if (s.mask.defined()) return s;
  }
  fail("synth_sample: rejection sampling failed for seed " + std::to_string(seed) + " index " +
       std::to_string(index));
}

Dataset Dataset::synthetic(u64 seed, i64 count, i64 image_size) {
  if (count < 1) fail("dataset: count must be >= 1");
  Dataset d;
  d.samples_.reserve(static_cast<size_t>(count));
  for (i64 i = 0; i < count; ++i) d.samples_.push_back(synth_sample(seed, static_cast<u64>(i), image_size));
  return d;
}

Dataset Dataset::from_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) fail("dataset: not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".wten") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) fail("dataset: no .wten files in " + dir);
  Dataset d;
  for (const std::string& f : files) {
    auto tensors = wten::read(f);
    Sample s;
    for (auto& [name, t] : tensors) {
      if (name == "image") s.image = std::move(t);
      if (name == "mask") s.mask = std::move(t);
    }
    if (!s.image.defined() || !s.mask.defined())
      fail("dataset: " + f + " must hold tensors 'image' and 'mask'");
    if (s.image.rank() != 3 || s.image.dim(0) != 3 || s.mask.rank() != 3 || s.mask.dim(0) != 1 ||
        s.image.dim(1) != s.mask.dim(1) || s.image.dim(2) != s.mask.dim(2))
      fail("dataset: " + f + " has inconsistent shapes image " + shape_str(s.image.shape()) + " mask " +
           shape_str(s.mask.shape()));
    d.samples_.push_back(std::move(s));
  }
  return d;
}

void Dataset::write_dir(const std::string& dir) const {
  fs::create_directories(dir);
  char name[32];
  for (i64 i = 0; i < size(); ++i) {
    std::snprintf(name, sizeof(name), "sample_%05lld.wten", static_cast<long long>(i));
    wten::write((fs::path(dir) / name).string(),
                {{"image", samples_[static_cast<size_t>(i)].image},
                 {"mask", samples_[static_cast<size_t>(i)].mask}});
  }
}

SampleBatch Dataset::batch(const std::vector<i64>& indices) const {
  if (indices.empty()) fail("dataset: empty batch");
  i64 S = image_size();
  SampleBatch b;
  b.images = Tensor(Shape{static_cast<i64>(indices.size()), 3, S, S}, DType::F32);
  b.masks = Tensor(Shape{static_cast<i64>(indices.size()), 1, S, S}, DType::F32);
  auto pi = b.images.data<float>();
  auto pm = b.masks.data<float>();
  i64 isz = 3 * S * S, msz = S * S;
  for (size_t k = 0; k < indices.size(); ++k) {
    const Sample& s = at(indices[k]);
    std::memcpy(pi.data() + static_cast<i64>(k) * isz, s.image.raw(), static_cast<size_t>(isz) * 4);
    std::memcpy(pm.data() + static_cast<i64>(k) * msz, s.mask.raw(), static_cast<size_t>(msz) * 4);
  }
  return b;
}

}  // namespace weft
