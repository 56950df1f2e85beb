#pragma once

#include "weft/model.hpp"
#include "weft/train.hpp"

namespace weft {

// Everything a run needs, parseable from `key = value` lines (# comments)
// with command-line overrides on top. The resolved form is written into
// every run directory.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  AdamWConfig optim;
  u64 seed = 0;
  i64 steps = 1000;
  i64 batch = 4;
  i64 train_count = 64;
  i64 eval_count = 16;
  i64 eval_every = 200;
  std::string regime = "weft";
  std::string out_dir;
  std::string export_data;   // write the synthetic splits out
  i64 bench_steps = 40;
  int threads = 0;  // 0 = keep WEFT_THREADS

  static RunConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);  // throws on unknown key
  std::string resolved() const;                                // key = value form
  TrainConfig train_config() const;
};

}  // namespace weft
