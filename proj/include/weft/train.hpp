#pragma once

#include "weft/data.hpp"
#include "weft/loss.hpp"
#include "weft/metrics.hpp"
#include "weft/model.hpp"
#include "weft/optimizer.hpp"

namespace weft {

struct TrainConfig {
  i64 steps = 1000;
  i64 batch = 4;
  u64 seed = 0;        // batch ordering
  i64 eval_every = 200;
  AdamWConfig optim;
  LossConfig loss;
  std::string out_dir;  // when set: report.csv, init/checkpoint wten+json
};

struct TrainReport {
  struct Row {
    i64 step;
    double loss, bce, dice;            // training batch at this step
    double miou, mdice, mae, f_measure;  // held-out split
  };
  std::vector<Row> rows;
  Metrics final_eval;
  std::string csv() const;
};

// Standard loop: forward -> composite loss -> backward -> AdamW, with
// periodic held-out evaluation. A non-finite loss aborts by re-running the
// step with per-op checking to name the first NaN-producing op.
TrainReport train(WeftModel& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& cfg);

// Forward the whole split without recording and accumulate metrics.
Metrics evaluate(const WeftModel& model, const Dataset& eval_set, i64 batch);

}  // namespace weft
