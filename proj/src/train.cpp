#include "weft/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "weft/ops.hpp"

namespace weft {

namespace {

namespace fs = std::filesystem;

std::vector<i64> epoch_order(u64 seed, i64 epoch, i64 n) {
  std::vector<i64> order(static_cast<size_t>(n));
  for (i64 i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng = Rng(seed).fork("order").fork(static_cast<u64>(epoch));
  for (i64 i = n - 1; i > 0; --i) {
    i64 j = rng.uniform_int(0, i);
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  return order;
}

}  // namespace

std::string TrainReport::csv() const {
  std::ostringstream os;
  os << "step,loss,bce,dice,miou,mdice,mae,f_measure\n";
  os.precision(10);
  for (const Row& r : rows)
    os << r.step << ',' << r.loss << ',' << r.bce << ',' << r.dice << ',' << r.miou << ',' << r.mdice
       << ',' << r.mae << ',' << r.f_measure << '\n';
  return os.str();
}

Metrics evaluate(const WeftModel& model, const Dataset& eval_set, i64 batch) {
  NoGradScope ng;
  MetricAccumulator acc;
  for (i64 start = 0; start < eval_set.size(); start += batch) {
    std::vector<i64> idx;
    for (i64 i = start; i < std::min(eval_set.size(), start + batch); ++i) idx.push_back(i);
    SampleBatch b = eval_set.batch(idx);
    Tensor probs = ops::sigmoid(model.forward(b.images));
    acc.add(probs, b.masks);
  }
  return acc.mean();
}

TrainReport train(WeftModel& model, const Dataset& train_set, const Dataset& eval_set,
                  const TrainConfig& cfg) {
  if (cfg.steps < 1) fail("train: steps must be >= 1");
  if (cfg.batch < 1) fail("train: batch must be >= 1");
  if (train_set.size() < 1) fail("train: empty training set");

  const bool persist = !cfg.out_dir.empty();
  if (persist) {
    fs::create_directories(cfg.out_dir);
    model.save_checkpoint((fs::path(cfg.out_dir) / "init.wten").string(),
                          (fs::path(cfg.out_dir) / "init.json").string());
  }

  AdamW optim(cfg.optim);
  TrainReport report;
  std::vector<i64> order;
  i64 cursor = 0, epoch = 0;

  double last_loss = 0, last_bce = 0, last_dice = 0;
  for (i64 step = 1; step <= cfg.steps; ++step) {
    std::vector<i64> idx;
    for (i64 k = 0; k < cfg.batch; ++k) {
      if (cursor == 0) order = epoch_order(cfg.seed, epoch++, train_set.size());
      idx.push_back(order[static_cast<size_t>(cursor)]);
      cursor = (cursor + 1) % train_set.size();
    }
    SampleBatch batch = train_set.batch(idx);

    Tape tape;
    LossParts parts;
    {
      TapeScope scope(tape);
      model.params().bind(tape);
      Tensor logits = model.forward(batch.images);
      parts = composite_loss(logits, batch.masks, cfg.loss);
    }
    double loss = parts.total.item();
    if (!std::isfinite(loss)) {
      // rerun with per-op checking to name the culprit
      bool was = debug_checks_enabled();
      set_debug_checks(true);
      try {
        Tape t2;
        TapeScope scope(t2);
        model.params().bind(t2);
        Tensor logits = model.forward(batch.images);
        (void)composite_loss(logits, batch.masks, cfg.loss);
        set_debug_checks(was);
      } catch (const NumericError&) {
        set_debug_checks(was);
        throw;
      }
      throw NumericError("loss", "non-finite loss at step " + std::to_string(step) +
                                     " (not reproduced with checks on)");
    }
    tape.backward(parts.total);
    model.params().collect_grads(tape);
    optim.step(model.params());

    last_loss = loss;
    last_bce = parts.bce.item();
    last_dice = parts.dice.item();

    if ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps) {
      Metrics m = eval_set.size() > 0 ? evaluate(model, eval_set, cfg.batch) : Metrics{};
      report.rows.push_back({step, last_loss, last_bce, last_dice, m.miou, m.mdice, m.mae, m.f_measure});
      if (step == cfg.steps) report.final_eval = m;
    }
  }

  if (persist) {
    model.save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.wten").string(),
                          (fs::path(cfg.out_dir) / "checkpoint.json").string());
    std::ofstream f(fs::path(cfg.out_dir) / "report.csv", std::ios::trunc);
    f << report.csv();
  }
  return report;
}

}  // namespace weft
