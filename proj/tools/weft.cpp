// weft: train / eval / gradcheck / bench for the wavelet-expert fine-tuning
// segmenter. One command per process; exit codes: 0 ok, 1 config error,
// 2 numeric failure, 3 verification failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "weft/config.hpp"
#include "weft/gradcheck.hpp"
#include "weft/train.hpp"
#include "weft/wten.hpp"

namespace fs = std::filesystem;
using namespace weft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitVerify = 3;

void apply_threads(const RunConfig& cfg) {
  if (cfg.threads > 0) set_max_threads(cfg.threads);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WEFT: wavelet-expert fine-tuning for binary segmentation"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;
  std::string checkpoint_path, dataset_dir_eval, pred_out;
  bool corrupt_esto = false;

  // shared flags installed on each subcommand
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file");
    sub->add_option("--seed", cfg.seed, "run seed");
    sub->add_option("--steps", cfg.steps, "training steps");
    sub->add_option("--batch", cfg.batch, "batch size");
    sub->add_option("--image-size", cfg.model.image_size, "square image size (multiple of 32)");
    sub->add_option("--channels", cfg.model.channels, "trainable branch width");
    sub->add_option("--k-experts", cfg.model.k_experts, "router top-k in 1..7");
    sub->add_option("--subspaces", cfg.model.subspaces, "ESTO subspace count");
    sub->add_option("--lambda", cfg.model.lambda, "ESTO edge-mask intensity");
    sub->add_option("--rho", cfg.model.rho, "ESTO temperature");
    sub->add_option("--points", cfg.model.points, "deformable samples per scale");
    sub->add_option("--lr", cfg.optim.lr, "learning rate");
    sub->add_option("--weight-decay", cfg.optim.weight_decay, "AdamW weight decay");
    sub->add_option("--regime", cfg.regime, "frozen|weft|full");
    sub->add_option("--train-count", cfg.train_count, "synthetic training images");
    sub->add_option("--eval-count", cfg.eval_count, "held-out images");
    sub->add_option("--eval-every", cfg.eval_every, "evaluation cadence in steps");
    sub->add_option("--bench-steps", cfg.bench_steps, "steps per bench regime");
    sub->add_option("--threads", cfg.threads, "parallelism cap (0 = WEFT_THREADS)");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--export-data", cfg.export_data, "write synthetic splits to DIR/{train,eval}");
  };

  CLI::App* cmd_train = app.add_subcommand("train", "train a model on the synthetic task");
  add_common(cmd_train);
  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
  cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint .wten (sidecar .json beside it)")
      ->required();
  cmd_eval->add_option("--data", dataset_dir_eval, "dataset directory of WTEN samples")->required();
  cmd_eval->add_option("--out", pred_out, "directory for predicted probability maps");
  cmd_eval->add_option("--batch", cfg.batch, "eval batch size");
  cmd_eval->add_option("--threads", cfg.threads, "parallelism cap");
  CLI::App* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(cmd_gradcheck);
  cmd_gradcheck->add_flag("--corrupt-esto", corrupt_esto,
                          "test fixture: inject a fault into the esto analytic gradient");
  CLI::App* cmd_bench = app.add_subcommand("bench", "compare frozen / weft / full fine-tuning regimes");
  add_common(cmd_bench);

  // A config file provides the base; explicit flags override it. Pre-scan
  // for --config so file values become the defaults CLI11 overrides.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
  if (!config_path.empty()) {
    try {
      cfg = RunConfig::from_file(config_path);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitConfig;
    }
  }

  CLI11_PARSE(app, argc, argv);

  try {
    apply_threads(cfg);

    if (app.got_subcommand(cmd_train)) {
      cfg.model.validate();
      Regime regime = parse_regime(cfg.regime);
      if (cfg.out_dir.empty()) fail("train: --out DIR is required");
      fs::create_directories(cfg.out_dir);
      {
        std::ofstream probe(fs::path(cfg.out_dir) / ".writable", std::ios::trunc);
        if (!probe) fail("train: output directory not writable: " + cfg.out_dir);
      }
      fs::remove(fs::path(cfg.out_dir) / ".writable");
      std::ofstream rc(fs::path(cfg.out_dir) / "config.resolved");
      rc << cfg.resolved();
      rc.close();

      Dataset train_set = Dataset::synthetic(cfg.seed, cfg.train_count, cfg.model.image_size);
      Dataset eval_set =
          Dataset::synthetic(cfg.seed ^ 0x9e3779b97f4a7c15ull, cfg.eval_count, cfg.model.image_size);
      if (!cfg.export_data.empty()) {
        train_set.write_dir((fs::path(cfg.export_data) / "train").string());
        eval_set.write_dir((fs::path(cfg.export_data) / "eval").string());
      }

      WeftModel model(cfg.model, cfg.seed, regime);
      auto counts = model.count_params();
      std::printf("regime=%s trainable=%llu frozen=%llu fraction=%.4f\n", regime_name(regime),
                  static_cast<unsigned long long>(counts.trainable),
                  static_cast<unsigned long long>(counts.frozen), counts.fraction);

      TrainReport rep = train(model, train_set, eval_set, cfg.train_config());
      const auto& last = rep.rows.back();
      std::printf("final step=%lld loss=%.4f miou=%.4f mdice=%.4f mae=%.4f f=%.4f\n",
                  static_cast<long long>(last.step), last.loss, last.miou, last.mdice, last.mae,
                  last.f_measure);
      return kExitOk;
    }

    if (app.got_subcommand(cmd_eval)) {
      fs::path ck = checkpoint_path;
      fs::path sidecar = ck;
      sidecar.replace_extension(".json");
      CheckpointMeta meta = read_checkpoint_meta(sidecar.string());
      Dataset data = Dataset::from_dir(dataset_dir_eval);
      if (data.image_size() != meta.config.image_size)
        fail("checkpoint expects " + std::to_string(meta.config.image_size) + "px images but " +
             dataset_dir_eval + " holds " + std::to_string(data.image_size()) + "px samples");
      WeftModel model(meta.config, meta.seed, meta.regime);
      model.load_checkpoint(ck.string());

      MetricAccumulator acc;
      char name[32];
      if (!pred_out.empty()) fs::create_directories(pred_out);
      for (i64 start = 0; start < data.size(); start += cfg.batch) {
        std::vector<i64> idx;
        for (i64 i = start; i < std::min(data.size(), start + cfg.batch); ++i) idx.push_back(i);
        SampleBatch b = data.batch(idx);
        NoGradScope ng;
        Tensor probs = ops::sigmoid(model.forward(b.images));
        acc.add(probs, b.masks);
        if (!pred_out.empty()) {
          for (size_t k = 0; k < idx.size(); ++k) {
            Tensor one = ops::slice(probs, 0, static_cast<i64>(k), 1);
            std::snprintf(name, sizeof(name), "pred_%05lld.wten", static_cast<long long>(idx[k]));
            wten::write((fs::path(pred_out) / name).string(),
                        {{"prob", one.view_as({1, one.dim(2), one.dim(3)})}});
          }
        }
      }
      Metrics m = acc.mean();
      std::printf("images=%lld\n", static_cast<long long>(acc.count()));
      std::printf("metric,value\n");
      std::printf("miou,%.6f\nmdice,%.6f\nmae,%.6f\nf_measure,%.6f\n", m.miou, m.mdice, m.mae,
                  m.f_measure);
      std::printf("# f_measure: beta^2=0.3 at adaptive threshold min(2*mean(p),1)\n");
      return kExitOk;
    }

    if (app.got_subcommand(cmd_gradcheck)) {
      const auto& cases = gradcheck_cases();
      std::printf("%-14s %-28s %-5s %-12s %s\n", "family", "check", "dtype", "max_rel_err", "status");
      bool all_pass = true;
      std::set<std::string> families;
      for (const auto& c : cases) {
        families.insert(c.family);
        for (DType dt : {DType::F32, DType::F64}) {
          double tol = dt == DType::F32 ? 1e-3 : 1e-6;
          double worst = 0.0;
          bool pass = true;
          for (u64 seed = 0; seed < 20; ++seed) {
            double inject = (corrupt_esto && c.family == "esto") ? 0.1 : 0.0;
            auto rep = run_gradcheck_case(c, seed, dt, 1e-4, tol, inject);
            worst = std::max(worst, rep.max_rel_err);
            pass &= rep.pass;
          }
          std::printf("%-14s %-28s %-5s %-12.3e %s\n", c.family.c_str(), c.name.c_str(),
                      dtype_name(dt), worst, pass ? "pass" : "FAIL");
          all_pass &= pass;
        }
      }
      std::printf("%zu op families checked, 20 seeds each\n", families.size());
      if (!all_pass) {
        std::printf("gradcheck: FAILURES present\n");
        return kExitVerify;
      }
      std::printf("gradcheck: all pass\n");
      return kExitOk;
    }

    if (app.got_subcommand(cmd_bench)) {
      cfg.model.validate();
      Dataset train_set = Dataset::synthetic(cfg.seed, cfg.train_count, cfg.model.image_size);
      Dataset eval_set =
          Dataset::synthetic(cfg.seed ^ 0x9e3779b97f4a7c15ull, cfg.eval_count, cfg.model.image_size);

      struct RowOut {
        const char* regime;
        u64 trainable;
        double step_ms, peak_mb, miou;
      };
      std::vector<RowOut> rows;
      u64 prev_trainable = 0;
      for (Regime regime : {Regime::FrozenOnly, Regime::Weft, Regime::FullFt}) {
        reset_storage_peak();
        WeftModel model(cfg.model, cfg.seed, regime);
        TrainConfig tc = cfg.train_config();
        tc.steps = cfg.bench_steps;
        tc.eval_every = 0;  // final row only
        tc.out_dir.clear();
        auto t0 = std::chrono::steady_clock::now();
        TrainReport rep = train(model, train_set, eval_set, tc);
        auto t1 = std::chrono::steady_clock::now();
        double ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                    static_cast<double>(cfg.bench_steps);
        auto counts = model.count_params();
        rows.push_back({regime_name(regime), counts.trainable, ms,
                        static_cast<double>(storage_bytes_peak()) / (1024.0 * 1024.0),
                        rep.final_eval.miou});
        if (!rows.empty() && rows.size() > 1 && counts.trainable <= prev_trainable)
          std::printf("WARNING: trainable counts not strictly increasing\n");
        prev_trainable = counts.trainable;
      }
      std::printf("%-8s %-12s %-12s %-12s %s\n", "regime", "trainable", "step_ms", "peak_mb", "miou");
      for (const auto& r : rows)
        std::printf("%-8s %-12llu %-12.1f %-12.1f %.4f\n", r.regime,
                    static_cast<unsigned long long>(r.trainable), r.step_ms, r.peak_mb, r.miou);
      bool ordered = rows[0].trainable < rows[1].trainable && rows[1].trainable < rows[2].trainable;
      std::printf("trainable ordering frozen < weft < full: %s\n", ordered ? "yes" : "NO");
      return ordered ? kExitOk : kExitVerify;
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
