// tokcom command-line interface: dataset generation, training, evaluation,
// proxy-table construction, controller tuning and simulation, digital
// baselines, mask export, and the end-to-end pipeline.
//
// Exit codes: 0 success, 1 configuration error, 2 stage failure,
// 3 infeasible controller constraint.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "tokcom/pipeline.hpp"

namespace {

using namespace tokcom;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key = value configuration file");
  cmd->add_option("--set", opts.overrides, "override a config entry, e.g. --set train.epochs=2")
      ->take_all();
  cmd->add_option("--seed", opts.seed_override, "override the global seed")
      ->each([&](const std::string&) { opts.seed_set = true; });
}

RunConfig make_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) load_config_file(cfg, opts.config_path);
  apply_overrides(cfg, opts.overrides);
  if (opts.seed_set) {
    cfg.seed = opts.seed_override;
    cfg.train.seed = cfg.seed;
  }
  return cfg;
}

SnrSpec parse_snr_spec(const std::string& mode, double snr_db) {
  if (mode == "noiseless") return SnrSpec{ChannelMode::kNoiseless, 0.0};
  if (mode == "awgn") return SnrSpec{ChannelMode::kAwgn, snr_db};
  if (mode == "slow_fading") return SnrSpec{ChannelMode::kSlowFading, snr_db};
  throw ConfigError("unknown channel mode '" + mode + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive token DJSCC simulator with a Lyapunov rate controller"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* gen = app.add_subcommand("gen-data", "generate the deterministic toy dataset");
  add_common(gen, opts);

  auto* train = app.add_subcommand("train", "train the backbone and/or the DJSCC model");
  add_common(train, opts);
  std::string phase = "both";
  std::string from_ckpt;
  train->add_option("--phase", phase, "pretrain | djscc | both")->default_val("both");
  train->add_option("--from", from_ckpt, "checkpoint to start the djscc phase from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint at (alpha, r, SNR)");
  add_common(eval, opts);
  std::string eval_model;
  double eval_alpha = 1.0, eval_r = 0.5, eval_snr = 10.0;
  std::string eval_mode = "awgn";
  std::size_t eval_limit = 0;
  eval->add_option("--model", eval_model, "model checkpoint")->required();
  eval->add_option("--alpha", eval_alpha, "token budget in (0, 1]");
  eval->add_option("--r", eval_r, "compression factor (must be in the bank)");
  eval->add_option("--snr-db", eval_snr, "test SNR in dB");
  eval->add_option("--mode", eval_mode, "noiseless | awgn | slow_fading");
  eval->add_option("--limit", eval_limit, "evaluate at most this many samples (0 = all)");

  auto* proxy = app.add_subcommand("build-proxy", "evaluate the (r, alpha, SNR) grid");
  add_common(proxy, opts);
  std::string proxy_model;
  proxy->add_option("--model", proxy_model, "model checkpoint")->required();

  auto* tune = app.add_subcommand("tune", "grid-search the controller hyperparameters (V, mu)");
  add_common(tune, opts);
  std::string tune_proxy;
  tune->add_option("--proxy", tune_proxy, "proxy table CSV (default: <out_dir>/proxy.csv)");

  auto* runc = app.add_subcommand("run-controller", "simulate the drift-plus-penalty loop");
  add_common(runc, opts);
  std::string runc_proxy, runc_model;
  double runc_v = 0.0, runc_mu = 0.0;
  bool runc_tuned = false;
  runc->add_option("--proxy", runc_proxy, "proxy table CSV (default: <out_dir>/proxy.csv)");
  runc->add_option("--model", runc_model, "attach a checkpoint for realized per-slot accuracy");
  runc->add_option("--V", runc_v, "trade-off weight V (omit to use tuner output)");
  runc->add_option("--mu", runc_mu, "queue step size mu (omit to use tuner output)");
  runc->add_flag("--use-tuned", runc_tuned, "read (V, mu) from <out_dir>/tune.csv");

  auto* baseline = app.add_subcommand("baseline", "digital capacity-achieving baselines");
  add_common(baseline, opts);
  std::string baseline_model;
  baseline->add_option("--model", baseline_model, "classifier checkpoint (unsplit model)")
      ->required();

  auto* masks = app.add_subcommand("export-masks", "per-token retention records for overlays");
  add_common(masks, opts);
  std::string masks_model;
  std::vector<double> masks_alphas = {0.1, 0.25, 0.5, 0.75, 1.0};
  double masks_r = 0.5, masks_snr = 10.0;
  std::size_t masks_limit = 16;
  masks->add_option("--model", masks_model, "model checkpoint")->required();
  masks->add_option("--alphas", masks_alphas, "budgets to export")->expected(-1);
  masks->add_option("--r", masks_r, "compression factor");
  masks->add_option("--snr-db", masks_snr, "channel SNR in dB");
  masks->add_option("--limit", masks_limit, "number of test images (0 = all)");

  auto* pipe = app.add_subcommand("pipeline", "run every stage end to end");
  add_common(pipe, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = make_config(opts);
    PipelineArtifacts paths = pipeline_paths(cfg);

    if (gen->parsed()) {
      stage_gen_data(cfg, paths);
      std::cout << "wrote " << paths.train_pack << " and " << paths.test_pack << "\n";
    } else if (train->parsed()) {
      if (phase != "pretrain" && phase != "djscc" && phase != "both")
        throw ConfigError("train: --phase must be pretrain, djscc or both");
      DjsccModel model;
      if (phase == "djscc") {
        std::string src = from_ckpt.empty() ? paths.pretrained_ckpt : from_ckpt;
        model = load_model(src);
      } else {
        model = stage_pretrain(cfg, paths);
        std::cout << "pretrained checkpoint: " << paths.pretrained_ckpt << "\n";
      }
      if (phase != "pretrain") {
        stage_finetune(cfg, paths, model);
        std::cout << "model checkpoint: " << paths.model_ckpt << "\n";
      }
    } else if (eval->parsed()) {
      DjsccModel model = load_model(eval_model);
      Dataset test = load_dataset(paths.test_pack);
      EvalResult res = evaluate(model, test, eval_alpha, eval_r,
                                parse_snr_spec(eval_mode, eval_snr), cfg.seed, eval_limit);
      std::printf("accuracy %.4f  mean_rho %.6f  mean_n_alpha %.2f  degenerate %zu\n",
                  res.accuracy, res.mean_rho, res.mean_n_alpha, res.degenerate);
    } else if (proxy->parsed()) {
      DjsccModel model = load_model(proxy_model);
      std::filesystem::create_directories(cfg.out_dir);
      ProxyTable table = stage_build_proxy(cfg, paths, model);
      std::cout << "proxy table: " << paths.proxy_csv << " (" << table.cells.size()
                << " cells)\n";
    } else if (tune->parsed()) {
      std::string src = tune_proxy.empty() ? paths.proxy_csv : tune_proxy;
      ProxyTable table = load_proxy_csv(src, cfg.model);
      std::filesystem::create_directories(cfg.out_dir);
      TuneSummary best = stage_tune(cfg, paths, table);
      std::printf("V %g  mu %g  feasible %d  window_rho %.6f  window_acc %.4f\n", best.V,
                  best.mu, best.feasible ? 1 : 0, best.window_rho, best.window_acc);
      if (!best.feasible) return 3;
    } else if (runc->parsed()) {
      std::string src = runc_proxy.empty() ? paths.proxy_csv : runc_proxy;
      ProxyTable table = load_proxy_csv(src, cfg.model);
      double V = runc_v, mu = runc_mu;
      if (runc_tuned || V <= 0.0 || mu <= 0.0) {
        csv::Table t = csv::read(paths.tune_csv);
        V = std::stod(t.rows.at(0)[t.column("V")]);
        mu = std::stod(t.rows.at(0)[t.column("mu")]);
        if (t.rows.at(0)[t.column("feasible")] == "0")
          throw InfeasibleConstraint("tuned configuration is infeasible");
      }
      TuneSummary tuned{V, mu, true, 0.0, 0.0};
      DjsccModel model;
      if (!runc_model.empty()) model = load_model(runc_model);
      std::filesystem::create_directories(cfg.out_dir);
      if (!runc_model.empty()) {
        stage_run_controller(cfg, paths, table, tuned, model);
        std::cout << "traces: " << paths.trace_csv << ", " << paths.trace_model_csv << "\n";
      } else {
        SnrProcess process = snr_process_from(cfg);
        ControllerParams params{V, mu, cfg.rho_th};
        SlotTrace trace = run_controller(table, process, params, cfg.horizon, cfg.seed, 0);
        save_trace_csv(paths.trace_csv, trace);
        std::printf("trace: %s  window_rho %.6f  Z(T)/T %.6g\n", paths.trace_csv.c_str(),
                    trace.trailing_mean_rho(cfg.window),
                    trace.final_Z / static_cast<double>(cfg.horizon));
      }
    } else if (baseline->parsed()) {
      DjsccModel classifier = load_model(baseline_model);
      std::filesystem::create_directories(cfg.out_dir);
      stage_baselines(cfg, paths, classifier);
      std::cout << "baseline sweep: " << paths.baselines_csv << "\n";
    } else if (masks->parsed()) {
      DjsccModel model = load_model(masks_model);
      Dataset test = load_dataset(paths.test_pack);
      export_masks(model, test, masks_alphas, masks_r, masks_snr, cfg.out_dir, cfg.seed,
                   masks_limit);
      std::cout << "mask overlays under " << cfg.out_dir << "\n";
    } else if (pipe->parsed()) {
      run_pipeline(cfg);
      std::cout << "pipeline complete; artifacts under " << cfg.out_dir << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InfeasibleConstraint& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 3;
  } catch (const StageError& e) {
    std::cerr << "stage '" << e.stage << "' failed: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
