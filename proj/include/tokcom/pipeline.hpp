// Experiment pipeline: gen-data -> pretrain -> djscc-finetune -> build-proxy
// -> tune -> run-controller -> baselines, plus the mask-overlay exporter.
// Every stage writes deterministic artifacts under the configured out_dir.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/baselines.hpp"
#include "tokcom/checkpoint.hpp"
#include "tokcom/config.hpp"
#include "tokcom/controller.hpp"

namespace tokcom {

struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string st, const std::string& what)
      : std::runtime_error(what), stage(std::move(st)) {}
};

struct InfeasibleConstraint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineArtifacts {
  std::string train_pack, test_pack;
  std::string pretrained_ckpt, model_ckpt;
  std::string pretrain_metrics, train_metrics;
  std::string proxy_csv, tune_csv, trace_csv, trace_model_csv;
  std::string baselines_csv, summary_csv;
};

inline PipelineArtifacts pipeline_paths(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  PipelineArtifacts a;
  a.train_pack = (fs::path(cfg.data_dir) / "train.tds").string();
  a.test_pack = (fs::path(cfg.data_dir) / "test.tds").string();
  fs::path out(cfg.out_dir);
  a.pretrained_ckpt = (out / "pretrained.ckpt").string();
  a.model_ckpt = (out / "model.ckpt").string();
  a.pretrain_metrics = (out / "pretrain_metrics.csv").string();
  a.train_metrics = (out / "train_metrics.csv").string();
  a.proxy_csv = (out / "proxy.csv").string();
  a.tune_csv = (out / "tune.csv").string();
  a.trace_csv = (out / "trace.csv").string();
  a.trace_model_csv = (out / "trace_model.csv").string();
  a.baselines_csv = (out / "baselines.csv").string();
  a.summary_csv = (out / "summary.csv").string();
  return a;
}

inline SnrProcess snr_process_from(const RunConfig& cfg) {
  if (cfg.snr_process == "fixed") return SnrProcess::fixed(cfg.snr_mean_db);
  if (cfg.snr_process == "gauss")
    return SnrProcess::gaussian(cfg.snr_mean_db, cfg.snr_stddev_db);
  throw ConfigError("config: controller.snr_process must be fixed or gauss");
}

inline void stage_gen_data(const RunConfig& cfg, const PipelineArtifacts& a) {
  std::filesystem::create_directories(cfg.data_dir);
  ToyDatasetSpec spec = cfg.dataset_spec();
  save_dataset(a.train_pack, generate_toy_train(spec));
  save_dataset(a.test_pack, generate_toy_test(spec));
}

inline DjsccModel stage_pretrain(const RunConfig& cfg, const PipelineArtifacts& a) {
  std::filesystem::create_directories(cfg.out_dir);
  Dataset train = load_dataset(a.train_pack);
  DjsccModel model;
  model.init_params(cfg.model, cfg.r_grid, RngStream(cfg.seed, "init"));
  csv::Writer metrics(a.pretrain_metrics, metrics_header(cfg.model.split));
  TrainResult res = train_backbone(model, train, cfg.train, &metrics);
  if (res.diverged) {
    save_model(a.pretrained_ckpt, model);
    std::ofstream(a.pretrained_ckpt + ".failed") << res.diagnostic << "\n";
    throw StageError("pretrain", res.diagnostic);
  }
  save_model(a.pretrained_ckpt, model);
  return model;
}

inline void stage_finetune(const RunConfig& cfg, const PipelineArtifacts& a, DjsccModel& model) {
  Dataset train = load_dataset(a.train_pack);
  csv::Writer metrics(a.train_metrics, metrics_header(cfg.model.split));
  TrainResult res = train_djscc(model, train, cfg.train, &metrics);
  save_model(a.model_ckpt, model);
  if (res.diverged) {
    std::ofstream(a.model_ckpt + ".failed") << res.diagnostic << "\n";
    throw StageError("djscc-finetune", res.diagnostic);
  }
}

inline ProxyTable stage_build_proxy(const RunConfig& cfg, const PipelineArtifacts& a,
                                    DjsccModel& model) {
  Dataset test = load_dataset(a.test_pack);
  ProxyTable table = build_proxy(model, test, cfg.r_grid, cfg.alpha_grid, cfg.snr_bins_db,
                                 cfg.seed, cfg.proxy_limit);
  save_proxy_csv(a.proxy_csv, table);
  return table;
}

inline TuneSummary stage_tune(const RunConfig& cfg, const PipelineArtifacts& a,
                              const ProxyTable& table) {
  SnrProcess process = snr_process_from(cfg);
  TuneSummary best = tune_hyperparams(table, cfg.v_grid, cfg.mu_grid, cfg.rho_th, process,
                                      cfg.horizon, cfg.window, cfg.tune_runs, cfg.seed);
  csv::Writer w(a.tune_csv, {"rho_th", "V", "mu", "feasible", "window_rho", "window_acc"});
  w.write_row({csv::num(cfg.rho_th), csv::num(best.V), csv::num(best.mu),
               best.feasible ? "1" : "0", csv::num(best.window_rho),
               csv::num(best.window_acc)});
  return best;
}

inline void stage_run_controller(const RunConfig& cfg, const PipelineArtifacts& a,
                                 const ProxyTable& table, const TuneSummary& tuned,
                                 DjsccModel& model) {
  SnrProcess process = snr_process_from(cfg);
  ControllerParams params{tuned.V, tuned.mu, cfg.rho_th};
  SlotTrace proxy_trace = run_controller(table, process, params, cfg.horizon, cfg.seed, 0);
  save_trace_csv(a.trace_csv, proxy_trace);
  if (cfg.controller_eval_slots > 0) {
    Dataset test = load_dataset(a.test_pack);
    SlotTrace model_trace = run_controller(table, process, params, cfg.controller_eval_slots,
                                           cfg.seed, 1, &model, &test);
    save_trace_csv(a.trace_model_csv, model_trace);
  }
}

inline void stage_baselines(const RunConfig& cfg, const PipelineArtifacts& a,
                            DjsccModel& classifier) {
  Dataset test = load_dataset(a.test_pack);
  csv::Writer w(a.baselines_csv, {"scheme", "q", "rho", "snr_db", "accuracy"});
  const double p = static_cast<double>(cfg.model.input_dim());
  for (BaselineScheme scheme : {BaselineScheme::kResize, BaselineScheme::kCodec})
    for (double rho : cfg.baseline_rho_grid) {
      double q = rho * p;
      double acc = digital_baseline_accuracy(test, q, cfg.baseline_snr_db, scheme, classifier,
                                             nullptr, cfg.eval_limit);
      w.write_row({baseline_scheme_name(scheme), csv::num(q), csv::num(rho),
                   csv::num(cfg.baseline_snr_db), csv::num(acc)});
    }
}

inline void stage_summary(const RunConfig& cfg, const PipelineArtifacts& a,
                          const ProxyTable& table) {
  csv::Writer w(a.summary_csv, {"regime", "r", "alpha", "snr_db", "rho", "accuracy"});
  for (std::size_t ri = 0; ri < table.r_grid.size(); ++ri)
    for (std::size_t ai = 0; ai < table.alpha_grid.size(); ++ai)
      for (std::size_t si = 0; si < table.snr_bins_db.size(); ++si)
        w.write_row({cfg.train.regime, csv::num(table.r_grid[ri]),
                     csv::num(table.alpha_grid[ai]), csv::num(table.snr_bins_db[si]),
                     csv::num(table.rho_hat(ri, ai, si)),
                     csv::num(table.cell(ri, ai, si).accuracy)});
}

// Runs every stage in order. Throws StageError naming the failed stage, or
// InfeasibleConstraint when no (V, mu) cell meets the long-term constraint.
inline void run_pipeline(const RunConfig& cfg) {
  PipelineArtifacts a = pipeline_paths(cfg);
  auto guard = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const StageError&) {
      throw;
    } catch (const InfeasibleConstraint&) {
      throw;
    } catch (const std::exception& ex) {
      throw StageError(stage, ex.what());
    }
  };
  guard("gen-data", [&] { stage_gen_data(cfg, a); return 0; });
  DjsccModel model = guard("pretrain", [&] { return stage_pretrain(cfg, a); });
  guard("djscc-finetune", [&] { stage_finetune(cfg, a, model); return 0; });
  ProxyTable table = guard("build-proxy", [&] { return stage_build_proxy(cfg, a, model); });
  TuneSummary tuned = guard("tune", [&] { return stage_tune(cfg, a, table); });
  if (!tuned.feasible)
    throw InfeasibleConstraint("no (V, mu) configuration satisfies rho_th = " +
                               std::to_string(cfg.rho_th));
  guard("run-controller",
        [&] { stage_run_controller(cfg, a, table, tuned, model); return 0; });
  DjsccModel pretrained = guard("baselines", [&] { return load_model(a.pretrained_ckpt); });
  guard("baselines", [&] { stage_baselines(cfg, a, pretrained); return 0; });
  guard("summary", [&] { stage_summary(cfg, a, table); return 0; });
}

// Per (image, alpha, block): one retained/discarded flag per token, written
// as one 4-column CSV per alpha value (sample_id, block_index, token_index,
// mask_value).
inline void export_masks(DjsccModel& model, const Dataset& ds,
                         const std::vector<double>& alpha_list, double r, double snr_db,
                         const std::string& out_dir, std::uint64_t seed,
                         std::size_t limit = 0) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::size_t n = (limit == 0) ? ds.size() : std::min(limit, ds.size());
  for (double alpha : alpha_list) {
    char name[64];
    std::snprintf(name, sizeof(name), "masks_alpha%g.csv", alpha);
    csv::Writer w((fs::path(out_dir) / name).string(),
                  {"sample_id", "block_index", "token_index", "mask_value"});
    for (std::size_t i = 0; i < n; ++i) {
      ChannelDraw draw =
          draw_channel(ChannelMode::kAwgn, snr_db, RngStream(seed, "channel/masks", i));
      HardForward fwd = djscc_hard_forward(model, to_patches(ds.images[i], model.cfg), alpha, r,
                                           draw);
      for (std::size_t l = 0; l < fwd.block_masks.size(); ++l)
        for (std::size_t j = 0; j < fwd.block_masks[l].size(); ++j)
          w.write_row({csv::num(i), csv::num(l + 1), csv::num(j),
                       csv::num(fwd.block_masks[l][j])});
    }
  }
}

}  // namespace tokcom
