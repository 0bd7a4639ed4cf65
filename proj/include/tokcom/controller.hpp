// Lyapunov drift-plus-penalty controller: proxy accuracy table, virtual
// queue, per-slot exhaustive minimization of -V*Lambda + Z*rho over the
// feasible (r, alpha) set, the control loop, and the (V, mu) grid tuner.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/csv.hpp"
#include "tokcom/trainer.hpp"

namespace tokcom {

struct Gamma {
  double r = 0.0;
  double alpha = 0.0;
};

struct ProxyCell {
  double accuracy = 0.0;
  double mean_n_alpha = 0.0;
};

struct ProxyTable {
  std::vector<double> r_grid, alpha_grid, snr_bins_db;
  std::vector<std::size_t> symbol_dims;  // o_r per ratio
  std::size_t input_dim = 0;             // p
  std::vector<ProxyCell> cells;           // [r][alpha][snr] flattened

  std::size_t index(std::size_t ri, std::size_t ai, std::size_t si) const {
    return (ri * alpha_grid.size() + ai) * snr_bins_db.size() + si;
  }
  const ProxyCell& cell(std::size_t ri, std::size_t ai, std::size_t si) const {
    return cells[index(ri, ai, si)];
  }

  double rho_hat(std::size_t ri, std::size_t ai, std::size_t si) const {
    return cell(ri, ai, si).mean_n_alpha * static_cast<double>(symbol_dims[ri]) /
           static_cast<double>(input_dim);
  }

  // Nearest SNR bin; exact midpoints resolve to the lower bin; queries beyond
  // the grid clamp to the edge.
  std::size_t snr_bin(double snr_db) const {
    std::size_t best = 0;
    double best_d = std::fabs(snr_db - snr_bins_db[0]);
    for (std::size_t i = 1; i < snr_bins_db.size(); ++i) {
      double d = std::fabs(snr_db - snr_bins_db[i]);
      if (d < best_d) {
        best = i;
        best_d = d;
      }
    }
    return best;
  }

  std::size_t ratio_index(double r) const {
    for (std::size_t i = 0; i < r_grid.size(); ++i)
      if (std::fabs(r_grid[i] - r) < 1e-12) return i;
    throw std::invalid_argument("ProxyTable: ratio " + std::to_string(r) + " not on grid");
  }
  std::size_t alpha_index(double a) const {
    for (std::size_t i = 0; i < alpha_grid.size(); ++i)
      if (std::fabs(alpha_grid[i] - a) < 1e-12) return i;
    throw std::invalid_argument("ProxyTable: alpha " + std::to_string(a) + " not on grid");
  }

  double min_rho_hat() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t ri = 0; ri < r_grid.size(); ++ri)
      for (std::size_t ai = 0; ai < alpha_grid.size(); ++ai)
        best = std::min(best, rho_hat(ri, ai, 0));
    return best;
  }
};

// Evaluates every (r, alpha, SNR-bin) combination on the dataset with the
// channel fixed at the bin's SNR.
inline ProxyTable build_proxy(DjsccModel& model, const Dataset& ds,
                              const std::vector<double>& r_grid,
                              const std::vector<double>& alpha_grid,
                              const std::vector<double>& snr_bins_db, std::uint64_t seed,
                              std::size_t limit = 0) {
  if (ds.size() == 0) throw std::invalid_argument("build_proxy: empty dataset");
  if (r_grid.empty() || alpha_grid.empty() || snr_bins_db.empty())
    throw std::invalid_argument("build_proxy: empty grid");
  ProxyTable t;
  t.r_grid = r_grid;
  t.alpha_grid = alpha_grid;
  t.snr_bins_db = snr_bins_db;
  t.input_dim = model.cfg.input_dim();
  for (double r : r_grid) t.symbol_dims.push_back(model.bank.at_ratio(r).out_dim);
  t.cells.resize(r_grid.size() * alpha_grid.size() * snr_bins_db.size());
  for (std::size_t ri = 0; ri < r_grid.size(); ++ri)
    for (std::size_t ai = 0; ai < alpha_grid.size(); ++ai)
      for (std::size_t si = 0; si < snr_bins_db.size(); ++si) {
        SnrSpec snr{ChannelMode::kAwgn, snr_bins_db[si]};
        std::uint64_t cell_seed =
            detail::mix64(seed ^ detail::mix64(t.index(ri, ai, si) + 0x9d1ULL));
        EvalResult ev = evaluate(model, ds, alpha_grid[ai], r_grid[ri], snr, cell_seed, limit);
        t.cells[t.index(ri, ai, si)] = ProxyCell{ev.accuracy, ev.mean_n_alpha};
      }
  return t;
}

struct LookupResult {
  double accuracy = 0.0;
  double rho_hat = 0.0;
};

inline LookupResult lookup(const ProxyTable& t, Gamma g, double snr_db) {
  std::size_t ri = t.ratio_index(g.r);
  std::size_t ai = t.alpha_index(g.alpha);
  std::size_t si = t.snr_bin(snr_db);
  return LookupResult{t.cell(ri, ai, si).accuracy, t.rho_hat(ri, ai, si)};
}

// Exact minimizer of -V * Lambda(gamma, SNR) + Z * rho_hat(gamma) by full
// enumeration. Ties break toward smaller rho_hat, then smaller r, then
// smaller alpha.
inline Gamma per_slot_argmin(const ProxyTable& t, double Z, double V, double snr_db) {
  if (t.cells.empty()) throw std::invalid_argument("per_slot_argmin: empty feasible set");
  std::size_t si = t.snr_bin(snr_db);
  bool have = false;
  double best_score = 0.0, best_rho = 0.0;
  Gamma best{};
  for (std::size_t ri = 0; ri < t.r_grid.size(); ++ri)
    for (std::size_t ai = 0; ai < t.alpha_grid.size(); ++ai) {
      double rho = t.rho_hat(ri, ai, si);
      double score = -V * t.cell(ri, ai, si).accuracy + Z * rho;
      bool better = false;
      if (!have) {
        better = true;
      } else if (score != best_score) {
        better = score < best_score;
      } else if (rho != best_rho) {
        better = rho < best_rho;
      } else if (t.r_grid[ri] != best.r) {
        better = t.r_grid[ri] < best.r;
      } else {
        better = t.alpha_grid[ai] < best.alpha;
      }
      if (better) {
        have = true;
        best_score = score;
        best_rho = rho;
        best = Gamma{t.r_grid[ri], t.alpha_grid[ai]};
      }
    }
  return best;
}

// Z' = max(0, Z + mu * (rho - rho_th)).
inline double queue_update(double Z, double realized_rho, double rho_th, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("queue_update: mu must be positive");
  return std::max(0.0, Z + mu * (realized_rho - rho_th));
}

struct ControllerParams {
  double V = 100.0;
  double mu = 10.0;
  double rho_th = 0.05;
};

struct SnrProcess {
  enum class Kind { kFixed, kGaussian } kind = Kind::kFixed;
  double mean_db = 10.0;
  double stddev_db = 0.0;

  static SnrProcess fixed(double db) { return SnrProcess{Kind::kFixed, db, 0.0}; }
  static SnrProcess gaussian(double mean_db, double stddev_db) {
    return SnrProcess{Kind::kGaussian, mean_db, stddev_db};
  }

  double sample(RngStream& rng) const {
    return kind == Kind::kFixed ? mean_db : rng.normal(mean_db, stddev_db);
  }
};

struct SlotRecord {
  std::uint64_t t = 0;
  double snr_db = 0.0;
  double r = 0.0, alpha = 0.0;
  double rho_hat = 0.0, rho_real = 0.0;
  double acc_proxy = 0.0, acc_real = -1.0;  // -1 when no model is attached
  double Z = 0.0;
};

struct SlotTrace {
  std::vector<SlotRecord> slots;
  double final_Z = 0.0;

  double trailing_mean_rho(std::size_t window) const {
    std::size_t n = std::min(window, slots.size());
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = slots.size() - n; i < slots.size(); ++i) s += slots[i].rho_real;
    return s / static_cast<double>(n);
  }

  double trailing_mean_proxy_acc(std::size_t window) const {
    std::size_t n = std::min(window, slots.size());
    if (n == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = slots.size() - n; i < slots.size(); ++i) s += slots[i].acc_proxy;
    return s / static_cast<double>(n);
  }
};

// Observe SNR(t), minimize the per-slot objective, update the virtual queue.
// With a model attached, each slot classifies one dataset sample with the
// chosen (alpha, r) and the queue uses the realized per-sample rho; otherwise
// the queue uses the table estimate.
inline SlotTrace run_controller(const ProxyTable& table, const SnrProcess& process,
                                const ControllerParams& params, std::size_t T,
                                std::uint64_t seed, std::uint64_t run_instance = 0,
                                DjsccModel* model = nullptr, const Dataset* ds = nullptr,
                                bool record_slots = true) {
  if (T < 1) throw std::invalid_argument("run_controller: T must be at least 1");
  SlotTrace trace;
  if (record_slots) trace.slots.reserve(T);
  RngStream snr_rng(seed, "controller/snr", run_instance);
  RngStream data_rng(seed, "controller/data", run_instance);
  double Z = 0.0;
  for (std::uint64_t t = 0; t < T; ++t) {
    double snr_db = process.sample(snr_rng);
    Gamma g = per_slot_argmin(table, Z, params.V, snr_db);
    LookupResult lk = lookup(table, g, snr_db);
    SlotRecord rec;
    rec.t = t;
    rec.snr_db = snr_db;
    rec.r = g.r;
    rec.alpha = g.alpha;
    rec.rho_hat = lk.rho_hat;
    rec.acc_proxy = lk.accuracy;
    rec.rho_real = lk.rho_hat;
    if (model != nullptr && ds != nullptr && ds->size() > 0) {
      std::size_t i = data_rng.uniform_index(ds->size());
      ChannelDraw draw = draw_channel(ChannelMode::kAwgn, snr_db,
                                      RngStream(seed, "controller/channel", run_instance * T + t));
      HardForward fwd =
          djscc_hard_forward(*model, to_patches(ds->images[i], model->cfg), g.alpha, g.r, draw);
      rec.rho_real = fwd.rho;
      rec.acc_real = (fwd.predicted == ds->labels[i]) ? 1.0 : 0.0;
    }
    Z = queue_update(Z, rec.rho_real, params.rho_th, params.mu);
    rec.Z = Z;
    if (record_slots) trace.slots.push_back(rec);
  }
  trace.final_Z = Z;
  return trace;
}

struct TuneSummary {
  double V = 0.0, mu = 0.0;
  bool feasible = false;
  double window_rho = 0.0;
  double window_acc = 0.0;
};

// For each (V, mu) pair: run the horizon, average the final-window mean rho
// and proxy accuracy over `runs` independent runs, then pick the
// accuracy-maximizing feasible pair. With no feasible pair, returns the
// minimum-violation one flagged infeasible.
inline TuneSummary tune_hyperparams(const ProxyTable& table, const std::vector<double>& v_grid,
                                    const std::vector<double>& mu_grid, double rho_th,
                                    const SnrProcess& process, std::size_t T, std::size_t window,
                                    std::size_t runs, std::uint64_t seed) {
  if (v_grid.empty() || mu_grid.empty())
    throw std::invalid_argument("tune_hyperparams: empty grid");
  std::size_t effective_runs = (process.kind == SnrProcess::Kind::kFixed) ? 1 : runs;
  TuneSummary best_feasible, best_violation;
  double best_violation_gap = std::numeric_limits<double>::infinity();
  bool have_feasible = false;
  for (double V : v_grid)
    for (double mu : mu_grid) {
      ControllerParams params{V, mu, rho_th};
      double rho_sum = 0.0, acc_sum = 0.0;
      for (std::size_t run = 0; run < effective_runs; ++run) {
        SlotTrace tr = run_controller(table, process, params, T, seed, run);
        rho_sum += tr.trailing_mean_rho(window);
        acc_sum += tr.trailing_mean_proxy_acc(window);
      }
      double mean_rho = rho_sum / static_cast<double>(effective_runs);
      double mean_acc = acc_sum / static_cast<double>(effective_runs);
      TuneSummary cand{V, mu, mean_rho <= rho_th, mean_rho, mean_acc};
      if (cand.feasible) {
        if (!have_feasible || cand.window_acc > best_feasible.window_acc) {
          best_feasible = cand;
          have_feasible = true;
        }
      } else if (mean_rho - rho_th < best_violation_gap) {
        best_violation_gap = mean_rho - rho_th;
        best_violation = cand;
      }
    }
  return have_feasible ? best_feasible : best_violation;
}

inline void save_proxy_csv(const std::string& path, const ProxyTable& t) {
  csv::Writer w(path, {"r", "alpha", "snr_db", "accuracy", "mean_n_alpha"});
  for (std::size_t ri = 0; ri < t.r_grid.size(); ++ri)
    for (std::size_t ai = 0; ai < t.alpha_grid.size(); ++ai)
      for (std::size_t si = 0; si < t.snr_bins_db.size(); ++si) {
        const ProxyCell& c = t.cell(ri, ai, si);
        w.write_row({csv::num(t.r_grid[ri]), csv::num(t.alpha_grid[ai]),
                     csv::num(t.snr_bins_db[si]), csv::num(c.accuracy),
                     csv::num(c.mean_n_alpha)});
      }
}

// Rebuilds a table from its CSV; grid order follows first appearance. Symbol
// dims and the input dimensionality come from the model configuration.
inline ProxyTable load_proxy_csv(const std::string& path, const ModelConfig& cfg) {
  csv::Table t = csv::read(path);
  std::size_t rc = t.column("r"), ac = t.column("alpha"), sc = t.column("snr_db");
  std::size_t accc = t.column("accuracy"), nc = t.column("mean_n_alpha");
  ProxyTable table;
  table.input_dim = cfg.input_dim();
  auto find_or_add = [](std::vector<double>& grid, double v) {
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (std::fabs(grid[i] - v) < 1e-12) return i;
    grid.push_back(v);
    return grid.size() - 1;
  };
  struct Entry {
    std::size_t ri, ai, si;
    ProxyCell cell;
  };
  std::vector<Entry> entries;
  for (const auto& row : t.rows) {
    Entry e;
    e.ri = find_or_add(table.r_grid, std::stod(row[rc]));
    e.ai = find_or_add(table.alpha_grid, std::stod(row[ac]));
    e.si = find_or_add(table.snr_bins_db, std::stod(row[sc]));
    e.cell = ProxyCell{std::stod(row[accc]), std::stod(row[nc])};
    entries.push_back(e);
  }
  for (double r : table.r_grid)
    table.symbol_dims.push_back(CodecParams::symbol_dim(r, cfg.embed_dim));
  table.cells.resize(table.r_grid.size() * table.alpha_grid.size() * table.snr_bins_db.size());
  for (const Entry& e : entries) table.cells[table.index(e.ri, e.ai, e.si)] = e.cell;
  return table;
}

inline void save_trace_csv(const std::string& path, const SlotTrace& trace) {
  csv::Writer w(path, {"t", "snr_db", "r", "alpha", "rho_hat", "rho_real", "acc_proxy",
                       "acc_real", "Z"});
  for (const SlotRecord& s : trace.slots)
    w.write_row({csv::num(static_cast<std::size_t>(s.t)), csv::num(s.snr_db), csv::num(s.r),
                 csv::num(s.alpha), csv::num(s.rho_hat), csv::num(s.rho_real),
                 csv::num(s.acc_proxy), csv::num(s.acc_real), csv::num(s.Z)});
}

}  // namespace tokcom
