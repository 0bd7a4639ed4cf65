// Run configuration: one flat key=value file plus CLI overrides. Unknown keys
// are configuration errors.
#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokcom/dataset.hpp"
#include "tokcom/trainer.hpp"
#include "tokcom/vit.hpp"

namespace tokcom {

struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_dir = "data";
  std::string out_dir = "out";

  ModelConfig model;
  std::size_t data_classes = 10;
  std::size_t data_train_per_class = 60;
  std::size_t data_test_per_class = 20;
  std::size_t data_clutter_dots = 8;
  TrainConfig train;

  std::vector<double> r_grid = {0.005, 0.1, 0.15, 0.25, 0.5};
  std::vector<double> alpha_grid = {0.1, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> snr_bins_db = {-20, -15, -10, -5, 0, 5, 10, 15, 20};

  std::vector<double> v_grid = {1, 10, 100, 1000, 10000};
  std::vector<double> mu_grid = {1, 10, 100};
  double rho_th = 0.05;
  std::size_t horizon = 100000;
  std::size_t window = 1000;
  std::size_t tune_runs = 5;
  std::string snr_process = "gauss";  // "fixed" | "gauss"
  double snr_mean_db = 10.0;
  double snr_stddev_db = 2.5;
  std::size_t controller_eval_slots = 2000;

  double baseline_snr_db = 10.0;
  std::vector<double> baseline_rho_grid = {0.001, 0.0025, 0.005, 0.01, 0.02,
                                           0.05,  0.1,    0.25,  0.5,  1.0};

  std::size_t proxy_limit = 100;  // samples per proxy cell; 0 = whole test set
  std::size_t eval_limit = 0;

  ToyDatasetSpec dataset_spec() const {
    ToyDatasetSpec s;
    s.classes = data_classes;
    s.train_per_class = data_train_per_class;
    s.test_per_class = data_test_per_class;
    s.clutter_dots = data_clutter_dots;
    s.height = model.height;
    s.width = model.width;
    s.channels = model.channels;
    s.seed = seed;
    return s;
  }
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline double cfg_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value '" + v + "' for " + key);
  }
}

inline std::size_t cfg_size(const std::string& key, const std::string& v) {
  double d = cfg_double(key, v);
  if (d < 0 || d != std::floor(d)) throw ConfigError("config: " + key + " must be a non-negative integer");
  return static_cast<std::size_t>(d);
}

inline bool cfg_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " must be true/false");
}

inline std::vector<double> cfg_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (ss >> tok) out.push_back(cfg_double(key, tok));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::cfg_bool;
  using detail::cfg_double;
  using detail::cfg_list;
  using detail::cfg_size;
  if (key == "seed") c.seed = static_cast<std::uint64_t>(cfg_size(key, value));
  else if (key == "data_dir") c.data_dir = value;
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "model.channels") c.model.channels = cfg_size(key, value);
  else if (key == "model.height") c.model.height = cfg_size(key, value);
  else if (key == "model.width") c.model.width = cfg_size(key, value);
  else if (key == "model.patch") c.model.patch = cfg_size(key, value);
  else if (key == "model.embed_dim") c.model.embed_dim = cfg_size(key, value);
  else if (key == "model.heads") c.model.heads = cfg_size(key, value);
  else if (key == "model.dim_k") c.model.dim_k = cfg_size(key, value);
  else if (key == "model.dim_v") c.model.dim_v = cfg_size(key, value);
  else if (key == "model.blocks") c.model.blocks = cfg_size(key, value);
  else if (key == "model.split") c.model.split = cfg_size(key, value);
  else if (key == "model.classes") c.model.classes = cfg_size(key, value);
  else if (key == "model.ffn_hidden") c.model.ffn_hidden = cfg_size(key, value);
  else if (key == "data.classes") c.data_classes = cfg_size(key, value);
  else if (key == "data.train_per_class") c.data_train_per_class = cfg_size(key, value);
  else if (key == "data.test_per_class") c.data_test_per_class = cfg_size(key, value);
  else if (key == "data.clutter_dots") c.data_clutter_dots = cfg_size(key, value);
  else if (key == "train.pretrain_epochs") c.train.pretrain_epochs = cfg_size(key, value);
  else if (key == "train.epochs") c.train.epochs = cfg_size(key, value);
  else if (key == "train.batch_size") c.train.batch_size = cfg_size(key, value);
  else if (key == "train.lr") c.train.lr = cfg_double(key, value);
  else if (key == "train.lambda_s") c.train.lambda_s = cfg_double(key, value);
  else if (key == "train.lambda_r") c.train.lambda_r = cfg_double(key, value);
  else if (key == "train.epsilon") c.train.epsilon = cfg_double(key, value);
  else if (key == "train.regime") c.train.regime = value;
  else if (key == "train.snr_low_db") c.train.snr_low_db = cfg_double(key, value);
  else if (key == "train.snr_high_db") c.train.snr_high_db = cfg_double(key, value);
  else if (key == "train.freeze_backbone") c.train.freeze_backbone = cfg_bool(key, value);
  else if (key == "train.clip_norm") c.train.clip_norm = cfg_double(key, value);
  else if (key == "train.budget_statistic") c.train.budget_statistic = value;
  else if (key == "train.budget_saturation") c.train.budget_saturation = cfg_double(key, value);
  else if (key == "r_grid") c.r_grid = cfg_list(key, value);
  else if (key == "alpha_grid") c.alpha_grid = cfg_list(key, value);
  else if (key == "snr_bins_db") c.snr_bins_db = cfg_list(key, value);
  else if (key == "controller.v_grid") c.v_grid = cfg_list(key, value);
  else if (key == "controller.mu_grid") c.mu_grid = cfg_list(key, value);
  else if (key == "controller.rho_th") c.rho_th = cfg_double(key, value);
  else if (key == "controller.horizon") c.horizon = cfg_size(key, value);
  else if (key == "controller.window") c.window = cfg_size(key, value);
  else if (key == "controller.tune_runs") c.tune_runs = cfg_size(key, value);
  else if (key == "controller.snr_process") c.snr_process = value;
  else if (key == "controller.snr_mean_db") c.snr_mean_db = cfg_double(key, value);
  else if (key == "controller.snr_stddev_db") c.snr_stddev_db = cfg_double(key, value);
  else if (key == "controller.eval_slots") c.controller_eval_slots = cfg_size(key, value);
  else if (key == "baseline.snr_db") c.baseline_snr_db = cfg_double(key, value);
  else if (key == "baseline.rho_grid") c.baseline_rho_grid = cfg_list(key, value);
  else if (key == "proxy.limit") c.proxy_limit = cfg_size(key, value);
  else if (key == "eval.limit") c.eval_limit = cfg_size(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline void load_config_file(RunConfig& c, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key = value");
    apply_config_entry(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  c.train.seed = c.seed;
}

inline void apply_overrides(RunConfig& c, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("config: override '" + kv + "' is not key=value");
    apply_config_entry(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  c.train.seed = c.seed;
}

}  // namespace tokcom
