#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "tokcom/checkpoint.hpp"
#include "tokcom/trainer.hpp"

using namespace tokcom;
namespace fs = std::filesystem;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.channels = 3;
  cfg.height = 8;
  cfg.width = 8;
  cfg.patch = 4;  // 4 patch tokens, 6 rows total
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.dim_k = 4;
  cfg.dim_v = 4;
  cfg.blocks = 3;
  cfg.split = 2;  // two adaptive encoder blocks, one decoder block
  cfg.classes = 3;
  cfg.ffn_hidden = 16;
  return cfg;
}

ToyDatasetSpec toy_data_spec(const ModelConfig& cfg, std::size_t per_class,
                             std::size_t test_per_class = 2) {
  ToyDatasetSpec s;
  s.classes = cfg.classes;
  s.train_per_class = per_class;
  s.test_per_class = test_per_class;
  s.height = cfg.height;
  s.width = cfg.width;
  s.channels = cfg.channels;
  s.clutter_dots = 2;
  s.seed = 5;
  return s;
}

}  // namespace

TEST_CASE("budget and snr sampling") {
  SECTION("1e5 budget draws have mean 0.5 and support (0, 1]") {
    RngStream rng(3, "budget");
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
      double a = sample_budget(rng);
      REQUIRE(a > 0.0);
      REQUIRE(a <= 1.0);
      sum += a;
    }
    CHECK(sum / 1e5 == Catch::Approx(0.5).margin(0.005));
  }
  SECTION("fixed seed reproduces the budget sequence") {
    RngStream a(9, "budget"), b(9, "budget");
    for (int i = 0; i < 50; ++i) CHECK(sample_budget(a) == sample_budget(b));
  }
  SECTION("noiseless regime disables the channel") {
    TrainConfig cfg;
    cfg.regime = "noiseless";
    RngStream rng(1, "channel");
    SnrSpec s = sample_training_snr(cfg, rng);
    CHECK(s.mode == ChannelMode::kNoiseless);
  }
  SECTION("robust draws stay inside [-20, 20] with mean near 0") {
    TrainConfig cfg;
    RngStream rng(2, "channel");
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
      SnrSpec s = sample_training_snr(cfg, rng);
      REQUIRE(s.snr_db >= -20.0);
      REQUIRE(s.snr_db <= 20.0);
      sum += s.snr_db;
    }
    CHECK(sum / 1e5 == Catch::Approx(0.0).margin(0.2));
  }
}

TEST_CASE("loss assembly") {
  ModelConfig cfg = toy_config();
  DjsccModel model;
  model.init_params(cfg, {0.5}, RngStream(11, "init"));
  RngStream img_rng(4, "img");
  std::vector<double> img(cfg.input_dim());
  for (double& v : img) v = img_rng.uniform(-1.0, 1.0);
  Tensor patches = patchify(img, cfg);
  ChannelDraw noiseless = draw_channel(ChannelMode::kNoiseless, 0.0, RngStream(1, "c"));

  SECTION("zero penalty weights reduce the loss to cross-entropy") {
    BudgetSpec spec;
    spec.alpha = 0.4;
    spec.lambda_s = 0.0;
    spec.lambda_r = 0.0;
    ad::Tape tape;
    auto fwd = djscc_soft_forward(tape, model, patches, 1, spec, 0.5, noiseless);
    CHECK(tape.value(fwd.loss).value() == tape.value(fwd.ce).value());
  }
  SECTION("on-budget masks contribute zero penalty (mean statistic)") {
    // Pick alpha inside the epsilon band around the observed mean mask.
    BudgetSpec spec;
    spec.statistic = BudgetStatistic::kMean;
    ad::Tape probe;
    spec.alpha = 0.99;
    auto probe_fwd = djscc_soft_forward(probe, model, patches, 1, spec, 0.5, noiseless);
    double mean = probe.value(probe_fwd.block_mean_masks.back()).value();
    spec.alpha = mean;
    spec.epsilon = 0.05;
    ad::Tape tape;
    auto fwd = djscc_soft_forward(tape, model, patches, 1, spec, 0.5, noiseless);
    CHECK(tape.value(fwd.budget_loss).value() == 0.0);
    CHECK(tape.value(fwd.sparsity_loss).value() == 0.0);
    CHECK(tape.value(fwd.loss).value() == tape.value(fwd.ce).value());
  }
  SECTION("count statistic presses fresh fractional masks toward saturation") {
    BudgetSpec spec;  // defaults: count statistic
    spec.alpha = 1.0;
    ad::Tape tape;
    auto fwd = djscc_soft_forward(tape, model, patches, 1, spec, 0.5, noiseless);
    // No token is discarded at init, but mid-range mask values are counted as
    // partially alive, so alpha = 1 exerts upward pressure on the margins.
    double bl = tape.value(fwd.budget_loss).value();
    CHECK(bl >= 0.0);
    CHECK(bl < 2.0);  // two band penalties, each at most 1 - eps
    CHECK(discretize_mask(tape.value(fwd.final_mask)).size() == cfg.seq_len());
  }
  SECTION("default weights are lambda_s = 2, lambda_r = 1") {
    TrainConfig tc;
    CHECK(tc.lambda_s == 2.0);
    CHECK(tc.lambda_r == 1.0);
    BudgetSpec bs;
    CHECK(bs.lambda_s == 2.0);
    CHECK(bs.lambda_r == 1.0);
  }
}

TEST_CASE("full loss gradients match finite differences on the toy model") {
  ModelConfig cfg = toy_config();
  DjsccModel model;
  model.init_params(cfg, {0.5}, RngStream(13, "init"));
  RngStream img_rng(6, "img");
  std::vector<double> img(cfg.input_dim());
  for (double& v : img) v = img_rng.uniform(-1.0, 1.0);
  Tensor patches = patchify(img, cfg);

  BudgetSpec spec;
  spec.alpha = 0.7;  // keeps the budget penalty active at init
  std::vector<ad::Parameter*> params;
  model.for_each_param([&](ad::Parameter& p) { params.push_back(&p); });

  std::vector<double> point;
  for (ad::Parameter* p : params)
    for (std::size_t k = 0; k < p->value.size(); ++k) point.push_back(p->value[k]);

  auto fn = [&](const std::vector<double>& x, std::vector<double>* grad_out) -> double {
    std::size_t off = 0;
    for (ad::Parameter* p : params) {
      for (std::size_t k = 0; k < p->value.size(); ++k) p->value[k] = x[off + k];
      off += p->value.size();
      p->zero_grad();
    }
    ChannelDraw noiseless = draw_channel(ChannelMode::kNoiseless, 0.0, RngStream(1, "c"));
    ad::Tape tape;
    auto fwd = djscc_soft_forward(tape, model, patches, 2, spec, 0.5, noiseless);
    double v = tape.value(fwd.loss).value();
    if (grad_out != nullptr) {
      tape.backward(fwd.loss, Tensor::scalar(1.0));
      grad_out->clear();
      for (ad::Parameter* p : params)
        for (std::size_t k = 0; k < p->grad.size(); ++k) grad_out->push_back(p->grad[k]);
    }
    return v;
  };

  INFO("parameter count " << point.size());
  ad::FdResult res = ad::finite_difference_check(fn, point, 1e-5);
  INFO("max rel error " << res.max_rel_error << " at " << res.worst_index);
  CHECK(res.passed(1e-4));
}

TEST_CASE("one epoch on a small separable set lowers the loss") {
  ModelConfig cfg = toy_config();
  ToyDatasetSpec dspec = toy_data_spec(cfg, 3, 1);  // 9 train samples
  Dataset train = generate_toy_train(dspec);

  DjsccModel model;
  model.init_params(cfg, {0.5}, RngStream(21, "init"));

  auto mean_ce = [&](DjsccModel& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      ChannelDraw nl = draw_channel(ChannelMode::kNoiseless, 0.0, RngStream(1, "c"));
      BudgetSpec bs;
      bs.alpha = 1.0;
      bs.lambda_s = 0.0;
      bs.lambda_r = 0.0;
      ad::Tape tape;
      auto fwd = djscc_soft_forward(tape, m, to_patches(train.images[i], cfg), train.labels[i],
                                    bs, 0.5, nl);
      s += tape.value(fwd.ce).value();
    }
    return s / static_cast<double>(train.size());
  };

  double before = mean_ce(model);
  TrainConfig tc;
  tc.pretrain_epochs = 0;
  tc.epochs = 1;
  tc.batch_size = 3;
  tc.lambda_s = 0.0;
  tc.lambda_r = 0.0;
  tc.regime = "noiseless";
  tc.seed = 21;
  TrainResult res = train_djscc(model, train, tc);
  CHECK_FALSE(res.diverged);
  double after = mean_ce(model);
  INFO("loss before " << before << " after " << after);
  CHECK(after < before);
}

TEST_CASE("identical seeds give byte-identical checkpoints") {
  ModelConfig cfg = toy_config();
  ToyDatasetSpec dspec = toy_data_spec(cfg, 2, 1);
  Dataset train = generate_toy_train(dspec);
  fs::path tmp = fs::temp_directory_path() / ("tokcom_trainer_" + std::to_string(::getpid()));
  fs::create_directories(tmp);

  auto run = [&](const std::string& name) {
    DjsccModel model;
    model.init_params(cfg, {0.25, 0.5}, RngStream(33, "init"));
    TrainConfig tc;
    tc.pretrain_epochs = 1;
    tc.epochs = 1;
    tc.batch_size = 2;
    tc.seed = 33;
    train_backbone(model, train, tc);
    train_djscc(model, train, tc);
    save_model((tmp / name).string(), model);
  };
  run("a.ckpt");
  run("b.ckpt");
  std::ifstream fa(tmp / "a.ckpt", std::ios::binary), fb(tmp / "b.ckpt", std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ba == bb);
  CHECK_FALSE(ba.empty());
  fs::remove_all(tmp);
}

TEST_CASE("evaluation of an untrained model sits at chance level") {
  ModelConfig cfg = toy_config();
  cfg.classes = 10;
  ToyDatasetSpec dspec = toy_data_spec(cfg, 1, 10);  // 100 test samples
  dspec.classes = 10;
  Dataset test = generate_toy_test(dspec);
  DjsccModel model;
  model.init_params(cfg, {0.5}, RngStream(41, "init"));
  EvalResult res = evaluate(model, test, 1.0, 0.5, SnrSpec{ChannelMode::kAwgn, 10.0}, 7);
  CHECK(res.accuracy >= 0.0);
  CHECK(res.accuracy <= 0.35);  // 10 balanced classes
  CHECK(res.mean_rho > 0.0);
  CHECK(res.mean_n_alpha > 0.0);
}

TEST_CASE("divergence is detected and reported") {
  ModelConfig cfg = toy_config();
  ToyDatasetSpec dspec = toy_data_spec(cfg, 2, 1);
  Dataset train = generate_toy_train(dspec);
  DjsccModel model;
  model.init_params(cfg, {0.5}, RngStream(51, "init"));
  // poison the head bias so the cross-entropy term goes non-finite
  model.vit.head_b.value[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.seed = 51;
  TrainResult res = train_djscc(model, train, tc);
  CHECK(res.diverged);
  CHECK(res.diagnostic.find("non-finite") != std::string::npos);
}
