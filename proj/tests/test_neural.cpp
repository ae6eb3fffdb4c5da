#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "emg2text/ctc.hpp"
#include "emg2text/errors.hpp"
#include "emg2text/neural.hpp"
#include "emg2text/rng.hpp"

using namespace emg2text;
using nn::Matrix;
using nn::Vector;

namespace {

namespace fs = std::filesystem;

feat::FeatureSequence random_features(Rng& rng, uint64_t frames, uint64_t dim) {
  feat::FeatureSequence f;
  f.frames = frames;
  f.frame_dim = dim;
  f.values.resize(frames * dim);
  for (auto& v : f.values) v = rng.next_normal();
  return f;
}

// Iterates every trainable scalar of the model in the same fixed order
// as the library's own tensor traversal.
template <typename Fn>
void for_each_param(nn::AcousticModel& model, nn::Gradients& grads, Fn&& fn) {
  for (size_t l = 0; l < model.gru.size(); ++l) {
    auto dirs = {std::pair{&model.gru[l].fwd, &grads.gru[l].fwd}, std::pair{&model.gru[l].bwd, &grads.gru[l].bwd}};
    for (auto [p, g] : dirs) {
      for (int i = 0; i < p->w.size(); ++i) fn(p->w.data()[i], g->w.data()[i]);
      for (int i = 0; i < p->u.size(); ++i) fn(p->u.data()[i], g->u.data()[i]);
      for (int i = 0; i < p->b.size(); ++i) fn(p->b.data()[i], g->b.data()[i]);
    }
  }
  for (int i = 0; i < model.head_w.size(); ++i) fn(model.head_w.data()[i], grads.head_w.data()[i]);
  for (int i = 0; i < model.head_b.size(); ++i) fn(model.head_b.data()[i], grads.head_b.data()[i]);
}

double ctc_objective(nn::AcousticModel& model, const feat::FeatureSequence& feats,
                     const std::vector<int>& labels) {
  const Matrix log_probs = nn::forward(model, feats);
  return ctc::ctc_loss(log_probs, labels, model.output_dim - 1).loss;
}

}  // namespace

TEST_CASE("forward pass basics") {
  SUBCASE("zero parameters give uniform log probabilities") {
    nn::AcousticModel model = nn::init_model(2, 3, 5, 41, 1);
    for (auto& layer : model.gru)
      for (nn::GruDirection* dir : {&layer.fwd, &layer.bwd}) {
        dir->w.setZero();
        dir->u.setZero();
        dir->b.setZero();
      }
    model.head_w.setZero();
    model.head_b.setZero();
    Rng rng(2);
    const auto feats = random_features(rng, 7, 5);
    const Matrix log_probs = nn::forward(model, feats);
    REQUIRE(log_probs.rows() == 7);
    REQUIRE(log_probs.cols() == 41);
    const double expected = -std::log(41.0);
    for (int t = 0; t < 7; ++t)
      for (int k = 0; k < 41; ++k) CHECK(log_probs(t, k) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("output length equals input length across shapes") {
    Rng rng(3);
    for (uint64_t frames : {1, 2, 9, 33}) {
      nn::AcousticModel model = nn::init_model(1, 4, 6, 5, 7);
      const auto feats = random_features(rng, frames, 6);
      CHECK(nn::forward(model, feats).rows() == static_cast<int>(frames));
    }
  }

  SUBCASE("rows normalize: logsumexp == 0 within 1e-9") {
    Rng rng(5);
    nn::AcousticModel model = nn::init_model(2, 6, 8, 11, 13);
    const auto feats = random_features(rng, 12, 8);
    const Matrix log_probs = nn::forward(model, feats);
    for (int t = 0; t < log_probs.rows(); ++t) {
      const double lse = std::log(log_probs.row(t).array().exp().sum());
      CHECK(std::abs(lse) < 1e-9);
      CHECK(log_probs.row(t).allFinite());
    }
  }

  SUBCASE("dimension mismatch is a parameter error") {
    nn::AcousticModel model = nn::init_model(1, 4, 6, 5, 7);
    Rng rng(5);
    const auto feats = random_features(rng, 4, 7);
    CHECK_THROWS_AS(nn::forward(model, feats), ParamError);
  }

  SUBCASE("hand-set scalar GRU matches the written recurrence") {
    nn::AcousticModel model = nn::init_model(1, 1, 1, 2, 0);
    // Gate order [r; z; n].
    model.gru[0].fwd.w << 0.5, -0.3, 1.0;
    model.gru[0].fwd.u << 0.2, 0.4, -0.5;
    model.gru[0].fwd.b << 0.1, -0.1, 0.05;
    model.gru[0].bwd.w << 0.5, -0.3, 1.0;
    model.gru[0].bwd.u << 0.2, 0.4, -0.5;
    model.gru[0].bwd.b << 0.1, -0.1, 0.05;
    feat::FeatureSequence feats;
    feats.frames = 2;
    feats.frame_dim = 1;
    feats.values = {1.0, -0.5};

    nn::ForwardCache cache;
    nn::forward(model, feats, &cache);
    // Frozen from an independent scalar evaluation of
    //   r = sig(0.5x + 0.2h + 0.1), z = sig(-0.3x + 0.4h - 0.1),
    //   n = tanh(x - 0.5(r*h) + 0.05), h' = z*h + (1-z)*n.
    CHECK(cache.fwd[0].r(0, 0) == doctest::Approx(0.645656306225795).epsilon(1e-6));
    CHECK(cache.fwd[0].z(0, 0) == doctest::Approx(0.401312339887548).epsilon(1e-6));
    CHECK(cache.fwd[0].n(0, 0) == doctest::Approx(0.781806357608774).epsilon(1e-6));
    CHECK(cache.fwd[0].h(0, 0) == doctest::Approx(0.468057818897836).epsilon(1e-6));
    CHECK(cache.fwd[0].h(0, 1) == doctest::Approx(0.036441215058878).epsilon(1e-6));
    // Backward direction processes frame 1 first.
    CHECK(cache.bwd[0].h(0, 1) == doctest::Approx(-0.205676863480101).epsilon(1e-6));
    CHECK(cache.bwd[0].h(0, 0) == doctest::Approx(0.419809134814212).epsilon(1e-6));
  }
}

TEST_CASE("parameter count equals brute-force enumeration") {
  for (int layers : {1, 2, 3}) {
    for (int hidden : {1, 5, 32}) {
      nn::AcousticModel model = nn::init_model(layers, hidden, 17, 6, 0);
      uint64_t expected = 0;
      for (int l = 0; l < layers; ++l) {
        const uint64_t d = l == 0 ? 17 : 2 * static_cast<uint64_t>(hidden);
        expected += 2 * (3ull * hidden * d + 3ull * hidden * hidden + 3ull * hidden);
      }
      expected += 6ull * 2 * hidden + 6;
      CHECK(model.param_count() == expected);
    }
  }
}

TEST_CASE("backward pass") {
  SUBCASE("zero upstream gradient gives zero parameter gradients") {
    Rng rng(11);
    nn::AcousticModel model = nn::init_model(2, 3, 4, 5, 3);
    const auto feats = random_features(rng, 6, 4);
    nn::ForwardCache cache;
    nn::forward(model, feats, &cache);
    const Matrix zero = Matrix::Zero(6, 5);
    nn::Gradients grads = nn::backward(model, cache, zero);
    double total = 0.0;
    for_each_param(model, grads, [&](double&, double& g) { total += std::abs(g); });
    CHECK(total == 0.0);
  }

  SUBCASE("gradient of a batch equals the sum of per-sequence gradients") {
    Rng rng(13);
    nn::AcousticModel model = nn::init_model(1, 3, 4, 5, 5);
    const auto f1 = random_features(rng, 5, 4);
    const auto f2 = random_features(rng, 7, 4);
    nn::ForwardCache c1, c2;
    nn::forward(model, f1, &c1);
    nn::forward(model, f2, &c2);
    Rng grng(17);
    Matrix g1(5, 5), g2(7, 5);
    for (int i = 0; i < g1.size(); ++i) g1.data()[i] = grng.next_normal();
    for (int i = 0; i < g2.size(); ++i) g2.data()[i] = grng.next_normal();

    nn::Gradients sum = nn::backward(model, c1, g1);
    sum.accumulate(nn::backward(model, c2, g2));
    nn::Gradients a = nn::backward(model, c1, g1);
    nn::Gradients b = nn::backward(model, c2, g2);
    a.accumulate(b);
    double max_diff = 0.0;
    for_each_param(model, sum, [&](double&, double&) {});
    for (size_t l = 0; l < sum.gru.size(); ++l) {
      max_diff = std::max(max_diff, (sum.gru[l].fwd.w - a.gru[l].fwd.w).cwiseAbs().maxCoeff());
      max_diff = std::max(max_diff, (sum.gru[l].bwd.u - a.gru[l].bwd.u).cwiseAbs().maxCoeff());
    }
    max_diff = std::max(max_diff, (sum.head_w - a.head_w).cwiseAbs().maxCoeff());
    CHECK(max_diff == 0.0);
  }

  SUBCASE("CTC-through-BiGRU gradients match central finite differences") {
    // Covers layer counts 1..3; h = 1e-5 in double precision.
    Rng rng(19);
    for (int layers : {1, 2, 3}) {
      nn::AcousticModel model = nn::init_model(layers, 3, 4, 4, 23 + layers);
      const auto feats = random_features(rng, 5, 4);
      const std::vector<int> labels = {0, 2, 1};

      nn::ForwardCache cache;
      const Matrix log_probs = nn::forward(model, feats, &cache);
      const auto loss_res = ctc::ctc_loss(log_probs, labels, model.output_dim - 1);
      nn::Gradients analytic = nn::backward(model, cache, loss_res.grad);

      const double h = 1e-5;
      double max_rel = 0.0;
      for_each_param(model, analytic, [&](double& param, double& grad) {
        const double saved = param;
        param = saved + h;
        const double up = ctc_objective(model, feats, labels);
        param = saved - h;
        const double down = ctc_objective(model, feats, labels);
        param = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(fd - grad) / std::max({std::abs(fd), std::abs(grad), 1e-6});
        max_rel = std::max(max_rel, rel);
      });
      CHECK(max_rel < 1e-4);
    }
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves by roughly -lr*sign(g)") {
    nn::AcousticModel model = nn::init_model(1, 2, 3, 4, 31);
    const nn::AcousticModel before = model;
    nn::Gradients grads;
    grads.set_zero(model);
    grads.head_w.setConstant(0.37);
    nn::AdamState adam;
    adam.init(model);
    adam.step(model, grads, 1e-3, 0.0);
    for (int i = 0; i < model.head_w.size(); ++i)
      CHECK(model.head_w.data()[i] - before.head_w.data()[i] == doctest::Approx(-1e-3).epsilon(1e-4));
    // Untouched tensors stay put.
    CHECK((model.gru[0].fwd.w - before.gru[0].fwd.w).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("zero gradients and zero decay leave parameters unchanged") {
    nn::AcousticModel model = nn::init_model(1, 2, 3, 4, 37);
    const nn::AcousticModel before = model;
    nn::Gradients grads;
    grads.set_zero(model);
    nn::AdamState adam;
    adam.init(model);
    for (int i = 0; i < 5; ++i) adam.step(model, grads, 1e-2, 0.0);
    CHECK((model.head_w - before.head_w).cwiseAbs().maxCoeff() == 0.0);
    CHECK((model.gru[0].bwd.b - before.gru[0].bwd.b).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("matches an independent scripted Adam over 10 steps within 1e-12") {
    nn::AcousticModel model = nn::init_model(1, 1, 1, 2, 41);
    // Track one scalar parameter (head bias 0) against a reference.
    const double lr = 7e-3, wd = 0.1;
    double ref = model.head_b(0);
    double m = 0.0, v = 0.0;
    Rng rng(43);
    nn::AdamState adam;
    adam.init(model);
    for (int t = 1; t <= 10; ++t) {
      nn::Gradients grads;
      grads.set_zero(model);
      const double g = rng.next_normal();
      grads.head_b(0) = g;
      adam.step(model, grads, lr, wd);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      ref -= lr * (mh / (std::sqrt(vh) + 1e-8) + wd * ref);
      CHECK(model.head_b(0) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("training loop") {
  Rng rng(47);
  // Tiny synthetic task: class-dependent mean offsets, 3 classes + blank.
  auto make_item = [&](int idx) {
    nn::LabeledFeatures item;
    item.id = "t" + std::to_string(idx);
    const int label = idx % 3;
    item.features.frames = 6;
    item.features.frame_dim = 4;
    item.features.values.resize(24);
    for (uint64_t t = 0; t < 6; ++t)
      for (uint64_t d = 0; d < 4; ++d)
        item.features.values[t * 4 + d] = (d == static_cast<uint64_t>(label) ? 2.0 : 0.0) + 0.1 * rng.next_normal();
    item.labels = {label};
    return item;
  };
  std::vector<nn::LabeledFeatures> train_set, val_set;
  for (int i = 0; i < 24; ++i) train_set.push_back(make_item(i));
  for (int i = 0; i < 6; ++i) val_set.push_back(make_item(100 + i));

  SUBCASE("validation loss improves over epoch zero") {
    nn::AcousticModel model = nn::init_model(1, 8, 4, 4, 53);
    nn::TrainConfig config;
    config.epochs = 20;
    config.learning_rate = 5e-3;
    config.batch_size = 8;
    config.seed = 53;
    const nn::TrainResult result = nn::train(model, train_set, val_set, config);
    REQUIRE(result.log.size() == 20);
    CHECK(result.log.back().val_loss < result.log.front().val_loss);
    CHECK(result.best_val_loss <= result.log.front().val_loss);
  }

  SUBCASE("same seed reproduces identical logs and checkpoints") {
    const auto dir = fs::temp_directory_path() / "emg2text_test_neural";
    fs::create_directories(dir);
    auto run = [&](const std::string& name) {
      nn::AcousticModel model = nn::init_model(1, 4, 4, 4, 59);
      nn::TrainConfig config;
      config.epochs = 4;
      config.learning_rate = 3e-3;
      config.batch_size = 4;
      config.seed = 59;
      config.checkpoint_path = (dir / name).string();
      return nn::train(model, train_set, val_set, config);
    };
    const nn::TrainResult a = run("a.ckpt");
    const nn::TrainResult b = run("b.ckpt");
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) {
      CHECK(a.log[i].train_loss == b.log[i].train_loss);
      CHECK(a.log[i].val_loss == b.log[i].val_loss);
    }
    std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
    const std::vector<char> bytes_a{std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>()};
    const std::vector<char> bytes_b{std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>()};
    CHECK(bytes_a == bytes_b);
  }

  SUBCASE("epochs=1 writes exactly one checkpoint") {
    const auto dir = fs::temp_directory_path() / "emg2text_test_neural";
    fs::create_directories(dir);
    nn::AcousticModel model = nn::init_model(1, 4, 4, 4, 61);
    nn::TrainConfig config;
    config.epochs = 1;
    config.learning_rate = 1e-3;
    config.batch_size = 4;
    config.seed = 61;
    config.checkpoint_path = (dir / "one.ckpt").string();
    const nn::TrainResult result = nn::train(model, train_set, val_set, config);
    CHECK(result.checkpoints_written == 1);
  }
}

TEST_CASE("checkpoint round trip") {
  Rng rng(67);
  nn::AcousticModel model = nn::init_model(2, 3, 5, 4, 71);
  model.inventory_symbols = {"p0", "p1", "p2"};
  model.feature_kind = feat::FeatureKind::kSpd;
  model.run_config["epochs"] = "5";
  model.feat_mean.setRandom();
  model.feat_std.setConstant(1.5);
  spd::Eigenbasis basis;
  basis.q = Matrix::Identity(5, 5);
  basis.lambda = Vector::LinSpaced(5, 5.0, 1.0);
  model.basis = basis;

  const auto dir = fs::temp_directory_path() / "emg2text_test_neural";
  fs::create_directories(dir);
  const std::string path = (dir / "round.ckpt").string();
  nn::save_checkpoint(path, model);
  const nn::AcousticModel back = nn::load_checkpoint(path);

  CHECK(back.layers == 2);
  CHECK(back.hidden == 3);
  CHECK(back.input_dim == 5);
  CHECK(back.output_dim == 4);
  CHECK(back.inventory_symbols == model.inventory_symbols);
  CHECK(back.run_config.at("epochs") == "5");
  CHECK(back.param_count() == model.param_count());
  REQUIRE(back.basis.has_value());
  CHECK((back.basis->q - basis.q).cwiseAbs().maxCoeff() == 0.0);
  // float32 rounding applies to parameters
  CHECK((back.gru[1].fwd.w.cast<float>() - model.gru[1].fwd.w.cast<float>()).cwiseAbs().maxCoeff() == 0.0f);

  // Forward passes agree to float32 precision.
  const auto feats = random_features(rng, 5, 5);
  const Matrix a = nn::forward(model, feats);
  const Matrix b = nn::forward(back, feats);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
}
