#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emg2text/features.hpp"
#include "emg2text/signal_io.hpp"
#include "emg2text/spd_geometry.hpp"

namespace emg2text::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One GRU direction. Gates are stacked [reset; update; candidate] in the
// weight rows. Recurrences (reset-before-candidate convention):
//   r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
//   z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
//   n_t = tanh   (W_n x_t + U_n (r_t . h_{t-1}) + b_n)
//   h_t = z_t . h_{t-1} + (1 - z_t) . n_t
struct GruDirection {
  Matrix w;  // 3H x D
  Matrix u;  // 3H x H (rows 0..2H-1 gate r/z on h, rows 2H.. gate n on r.h)
  Vector b;  // 3H
};

struct GruLayer {
  GruDirection fwd;
  GruDirection bwd;
};

// Stacked bidirectional GRU with a linear log-softmax head. Inputs are
// standardized with per-dimension statistics frozen at training time.
struct AcousticModel {
  int layers = 3;
  int hidden = 256;  // per direction
  int input_dim = 961;
  int output_dim = 41;  // phonemes + blank
  uint64_t seed = 0;
  feat::FeatureKind feature_kind = feat::FeatureKind::kSpd;

  std::vector<GruLayer> gru;
  Matrix head_w;  // output_dim x 2H
  Vector head_b;

  Vector feat_mean;  // input standardization, input_dim
  Vector feat_std;

  std::vector<std::string> inventory_symbols;
  std::optional<spd::Eigenbasis> basis;  // carried along for spd models
  std::map<std::string, std::string> run_config;  // flat config, persisted

  // Trainable parameter count; excludes frozen statistics and the basis.
  uint64_t param_count() const;
};

AcousticModel init_model(int layers, int hidden, int input_dim, int output_dim, uint64_t seed);

// Intermediate activations kept for backpropagation.
struct ForwardCache {
  Matrix x0;                          // standardized input, D x T
  std::vector<Matrix> layer_inputs;   // input to each layer (x0 or concat)
  struct DirCache {
    Matrix r, z, n, h;  // H x T each, indexed by absolute frame
  };
  std::vector<DirCache> fwd, bwd;     // per layer
  Matrix log_probs;                   // T x C
};

// Frame-synchronous log posteriors, one row per input frame.
Matrix forward(const AcousticModel& model, const feat::FeatureSequence& features,
               ForwardCache* cache = nullptr);

// Gradients of every trainable tensor, shapes mirroring the model.
struct Gradients {
  std::vector<GruLayer> gru;
  Matrix head_w;
  Vector head_b;

  void set_zero(const AcousticModel& model);
  void accumulate(const Gradients& other, double scale = 1.0);
  void scale(double factor);
};

// Reverse-mode pass. `output_grad` is d loss / d log_probs (T x C); the
// log-softmax Jacobian is applied internally.
Gradients backward(const AcousticModel& model, const ForwardCache& cache, const Matrix& output_grad);

// Decoupled-weight-decay Adam over the model's trainable tensors.
class AdamState {
 public:
  void init(const AcousticModel& model);
  void step(AcousticModel& model, const Gradients& grads, double lr, double weight_decay);

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  std::vector<Eigen::ArrayXXd> m_, v_;
  uint64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  int batch_size = 16;
  uint64_t seed = 0;
  std::string checkpoint_path;
};

struct LabeledFeatures {
  std::string id;
  feat::FeatureSequence features;
  std::vector<int> labels;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  int64_t wall_ms = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  int checkpoints_written = 0;
  uint64_t skipped_infeasible = 0;  // sentences too short for their labels
};

// CTC training with length-bucketed batches (gradients accumulated per
// sentence, averaged per batch) and lowest-validation-loss checkpointing.
TrainResult train(AcousticModel& model, std::vector<LabeledFeatures> train_set,
                  const std::vector<LabeledFeatures>& val_set, const TrainConfig& config);

void write_train_log(const std::string& path, const std::vector<EpochLog>& log);

// Checkpoint container: "CKPT" magic, version, JSON metadata, named
// float32 tensors (including "Q"/"lambda" when a basis is embedded).
void save_checkpoint(const std::string& path, const AcousticModel& model);
AcousticModel load_checkpoint(const std::string& path);

// Per-dimension mean / std over every frame of the given sequences.
void fit_standardization(AcousticModel& model, const std::vector<LabeledFeatures>& train_set);

}  // namespace emg2text::nn
