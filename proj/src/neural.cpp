#include "emg2text/neural.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "emg2text/binio.hpp"
#include "emg2text/ctc.hpp"
#include "emg2text/errors.hpp"
#include "emg2text/rng.hpp"

namespace emg2text::nn {

using nlohmann::json;

namespace {

Matrix init_matrix(Rng& rng, int rows, int cols, double bound) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.next_uniform(-bound, bound);
  return m;
}

Vector init_vector(Rng& rng, int n, double bound) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.next_uniform(-bound, bound);
  return v;
}

inline Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) { return 1.0 / (1.0 + (-x).exp()); }

}  // namespace

uint64_t AcousticModel::param_count() const {
  uint64_t n = 0;
  for (const auto& layer : gru) {
    for (const GruDirection* dir : {&layer.fwd, &layer.bwd})
      n += static_cast<uint64_t>(dir->w.size()) + dir->u.size() + dir->b.size();
  }
  n += static_cast<uint64_t>(head_w.size()) + head_b.size();
  return n;
}

AcousticModel init_model(int layers, int hidden, int input_dim, int output_dim, uint64_t seed) {
  if (layers < 1 || hidden < 1 || input_dim < 1 || output_dim < 2)
    throw ParamError("model shape parameters out of range");
  AcousticModel model;
  model.layers = layers;
  model.hidden = hidden;
  model.input_dim = input_dim;
  model.output_dim = output_dim;
  model.seed = seed;
  Rng rng(seed ^ 0xac0057ULL);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int l = 0; l < layers; ++l) {
    const int d = l == 0 ? input_dim : 2 * hidden;
    GruLayer layer;
    for (GruDirection* dir : {&layer.fwd, &layer.bwd}) {
      dir->w = init_matrix(rng, 3 * hidden, d, bound);
      dir->u = init_matrix(rng, 3 * hidden, hidden, bound);
      dir->b = init_vector(rng, 3 * hidden, bound);
    }
    model.gru.push_back(std::move(layer));
  }
  const double head_bound = 1.0 / std::sqrt(2.0 * hidden);
  model.head_w = init_matrix(rng, output_dim, 2 * hidden, head_bound);
  model.head_b = init_vector(rng, output_dim, head_bound);
  model.feat_mean = Vector::Zero(input_dim);
  model.feat_std = Vector::Ones(input_dim);
  return model;
}

namespace {

// Runs one direction over the (already standardized) layer input. The
// processing order is natural time for fwd and reversed for bwd; cache
// columns are stored at absolute frame indices.
void dir_forward(const GruDirection& p, const Matrix& x, bool reverse, int hidden,
                 ForwardCache::DirCache& cache) {
  const int frames = static_cast<int>(x.cols());
  const int h = hidden;
  cache.r.resize(h, frames);
  cache.z.resize(h, frames);
  cache.n.resize(h, frames);
  cache.h.resize(h, frames);

  Matrix pre = p.w * x;
  pre.colwise() += p.b;

  Eigen::ArrayXd h_prev = Eigen::ArrayXd::Zero(h);
  for (int i = 0; i < frames; ++i) {
    const int t = reverse ? frames - 1 - i : i;
    const Eigen::ArrayXd urz = (p.u.topRows(2 * h) * h_prev.matrix()).array();
    const Eigen::ArrayXd r = sigmoid(pre.col(t).head(h).array() + urz.head(h));
    const Eigen::ArrayXd z = sigmoid(pre.col(t).segment(h, h).array() + urz.tail(h));
    const Eigen::ArrayXd rh = r * h_prev;
    const Eigen::ArrayXd n =
        (pre.col(t).tail(h).array() + (p.u.bottomRows(h) * rh.matrix()).array()).tanh();
    const Eigen::ArrayXd h_new = z * h_prev + (1.0 - z) * n;
    cache.r.col(t) = r;
    cache.z.col(t) = z;
    cache.n.col(t) = n;
    cache.h.col(t) = h_new;
    h_prev = h_new;
  }
}

struct DirGrads {
  Matrix dw, du;
  Vector db;
  Matrix dx;
};

DirGrads dir_backward(const GruDirection& p, const Matrix& x, const ForwardCache::DirCache& cache,
                      const Matrix& dh_out, bool reverse, int hidden, bool want_dx) {
  const int frames = static_cast<int>(x.cols());
  const int h = hidden;
  Matrix d_pre(3 * h, frames);
  DirGrads g;
  g.du = Matrix::Zero(3 * h, h);

  Eigen::ArrayXd dh_chain = Eigen::ArrayXd::Zero(h);
  for (int i = frames - 1; i >= 0; --i) {
    const int t = reverse ? frames - 1 - i : i;
    const int t_prev = reverse ? t + 1 : t - 1;
    const Eigen::ArrayXd h_prev =
        (i > 0) ? Eigen::ArrayXd(cache.h.col(t_prev).array()) : Eigen::ArrayXd::Zero(h);
    const Eigen::ArrayXd grad_h = dh_out.col(t).array() + dh_chain;
    const Eigen::ArrayXd r = cache.r.col(t).array();
    const Eigen::ArrayXd z = cache.z.col(t).array();
    const Eigen::ArrayXd n = cache.n.col(t).array();

    const Eigen::ArrayXd dz_pre = grad_h * (h_prev - n) * z * (1.0 - z);
    const Eigen::ArrayXd dn_pre = grad_h * (1.0 - z) * (1.0 - n * n);
    const Eigen::ArrayXd drh = (p.u.bottomRows(h).transpose() * dn_pre.matrix()).array();
    const Eigen::ArrayXd dr_pre = drh * h_prev * r * (1.0 - r);

    d_pre.col(t).head(h) = dr_pre;
    d_pre.col(t).segment(h, h) = dz_pre;
    d_pre.col(t).tail(h) = dn_pre;

    Eigen::VectorXd drz(2 * h);
    drz.head(h) = dr_pre.matrix();
    drz.tail(h) = dz_pre.matrix();
    dh_chain = grad_h * z + drh * r + (p.u.topRows(2 * h).transpose() * drz).array();

    const Eigen::ArrayXd rh = r * h_prev;
    g.du.topRows(2 * h).noalias() += drz * h_prev.matrix().transpose();
    g.du.bottomRows(h).noalias() += dn_pre.matrix() * rh.matrix().transpose();
  }
  g.dw.noalias() = d_pre * x.transpose();
  g.db = d_pre.rowwise().sum();
  if (want_dx) g.dx.noalias() = p.w.transpose() * d_pre;
  return g;
}

}  // namespace

Matrix forward(const AcousticModel& model, const feat::FeatureSequence& features, ForwardCache* cache) {
  if (static_cast<int>(features.frame_dim) != model.input_dim)
    throw ParamError("feature dimension " + std::to_string(features.frame_dim) +
                     " does not match model input dimension " + std::to_string(model.input_dim));
  const int frames = static_cast<int>(features.frames);
  if (frames < 1) throw ParamError("empty feature sequence");

  Matrix x(model.input_dim, frames);
  for (int t = 0; t < frames; ++t)
    for (int d = 0; d < model.input_dim; ++d)
      x(d, t) = (features.at(t, d) - model.feat_mean(d)) / (model.feat_std(d) + 1e-8);

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.x0 = x;
  c.layer_inputs.clear();
  c.fwd.assign(model.layers, {});
  c.bwd.assign(model.layers, {});

  Matrix layer_in = x;
  for (int l = 0; l < model.layers; ++l) {
    c.layer_inputs.push_back(layer_in);
    dir_forward(model.gru[l].fwd, layer_in, false, model.hidden, c.fwd[l]);
    dir_forward(model.gru[l].bwd, layer_in, true, model.hidden, c.bwd[l]);
    Matrix concat(2 * model.hidden, frames);
    concat.topRows(model.hidden) = c.fwd[l].h;
    concat.bottomRows(model.hidden) = c.bwd[l].h;
    layer_in = std::move(concat);
  }
  c.layer_inputs.push_back(layer_in);

  Matrix logits = model.head_w * c.layer_inputs.back();
  logits.colwise() += model.head_b;

  Matrix log_probs(frames, model.output_dim);
  for (int t = 0; t < frames; ++t) {
    const double mx = logits.col(t).maxCoeff();
    const double lse = mx + std::log((logits.col(t).array() - mx).exp().sum());
    log_probs.row(t) = (logits.col(t).array() - lse).transpose();
  }
  c.log_probs = log_probs;
  return log_probs;
}

void Gradients::set_zero(const AcousticModel& model) {
  gru.clear();
  for (const auto& layer : model.gru) {
    GruLayer g;
    for (auto [src, dst] : {std::pair{&layer.fwd, &g.fwd}, std::pair{&layer.bwd, &g.bwd}}) {
      dst->w = Matrix::Zero(src->w.rows(), src->w.cols());
      dst->u = Matrix::Zero(src->u.rows(), src->u.cols());
      dst->b = Vector::Zero(src->b.size());
    }
    gru.push_back(std::move(g));
  }
  head_w = Matrix::Zero(model.head_w.rows(), model.head_w.cols());
  head_b = Vector::Zero(model.head_b.size());
}

void Gradients::accumulate(const Gradients& other, double scale) {
  for (size_t l = 0; l < gru.size(); ++l) {
    for (auto [dst, src] : {std::pair{&gru[l].fwd, &other.gru[l].fwd}, std::pair{&gru[l].bwd, &other.gru[l].bwd}}) {
      dst->w += scale * src->w;
      dst->u += scale * src->u;
      dst->b += scale * src->b;
    }
  }
  head_w += scale * other.head_w;
  head_b += scale * other.head_b;
}

void Gradients::scale(double factor) {
  for (auto& layer : gru) {
    for (GruDirection* dir : {&layer.fwd, &layer.bwd}) {
      dir->w *= factor;
      dir->u *= factor;
      dir->b *= factor;
    }
  }
  head_w *= factor;
  head_b *= factor;
}

Gradients backward(const AcousticModel& model, const ForwardCache& cache, const Matrix& output_grad) {
  const int frames = static_cast<int>(cache.log_probs.rows());
  if (output_grad.rows() != frames || output_grad.cols() != model.output_dim)
    throw ParamError("output gradient shape does not match the forward pass");

  // Through log-softmax: dz_t = g_t - softmax(z_t) * sum(g_t).
  Matrix d_logits(model.output_dim, frames);
  for (int t = 0; t < frames; ++t) {
    const double gsum = output_grad.row(t).sum();
    d_logits.col(t) =
        output_grad.row(t).transpose().array() - cache.log_probs.row(t).transpose().array().exp() * gsum;
  }

  Gradients grads;
  grads.set_zero(model);
  grads.head_w.noalias() = d_logits * cache.layer_inputs.back().transpose();
  grads.head_b = d_logits.rowwise().sum();

  Matrix d_concat = model.head_w.transpose() * d_logits;
  for (int l = model.layers - 1; l >= 0; --l) {
    const Matrix& layer_in = cache.layer_inputs[l];
    const Matrix dh_fwd = d_concat.topRows(model.hidden);
    const Matrix dh_bwd = d_concat.bottomRows(model.hidden);
    const bool want_dx = l > 0;
    DirGrads gf = dir_backward(model.gru[l].fwd, layer_in, cache.fwd[l], dh_fwd, false, model.hidden, want_dx);
    DirGrads gb = dir_backward(model.gru[l].bwd, layer_in, cache.bwd[l], dh_bwd, true, model.hidden, want_dx);
    grads.gru[l].fwd.w = std::move(gf.dw);
    grads.gru[l].fwd.u = std::move(gf.du);
    grads.gru[l].fwd.b = std::move(gf.db);
    grads.gru[l].bwd.w = std::move(gb.dw);
    grads.gru[l].bwd.u = std::move(gb.du);
    grads.gru[l].bwd.b = std::move(gb.db);
    if (want_dx) d_concat = gf.dx + gb.dx;
  }
  return grads;
}

namespace {

// Parameter tensors in a fixed traversal order, for Adam and checkpoints.
template <typename ModelT, typename Fn>
void for_each_tensor(ModelT& model, Fn&& fn) {
  for (size_t l = 0; l < model.gru.size(); ++l) {
    fn("l" + std::to_string(l) + ".fwd.W", model.gru[l].fwd.w);
    fn("l" + std::to_string(l) + ".fwd.U", model.gru[l].fwd.u);
    fn("l" + std::to_string(l) + ".fwd.b", model.gru[l].fwd.b);
    fn("l" + std::to_string(l) + ".bwd.W", model.gru[l].bwd.w);
    fn("l" + std::to_string(l) + ".bwd.U", model.gru[l].bwd.u);
    fn("l" + std::to_string(l) + ".bwd.b", model.gru[l].bwd.b);
  }
  fn("head.W", model.head_w);
  fn("head.b", model.head_b);
}

}  // namespace

void AdamState::init(const AcousticModel& model) {
  m_.clear();
  v_.clear();
  t_ = 0;
  for_each_tensor(const_cast<AcousticModel&>(model), [&](const std::string&, auto& tensor) {
    m_.push_back(Eigen::ArrayXXd::Zero(tensor.rows(), tensor.cols()));
    v_.push_back(Eigen::ArrayXXd::Zero(tensor.rows(), tensor.cols()));
  });
}

void AdamState::step(AcousticModel& model, const Gradients& grads, double lr, double weight_decay) {
  if (m_.empty()) init(model);
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));

  size_t idx = 0;
  auto apply = [&](auto& param, const auto& grad) {
    Eigen::ArrayXXd g = grad.array();
    m_[idx] = kBeta1 * m_[idx] + (1.0 - kBeta1) * g;
    v_[idx] = kBeta2 * v_[idx] + (1.0 - kBeta2) * g.square();
    const Eigen::ArrayXXd m_hat = m_[idx] / bc1;
    const Eigen::ArrayXXd v_hat = v_[idx] / bc2;
    param.array() -= lr * (m_hat / (v_hat.sqrt() + kEpsilon) + weight_decay * param.array());
    ++idx;
  };
  for (size_t l = 0; l < model.gru.size(); ++l) {
    apply(model.gru[l].fwd.w, grads.gru[l].fwd.w);
    apply(model.gru[l].fwd.u, grads.gru[l].fwd.u);
    apply(model.gru[l].fwd.b, grads.gru[l].fwd.b);
    apply(model.gru[l].bwd.w, grads.gru[l].bwd.w);
    apply(model.gru[l].bwd.u, grads.gru[l].bwd.u);
    apply(model.gru[l].bwd.b, grads.gru[l].bwd.b);
  }
  apply(model.head_w, grads.head_w);
  apply(model.head_b, grads.head_b);
}

void fit_standardization(AcousticModel& model, const std::vector<LabeledFeatures>& train_set) {
  Vector sum = Vector::Zero(model.input_dim);
  Vector sum_sq = Vector::Zero(model.input_dim);
  uint64_t frames = 0;
  for (const auto& item : train_set) {
    if (static_cast<int>(item.features.frame_dim) != model.input_dim)
      throw ParamError("feature dimension mismatch in standardization for id " + item.id);
    for (uint64_t t = 0; t < item.features.frames; ++t) {
      for (int d = 0; d < model.input_dim; ++d) {
        const double v = item.features.at(t, d);
        sum(d) += v;
        sum_sq(d) += v * v;
      }
    }
    frames += item.features.frames;
  }
  if (frames == 0) throw ParamError("no frames available to fit feature standardization");
  model.feat_mean = sum / static_cast<double>(frames);
  model.feat_std =
      (sum_sq.array() / static_cast<double>(frames) - model.feat_mean.array().square()).max(0.0).sqrt();
}

namespace {

double sentence_loss_and_grads(const AcousticModel& model, const LabeledFeatures& item, int blank_id,
                               Gradients* grads) {
  ForwardCache cache;
  const Matrix log_probs = forward(model, item.features, &cache);
  const ctc::LossResult res = ctc::ctc_loss(log_probs, item.labels, blank_id);
  if (grads) {
    Gradients g = backward(model, cache, res.grad);
    grads->accumulate(g);
  }
  return res.loss;
}

}  // namespace

TrainResult train(AcousticModel& model, std::vector<LabeledFeatures> train_set,
                  const std::vector<LabeledFeatures>& val_set, const TrainConfig& config) {
  if (config.epochs < 1) throw ParamError("epochs must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ParamError("learning rate must be positive");
  if (train_set.empty()) throw ParamError("empty training set");
  const int blank_id = model.output_dim - 1;

  TrainResult result;

  // Drop sentences whose lattice cannot align their labels.
  std::vector<LabeledFeatures> usable;
  usable.reserve(train_set.size());
  for (auto& item : train_set) {
    if (static_cast<int>(item.features.frames) < ctc::min_frames_for(item.labels)) {
      ++result.skipped_infeasible;
      continue;
    }
    usable.push_back(std::move(item));
  }
  if (usable.empty()) throw ParamError("no trainable sentences after infeasible-alignment filtering");

  if (model.feat_mean.isZero(0) && model.feat_std.isOnes()) fit_standardization(model, usable);

  // Length-bucketed batches: sort by frame count (id as tie-break), then
  // chunk. Batch order is shuffled per epoch; contents stay fixed.
  std::sort(usable.begin(), usable.end(), [](const LabeledFeatures& a, const LabeledFeatures& b) {
    if (a.features.frames != b.features.frames) return a.features.frames < b.features.frames;
    return a.id < b.id;
  });
  const size_t batch_size = std::max(1, config.batch_size);
  std::vector<std::vector<size_t>> batches;
  for (size_t start = 0; start < usable.size(); start += batch_size) {
    std::vector<size_t> batch;
    for (size_t i = start; i < std::min(usable.size(), start + batch_size); ++i) batch.push_back(i);
    batches.push_back(std::move(batch));
  }

  AdamState adam;
  adam.init(model);
  result.best_val_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(derive_seed(config.seed, "epoch" + std::to_string(epoch)));
    std::vector<size_t> order(batches.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);

    double train_loss_sum = 0.0;
    uint64_t train_count = 0;
    for (size_t bi : order) {
      const auto& batch = batches[bi];
      Gradients grads;
      grads.set_zero(model);
      for (size_t idx : batch) {
        const double loss = sentence_loss_and_grads(model, usable[idx], blank_id, &grads);
        if (!std::isfinite(loss)) throw DataError("NaN/Inf loss at sentence id " + usable[idx].id);
        train_loss_sum += loss;
        ++train_count;
      }
      grads.scale(1.0 / static_cast<double>(batch.size()));
      adam.step(model, grads, config.learning_rate, config.weight_decay);
    }

    double val_loss_sum = 0.0;
    uint64_t val_count = 0;
    for (const auto& item : val_set) {
      if (static_cast<int>(item.features.frames) < ctc::min_frames_for(item.labels)) continue;
      val_loss_sum += sentence_loss_and_grads(model, item, blank_id, nullptr);
      ++val_count;
    }
    const double val_loss = val_count ? val_loss_sum / val_count : train_loss_sum / train_count;

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = train_loss_sum / train_count;
    row.val_loss = val_loss;
    row.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);

    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      if (!config.checkpoint_path.empty()) {
        save_checkpoint(config.checkpoint_path, model);
        ++result.checkpoints_written;
      }
    }
  }
  return result;
}

void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write training log: " + path);
  f << "epoch,train_loss,val_loss,wall_ms\n";
  char buf[64];
  for (const auto& row : log) {
    f << row.epoch << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", row.train_loss);
    f << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", row.val_loss);
    f << buf << "," << row.wall_ms << "\n";
  }
}

namespace {

constexpr char kCkptMagic[4] = {'C', 'K', 'P', 'T'};
constexpr uint16_t kCkptVersion = 1;

void write_named_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
  binio::put_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
  binio::put_bytes(os, name.data(), name.size());
  binio::put_le<uint32_t>(os, static_cast<uint32_t>(m.rows()));
  binio::put_le<uint32_t>(os, static_cast<uint32_t>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) binio::put_f32(os, static_cast<float>(m(i, j)));
}

Matrix read_named_tensor(std::istream& is, std::string& name) {
  const uint32_t name_len = binio::get_le<uint32_t>(is, "tensor name length");
  name.resize(name_len);
  if (!is.read(name.data(), name_len)) throw FormatError("checkpoint truncated in tensor name");
  const uint32_t rows = binio::get_le<uint32_t>(is, "tensor rows");
  const uint32_t cols = binio::get_le<uint32_t>(is, "tensor cols");
  Matrix m(rows, cols);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j) m(i, j) = static_cast<double>(binio::get_f32(is, "tensor value"));
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const AcousticModel& model) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write checkpoint: " + path);

  json meta;
  meta["arch"] = {{"layers", model.layers},
                  {"hidden", model.hidden},
                  {"input_dim", model.input_dim},
                  {"output_dim", model.output_dim}};
  meta["seed"] = model.seed;
  meta["feature_kind"] = feat::to_string(model.feature_kind);
  meta["inventory"] = model.inventory_symbols;
  meta["param_count"] = model.param_count();
  meta["config"] = model.run_config;
  const std::string meta_str = meta.dump();

  binio::put_bytes(f, kCkptMagic, 4);
  binio::put_le<uint16_t>(f, kCkptVersion);
  binio::put_le<uint32_t>(f, static_cast<uint32_t>(meta_str.size()));
  binio::put_bytes(f, meta_str.data(), meta_str.size());

  uint32_t n_tensors = 0;
  for_each_tensor(const_cast<AcousticModel&>(model), [&](const std::string&, auto&) { ++n_tensors; });
  n_tensors += 2;  // feat_mean, feat_std
  if (model.basis) n_tensors += 2;
  binio::put_le<uint32_t>(f, n_tensors);

  write_named_tensor(f, "feat_mean", model.feat_mean);
  write_named_tensor(f, "feat_std", model.feat_std);
  for_each_tensor(const_cast<AcousticModel&>(model),
                  [&](const std::string& name, auto& tensor) { write_named_tensor(f, name, Matrix(tensor)); });
  if (model.basis) {
    write_named_tensor(f, "Q", model.basis->q);
    write_named_tensor(f, "lambda", model.basis->lambda.transpose());
  }
  if (!f) throw FormatError("write failed: " + path);
}

AcousticModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw FormatError("bad magic in checkpoint " + path);
  const uint16_t version = binio::get_le<uint16_t>(f, "version");
  if (version != kCkptVersion) throw FormatError("unsupported checkpoint version");
  const uint32_t meta_len = binio::get_le<uint32_t>(f, "metadata length");
  std::string meta_str(meta_len, '\0');
  if (!f.read(meta_str.data(), meta_len)) throw FormatError("checkpoint truncated in metadata");
  json meta;
  try {
    meta = json::parse(meta_str);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  AcousticModel model;
  model.layers = meta.at("arch").at("layers").get<int>();
  model.hidden = meta.at("arch").at("hidden").get<int>();
  model.input_dim = meta.at("arch").at("input_dim").get<int>();
  model.output_dim = meta.at("arch").at("output_dim").get<int>();
  model.seed = meta.at("seed").get<uint64_t>();
  model.feature_kind = feat::feature_kind_from_string(meta.at("feature_kind").get<std::string>());
  for (const auto& s : meta.at("inventory")) model.inventory_symbols.push_back(s.get<std::string>());
  if (meta.contains("config"))
    for (auto it = meta.at("config").begin(); it != meta.at("config").end(); ++it)
      model.run_config[it.key()] = it.value().get<std::string>();

  model.gru.resize(model.layers);
  const uint32_t n_tensors = binio::get_le<uint32_t>(f, "tensor count");
  std::map<std::string, Matrix> tensors;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name;
    Matrix m = read_named_tensor(f, name);
    tensors.emplace(std::move(name), std::move(m));
  }
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint missing tensor: " + name);
    return it->second;
  };
  auto flatten = [](const Matrix& m) {
    Vector v(m.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) v(k++) = m(i, j);
    return v;
  };
  model.feat_mean = flatten(take("feat_mean"));
  model.feat_std = flatten(take("feat_std"));
  for (int l = 0; l < model.layers; ++l) {
    const std::string prefix = "l" + std::to_string(l) + ".";
    model.gru[l].fwd.w = take(prefix + "fwd.W");
    model.gru[l].fwd.u = take(prefix + "fwd.U");
    model.gru[l].fwd.b = take(prefix + "fwd.b").col(0);
    model.gru[l].bwd.w = take(prefix + "bwd.W");
    model.gru[l].bwd.u = take(prefix + "bwd.U");
    model.gru[l].bwd.b = take(prefix + "bwd.b").col(0);
  }
  model.head_w = take("head.W");
  model.head_b = take("head.b").col(0);
  if (tensors.count("Q")) {
    spd::Eigenbasis basis;
    basis.q = take("Q");
    basis.lambda = flatten(take("lambda"));
    model.basis = std::move(basis);
  }
  return model;
}

}  // namespace emg2text::nn
