#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "shiftlens/models.hpp"
#include "shiftlens/rng.hpp"

namespace shiftlens::models {

namespace {

constexpr int kEvalChunk = 1024;

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::RowVectorXd row = logits.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    logits.row(i) = row / row.sum();
  }
  return logits;
}

int argmax_row(const Eigen::RowVectorXd& row) {
  int best = 0;
  for (int c = 1; c < row.size(); ++c)
    if (row(c) > row(best)) best = c;  // lowest index wins ties
  return best;
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // input, then each hidden layer
  std::vector<Eigen::MatrixXd> head_probs;
};

ForwardCache forward_cached(const MlpClassifier& net, const Eigen::MatrixXd& x) {
  ForwardCache cache;
  cache.activations.reserve(net.trunk_weights.size() + 1);
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < net.trunk_weights.size(); ++l) {
    Eigen::MatrixXd z = cache.activations.back() * net.trunk_weights[l];
    z.rowwise() += net.trunk_biases[l].transpose();
    cache.activations.push_back(z.cwiseMax(0.0));
  }
  const Eigen::MatrixXd& top = cache.activations.back();
  cache.head_probs.reserve(net.heads.size());
  for (std::size_t h = 0; h < net.heads.size(); ++h) {
    Eigen::MatrixXd logits = top * net.head_weights[h];
    logits.rowwise() += net.head_biases[h].transpose();
    cache.head_probs.push_back(softmax_rows(std::move(logits)));
  }
  return cache;
}

double loss_from_probs(const std::vector<Eigen::MatrixXd>& probs,
                       const Eigen::MatrixXi& y) {
  const Eigen::Index n = y.rows();
  double total = 0.0;
  for (std::size_t h = 0; h < probs.size(); ++h) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = probs[h](i, y(i, static_cast<Eigen::Index>(h)));
      total -= std::log(std::max(p, 1e-300));
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

int MlpClassifier::input_dims() const {
  if (!trunk_weights.empty()) return static_cast<int>(trunk_weights.front().rows());
  return head_weights.empty() ? 0 : static_cast<int>(head_weights.front().rows());
}

int MlpClassifier::softmax_dims() const {
  int total = 0;
  for (const auto& h : heads) total += h.classes;
  return total;
}

std::vector<Eigen::MatrixXd> MlpClassifier::forward(const Eigen::MatrixXd& x) const {
  return forward_cached(*this, x).head_probs;
}

Eigen::MatrixXd MlpClassifier::concat_softmax(const Eigen::MatrixXd& x) const {
  auto probs = forward(x);
  Eigen::MatrixXd out(x.rows(), softmax_dims());
  Eigen::Index col = 0;
  for (const auto& p : probs) {
    out.middleCols(col, p.cols()) = p;
    col += p.cols();
  }
  return out;
}

Eigen::MatrixXi MlpClassifier::predict_hard(const Eigen::MatrixXd& x) const {
  auto probs = forward(x);
  Eigen::MatrixXi out(x.rows(), static_cast<Eigen::Index>(heads.size()));
  for (std::size_t h = 0; h < probs.size(); ++h)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out(i, static_cast<Eigen::Index>(h)) = argmax_row(probs[h].row(i));
  return out;
}

Eigen::MatrixXd MlpClassifier::label_softmax(const Eigen::MatrixXd& x) const {
  if (!has_label_head) throw std::logic_error("model has no label head");
  Eigen::MatrixXd logits = concat_softmax(x) * label_weights;
  logits.rowwise() += label_bias.transpose();
  return softmax_rows(std::move(logits));
}

double MlpClassifier::loss(const Eigen::MatrixXd& x, const Eigen::MatrixXi& y) const {
  return loss_from_probs(forward(x), y);
}

MlpGradients MlpClassifier::gradients(const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXi& y) const {
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  ForwardCache cache = forward_cached(*this, x);

  MlpGradients g;
  g.trunk_weights.resize(trunk_weights.size());
  g.trunk_biases.resize(trunk_biases.size());
  g.head_weights.resize(head_weights.size());
  g.head_biases.resize(head_biases.size());

  const Eigen::MatrixXd& top = cache.activations.back();
  Eigen::MatrixXd delta_top = Eigen::MatrixXd::Zero(top.rows(), top.cols());
  for (std::size_t h = 0; h < heads.size(); ++h) {
    Eigen::MatrixXd dlogits = cache.head_probs[h];
    for (Eigen::Index i = 0; i < dlogits.rows(); ++i)
      dlogits(i, y(i, static_cast<Eigen::Index>(h))) -= 1.0;
    dlogits *= inv_n;
    g.head_weights[h] = top.transpose() * dlogits;
    g.head_biases[h] = dlogits.colwise().sum();
    delta_top.noalias() += dlogits * head_weights[h].transpose();
  }

  Eigen::MatrixXd delta = std::move(delta_top);
  for (std::size_t l = trunk_weights.size(); l-- > 0;) {
    // ReLU gate on this layer's activation.
    delta = delta.cwiseProduct(
        (cache.activations[l + 1].array() > 0.0).cast<double>().matrix());
    g.trunk_weights[l] = cache.activations[l].transpose() * delta;
    g.trunk_biases[l] = delta.colwise().sum();
    if (l > 0) delta = (delta * trunk_weights[l].transpose()).eval();
  }
  return g;
}

void MlpClassifier::check_finite() const {
  auto ok = [](const Eigen::MatrixXd& m) { return m.allFinite(); };
  for (const auto& w : trunk_weights)
    if (!ok(w)) throw std::runtime_error("non-finite trunk weights");
  for (const auto& w : head_weights)
    if (!ok(w)) throw std::runtime_error("non-finite head weights");
}

namespace {

struct Velocity {
  std::vector<Eigen::MatrixXd> trunk_w;
  std::vector<Eigen::VectorXd> trunk_b;
  std::vector<Eigen::MatrixXd> head_w;
  std::vector<Eigen::VectorXd> head_b;
};

double mean_head_accuracy(const MlpClassifier& net, const BatchSource& x,
                          const Eigen::MatrixXi& y,
                          std::vector<double>* per_head = nullptr) {
  const int n = x.size();
  std::vector<long> correct(net.heads.size(), 0);
  Eigen::MatrixXd chunk;
  std::vector<int> rows;
  for (int start = 0; start < n; start += kEvalChunk) {
    const int count = std::min(kEvalChunk, n - start);
    rows.resize(static_cast<std::size_t>(count));
    std::iota(rows.begin(), rows.end(), start);
    chunk.resize(count, x.dims());
    x.fill(rows, chunk);
    Eigen::MatrixXi pred = net.predict_hard(chunk);
    for (int h = 0; h < static_cast<int>(net.heads.size()); ++h)
      for (int i = 0; i < count; ++i)
        if (pred(i, h) == y(start + i, h)) ++correct[static_cast<std::size_t>(h)];
  }
  double mean = 0.0;
  if (per_head) per_head->resize(net.heads.size());
  for (std::size_t h = 0; h < net.heads.size(); ++h) {
    const double acc = static_cast<double>(correct[h]) / n;
    if (per_head) (*per_head)[h] = acc;
    mean += acc;
  }
  return mean / static_cast<double>(net.heads.size());
}

}  // namespace

MlpClassifier train_mlp(const BatchSource& train_x, const Eigen::MatrixXi& train_y,
                        const BatchSource& val_x, const Eigen::MatrixXi& val_y,
                        const std::vector<HeadSpec>& heads, const TrainConfig& config) {
  if (train_x.size() < 1) throw std::invalid_argument("train_mlp: empty training set");
  if (train_y.rows() != train_x.size() ||
      train_y.cols() != static_cast<Eigen::Index>(heads.size()))
    throw std::invalid_argument("train_mlp: label matrix shape mismatch");
  if (heads.empty()) throw std::invalid_argument("train_mlp: no heads");

  MlpClassifier net;
  net.config = config;
  net.heads = heads;

  // He-normal initialization, biases zero.
  const Rng root(config.seed);
  Rng init = root.fork(0);
  int fan_in = train_x.dims();
  for (int width : config.hidden) {
    Eigen::MatrixXd w(fan_in, width);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = std_dev * init.gaussian();
    net.trunk_weights.push_back(std::move(w));
    net.trunk_biases.push_back(Eigen::VectorXd::Zero(width));
    fan_in = width;
  }
  for (const auto& head : heads) {
    Eigen::MatrixXd w(fan_in, head.classes);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = std_dev * init.gaussian();
    net.head_weights.push_back(std::move(w));
    net.head_biases.push_back(Eigen::VectorXd::Zero(head.classes));
  }

  Velocity vel;
  auto zeros_like_w = [](const std::vector<Eigen::MatrixXd>& ws) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& w : ws) out.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    return out;
  };
  auto zeros_like_b = [](const std::vector<Eigen::VectorXd>& bs) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& b : bs) out.push_back(Eigen::VectorXd::Zero(b.size()));
    return out;
  };
  vel.trunk_w = zeros_like_w(net.trunk_weights);
  vel.trunk_b = zeros_like_b(net.trunk_biases);
  vel.head_w = zeros_like_w(net.head_weights);
  vel.head_b = zeros_like_b(net.head_biases);

  const int n = train_x.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  MlpClassifier best = net;
  double best_val = -1.0;
  int epochs_since_best = 0;

  Eigen::MatrixXd batch_x;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng = root.fork(static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    for (int start = 0; start < n; start += config.batch_size) {
      const int count = std::min(config.batch_size, n - start);
      std::span<const int> batch_rows(order.data() + start,
                                      static_cast<std::size_t>(count));
      batch_x.resize(count, train_x.dims());
      train_x.fill(batch_rows, batch_x);
      Eigen::MatrixXi batch_y(count, train_y.cols());
      for (int i = 0; i < count; ++i)
        batch_y.row(i) = train_y.row(batch_rows[static_cast<std::size_t>(i)]);

      MlpGradients g = net.gradients(batch_x, batch_y);

      bool finite = true;
      for (const auto& gw : g.trunk_weights) finite = finite && gw.allFinite();
      for (const auto& gw : g.head_weights) finite = finite && gw.allFinite();
      if (!finite)
        throw std::runtime_error("train_mlp: non-finite loss gradient at epoch " +
                                 std::to_string(epoch));

      for (std::size_t l = 0; l < net.trunk_weights.size(); ++l) {
        vel.trunk_w[l] = config.momentum * vel.trunk_w[l] -
                         config.learning_rate * g.trunk_weights[l];
        net.trunk_weights[l] += vel.trunk_w[l];
        vel.trunk_b[l] = config.momentum * vel.trunk_b[l] -
                         config.learning_rate * g.trunk_biases[l];
        net.trunk_biases[l] += vel.trunk_b[l];
      }
      for (std::size_t h = 0; h < net.head_weights.size(); ++h) {
        vel.head_w[h] = config.momentum * vel.head_w[h] -
                        config.learning_rate * g.head_weights[h];
        net.head_weights[h] += vel.head_w[h];
        vel.head_b[h] = config.momentum * vel.head_b[h] -
                        config.learning_rate * g.head_biases[h];
        net.head_biases[h] += vel.head_b[h];
      }
    }

    net.epochs_trained = epoch;
    const double val_acc = mean_head_accuracy(net, val_x, val_y);
    if (val_acc > best_val) {
      best_val = val_acc;
      best = net;
      best.epochs_trained = epoch;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= config.patience) {
      break;
    }
  }

  best.check_finite();
  std::vector<double> train_acc, val_acc;
  mean_head_accuracy(best, train_x, train_y, &train_acc);
  mean_head_accuracy(best, val_x, val_y, &val_acc);
  best.head_accuracies.clear();
  for (std::size_t h = 0; h < heads.size(); ++h)
    best.head_accuracies.push_back({heads[h].name, train_acc[h], val_acc[h]});
  return best;
}

Eigen::MatrixXd concat_softmax_over(const MlpClassifier& net, const BatchSource& x) {
  const int n = x.size();
  Eigen::MatrixXd out(n, net.softmax_dims());
  Eigen::MatrixXd chunk;
  std::vector<int> rows;
  for (int start = 0; start < n; start += kEvalChunk) {
    const int count = std::min(kEvalChunk, n - start);
    rows.resize(static_cast<std::size_t>(count));
    std::iota(rows.begin(), rows.end(), start);
    chunk.resize(count, x.dims());
    x.fill(rows, chunk);
    out.middleRows(start, count) = net.concat_softmax(chunk);
  }
  return out;
}

Eigen::MatrixXi predict_hard_over(const MlpClassifier& net, const BatchSource& x) {
  const int n = x.size();
  Eigen::MatrixXi out(n, static_cast<Eigen::Index>(net.heads.size()));
  Eigen::MatrixXd chunk;
  std::vector<int> rows;
  for (int start = 0; start < n; start += kEvalChunk) {
    const int count = std::min(kEvalChunk, n - start);
    rows.resize(static_cast<std::size_t>(count));
    std::iota(rows.begin(), rows.end(), start);
    chunk.resize(count, x.dims());
    x.fill(rows, chunk);
    out.middleRows(start, count) = net.predict_hard(chunk);
  }
  return out;
}

namespace {

Eigen::MatrixXi task_labels_for(const datagen::LatentFactorDataset& ds,
                                std::span<const int> indices) {
  Eigen::MatrixXi y(static_cast<Eigen::Index>(indices.size()), 1);
  for (std::size_t i = 0; i < indices.size(); ++i)
    y(static_cast<Eigen::Index>(i), 0) =
        ds.task_labels[static_cast<std::size_t>(indices[i])];
  return y;
}

Eigen::MatrixXi concept_labels_for(const datagen::LatentFactorDataset& ds,
                                   std::span<const int> indices) {
  const int k = ds.schema.num_concepts();
  Eigen::MatrixXi y(static_cast<Eigen::Index>(indices.size()), k);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto row = ds.labels(indices[i]);
    for (int c = 0; c < k; ++c) y(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
  }
  return y;
}

}  // namespace

MlpClassifier train_task_classifier(const datagen::LatentFactorDataset& ds,
                                    const datagen::SplitIndices& split,
                                    const TrainConfig& config) {
  if (split.train.empty() || split.validation.empty())
    throw std::invalid_argument("train_task_classifier: empty split");
  DatasetSource train_x(ds, split.train);
  DatasetSource val_x(ds, split.validation);
  std::vector<HeadSpec> heads{{"task", ds.schema.num_task_classes}};
  return train_mlp(train_x, task_labels_for(ds, split.train), val_x,
                   task_labels_for(ds, split.validation), heads, config);
}

MlpClassifier train_cbm(const datagen::LatentFactorDataset& ds,
                        const datagen::SplitIndices& split,
                        const TrainConfig& config) {
  if (split.train.empty() || split.validation.empty())
    throw std::invalid_argument("train_cbm: empty split");
  DatasetSource train_x(ds, split.train);
  DatasetSource val_x(ds, split.validation);

  std::vector<HeadSpec> heads;
  for (const auto& c : ds.schema.concepts) heads.push_back({c.name, c.cardinality});

  MlpClassifier net = train_mlp(train_x, concept_labels_for(ds, split.train), val_x,
                                concept_labels_for(ds, split.validation), heads,
                                config);

  // Label predictor: multinomial logistic regression on the frozen concept
  // softmax outputs.
  Eigen::MatrixXd train_feat = concat_softmax_over(net, train_x);
  Eigen::MatrixXd val_feat = concat_softmax_over(net, val_x);
  MatrixSource label_train_x(train_feat);
  MatrixSource label_val_x(val_feat);

  TrainConfig label_config = config;
  label_config.hidden.clear();
  label_config.learning_rate = std::max(config.learning_rate, 0.1);
  label_config.seed = config.seed + 1;
  std::vector<HeadSpec> label_head{{"label", ds.schema.num_task_classes}};
  MlpClassifier label_net =
      train_mlp(label_train_x, task_labels_for(ds, split.train), label_val_x,
                task_labels_for(ds, split.validation), label_head, label_config);

  net.has_label_head = true;
  net.label_weights = label_net.head_weights[0];
  net.label_bias = label_net.head_biases[0];
  net.label_train_accuracy = label_net.head_accuracies[0].train;
  net.label_validation_accuracy = label_net.head_accuracies[0].validation;
  return net;
}

}  // namespace shiftlens::models
