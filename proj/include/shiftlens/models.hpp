#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftlens/dataset.hpp"

namespace shiftlens::models {

struct ColumnType {
  bool categorical = false;
  int cardinality = 0;
};

struct ConceptGroup {
  std::string name;
  int begin = 0;  // first column
  int end = 0;    // one past last column
  int cardinality = 0;
};

// Reduced features: n x d matrix with per-column typing and, for
// concept-based reducers, a concept -> column-range map in schema order.
struct Representation {
  Eigen::MatrixXd matrix;
  std::vector<ColumnType> columns;
  std::vector<ConceptGroup> groups;

  int dims() const { return static_cast<int>(matrix.cols()); }
  int samples() const { return static_cast<int>(matrix.rows()); }
  bool all_continuous() const;
  bool all_categorical() const;
  Representation take_rows(std::span<const int> rows) const;
  void validate() const;
};

// Streams flattened [0,1]-scaled pixel rows in batches; keeps large datasets
// out of double precision until needed.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual int size() const = 0;
  virtual int dims() const = 0;
  // Fills out.row(r) with the features of row `rows[r]` of this source.
  virtual void fill(std::span<const int> rows, Eigen::MatrixXd& out) const = 0;
  Eigen::MatrixXd materialize(std::span<const int> rows) const;
  Eigen::MatrixXd materialize_all() const;
};

class DatasetSource final : public BatchSource {
 public:
  DatasetSource(const datagen::LatentFactorDataset& ds, std::span<const int> indices);
  int size() const override { return static_cast<int>(indices_.size()); }
  int dims() const override;
  void fill(std::span<const int> rows, Eigen::MatrixXd& out) const override;

 private:
  const datagen::LatentFactorDataset* ds_;
  std::vector<int> indices_;
};

class MatrixSource final : public BatchSource {
 public:
  explicit MatrixSource(const Eigen::MatrixXd& x) : x_(&x) {}
  int size() const override { return static_cast<int>(x_->rows()); }
  int dims() const override { return static_cast<int>(x_->cols()); }
  void fill(std::span<const int> rows, Eigen::MatrixXd& out) const override;

 private:
  const Eigen::MatrixXd* x_;
};

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // m x d0, orthonormal rows, descending variance
  Eigen::VectorXd explained_variance_ratio;

  int input_dims() const { return static_cast<int>(mean.size()); }
  int output_dims() const { return static_cast<int>(components.rows()); }
  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
};

// Top-m principal components of x (rows = samples). Uses the covariance
// eigendecomposition when d <= n and the Gram-matrix route otherwise.
PcaModel fit_pca(const Eigen::MatrixXd& x, int m);

// Smallest m whose cumulative explained variance reaches `variance_target`.
PcaModel fit_pca_auto(const Eigen::MatrixXd& x, double variance_target = 0.80);

// ---------------------------------------------------------------------------
// Sparse random projection

struct SrpModel {
  int input_dims = 0;
  int output_dims = 0;
  double density = 0.0;  // 1/sqrt(d0)
  double scale = 0.0;    // sqrt(1/(density*m))
  std::uint64_t seed = 0;
  Eigen::SparseMatrix<double> projection;  // m x d0, entries in {+s, 0, -s}

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
};

SrpModel fit_srp(int input_dims, int output_dims, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Multilayer perceptron (task classifier and concept-bottleneck model)

struct TrainConfig {
  std::vector<int> hidden{256, 256};
  int max_epochs = 200;
  int patience = 10;  // epochs without validation-accuracy improvement
  int batch_size = 128;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct HeadSpec {
  std::string name;
  int classes = 0;
};

struct HeadAccuracy {
  std::string name;
  double train = 0.0;
  double validation = 0.0;
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> trunk_weights;
  std::vector<Eigen::VectorXd> trunk_biases;
  std::vector<Eigen::MatrixXd> head_weights;
  std::vector<Eigen::VectorXd> head_biases;
};

class MlpClassifier {
 public:
  std::vector<Eigen::MatrixXd> trunk_weights;  // layer l: in x out
  std::vector<Eigen::VectorXd> trunk_biases;
  std::vector<Eigen::MatrixXd> head_weights;  // per head: hidden x classes
  std::vector<Eigen::VectorXd> head_biases;
  std::vector<HeadSpec> heads;

  // Label predictor over concatenated head softmax outputs (CBM only).
  bool has_label_head = false;
  Eigen::MatrixXd label_weights;
  Eigen::VectorXd label_bias;

  TrainConfig config;
  std::vector<HeadAccuracy> head_accuracies;
  double label_train_accuracy = 0.0;
  double label_validation_accuracy = 0.0;
  int epochs_trained = 0;

  int input_dims() const;
  int softmax_dims() const;  // sum of head class counts

  // Per-head softmax probabilities for a feature batch.
  std::vector<Eigen::MatrixXd> forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd concat_softmax(const Eigen::MatrixXd& x) const;
  // Hard predictions per head (argmax, lowest index wins ties).
  Eigen::MatrixXi predict_hard(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd label_softmax(const Eigen::MatrixXd& x) const;

  // Mean over the batch of the summed per-head cross-entropy.
  double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXi& y) const;
  MlpGradients gradients(const Eigen::MatrixXd& x, const Eigen::MatrixXi& y) const;

  void check_finite() const;
};

// Trains trunk + heads by mini-batch SGD with early stopping on mean
// validation accuracy (best weights restored). Throws on non-finite loss.
MlpClassifier train_mlp(const BatchSource& train_x, const Eigen::MatrixXi& train_y,
                        const BatchSource& val_x, const Eigen::MatrixXi& val_y,
                        const std::vector<HeadSpec>& heads, const TrainConfig& config);

// Chunked forward passes over a batch source.
Eigen::MatrixXd concat_softmax_over(const MlpClassifier& net, const BatchSource& x);
Eigen::MatrixXi predict_hard_over(const MlpClassifier& net, const BatchSource& x);

MlpClassifier train_task_classifier(const datagen::LatentFactorDataset& ds,
                                    const datagen::SplitIndices& split,
                                    const TrainConfig& config);

// Sequential CBM: concept heads trained jointly, then a logistic-regression
// label head fitted on the frozen concept softmax outputs.
MlpClassifier train_cbm(const datagen::LatentFactorDataset& ds,
                        const datagen::SplitIndices& split,
                        const TrainConfig& config);

// ---------------------------------------------------------------------------
// Unified reducer surface

// type: "pca" | "srp" | "task" | "cbm".
struct FittedModel {
  std::string type;
  datagen::ConceptSchema schema;
  PcaModel pca;
  SrpModel srp;
  MlpClassifier net;
};

// method: pca | srp | bbsds | bbsdh | cbsds | cbsdh. Throws when the model
// family cannot serve the method.
Representation reduce(const FittedModel& model, const std::string& method,
                      const BatchSource& source);
Representation reduce(const FittedModel& model, const std::string& method,
                      const datagen::LatentFactorDataset& ds,
                      std::span<const int> indices);

bool method_needs_model_type(const std::string& method, const std::string& type);
std::vector<std::string> all_methods();

// model.json + weights.bin (little-endian float64; layout documented in the
// manifest's "layout" field).
void save_model(const FittedModel& model, const std::filesystem::path& dir);
FittedModel load_model(const std::filesystem::path& dir);

}  // namespace shiftlens::models
