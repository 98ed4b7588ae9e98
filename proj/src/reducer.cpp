#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "schema_json.hpp"
#include "shiftlens/models.hpp"

namespace shiftlens::models {

using nlohmann::json;

namespace {
constexpr int kChunk = 1024;
}

bool Representation::all_continuous() const {
  return std::all_of(columns.begin(), columns.end(),
                     [](const ColumnType& c) { return !c.categorical; });
}

bool Representation::all_categorical() const {
  return std::all_of(columns.begin(), columns.end(),
                     [](const ColumnType& c) { return c.categorical; });
}

Representation Representation::take_rows(std::span<const int> rows) const {
  Representation out;
  out.columns = columns;
  out.groups = groups;
  out.matrix.resize(static_cast<Eigen::Index>(rows.size()), matrix.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.matrix.row(static_cast<Eigen::Index>(i)) = matrix.row(rows[i]);
  return out;
}

void Representation::validate() const {
  if (static_cast<Eigen::Index>(columns.size()) != matrix.cols())
    throw std::runtime_error("representation: column type count mismatch");
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (!columns[c].categorical) continue;
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
      const double v = matrix(i, static_cast<Eigen::Index>(c));
      if (v != std::floor(v) || v < 0 || v >= columns[c].cardinality)
        throw std::runtime_error("representation: categorical value out of range");
    }
  }
  if (!groups.empty()) {
    int expected_begin = 0;
    for (const auto& g : groups) {
      if (g.begin != expected_begin || g.end <= g.begin ||
          g.end > static_cast<int>(columns.size()))
        throw std::runtime_error("representation: groups must tile the columns");
      expected_begin = g.end;
    }
    if (expected_begin != static_cast<int>(columns.size()))
      throw std::runtime_error("representation: groups must cover all columns");
  }
}

Eigen::MatrixXd BatchSource::materialize(std::span<const int> rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), dims());
  fill(rows, out);
  return out;
}

Eigen::MatrixXd BatchSource::materialize_all() const {
  std::vector<int> rows(static_cast<std::size_t>(size()));
  std::iota(rows.begin(), rows.end(), 0);
  return materialize(rows);
}

DatasetSource::DatasetSource(const datagen::LatentFactorDataset& ds,
                             std::span<const int> indices)
    : ds_(&ds), indices_(indices.begin(), indices.end()) {}

int DatasetSource::dims() const { return ds_->schema.pixels_per_image(); }

void DatasetSource::fill(std::span<const int> rows, Eigen::MatrixXd& out) const {
  const int d = dims();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto img = ds_->image(indices_[static_cast<std::size_t>(rows[r])]);
    for (int c = 0; c < d; ++c)
      out(static_cast<Eigen::Index>(r), c) =
          static_cast<double>(img[static_cast<std::size_t>(c)]) / 255.0;
  }
}

void MatrixSource::fill(std::span<const int> rows, Eigen::MatrixXd& out) const {
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = x_->row(rows[r]);
}

namespace {

Eigen::MatrixXd transform_chunked(const BatchSource& source, int out_dims,
                                  const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& fn) {
  const int n = source.size();
  Eigen::MatrixXd out(n, out_dims);
  Eigen::MatrixXd chunk;
  std::vector<int> rows;
  for (int start = 0; start < n; start += kChunk) {
    const int count = std::min(kChunk, n - start);
    rows.resize(static_cast<std::size_t>(count));
    std::iota(rows.begin(), rows.end(), start);
    chunk.resize(count, source.dims());
    source.fill(rows, chunk);
    out.middleRows(start, count) = fn(chunk);
  }
  return out;
}

std::vector<ConceptGroup> softmax_groups(const datagen::ConceptSchema& schema) {
  std::vector<ConceptGroup> groups;
  int col = 0;
  for (const auto& c : schema.concepts) {
    groups.push_back({c.name, col, col + c.cardinality, c.cardinality});
    col += c.cardinality;
  }
  return groups;
}

}  // namespace

bool method_needs_model_type(const std::string& method, const std::string& type) {
  if (method == "pca") return type == "pca";
  if (method == "srp") return type == "srp";
  if (method == "bbsds" || method == "bbsdh") return type == "task";
  if (method == "cbsds" || method == "cbsdh") return type == "cbm";
  return false;
}

std::vector<std::string> all_methods() {
  return {"pca", "srp", "bbsds", "bbsdh", "cbsds", "cbsdh"};
}

Representation reduce(const FittedModel& model, const std::string& method,
                      const BatchSource& source) {
  if (!method_needs_model_type(method, model.type))
    throw std::invalid_argument("method '" + method + "' cannot use a '" +
                                model.type + "' model");
  Representation rep;
  if (method == "pca") {
    rep.matrix = transform_chunked(source, model.pca.output_dims(),
                                   [&](const Eigen::MatrixXd& x) {
                                     return model.pca.transform(x);
                                   });
    rep.columns.assign(static_cast<std::size_t>(model.pca.output_dims()), {});
  } else if (method == "srp") {
    rep.matrix = transform_chunked(source, model.srp.output_dims,
                                   [&](const Eigen::MatrixXd& x) {
                                     return model.srp.transform(x);
                                   });
    rep.columns.assign(static_cast<std::size_t>(model.srp.output_dims), {});
  } else if (method == "bbsds" || method == "cbsds") {
    rep.matrix = concat_softmax_over(model.net, source);
    rep.columns.assign(static_cast<std::size_t>(model.net.softmax_dims()), {});
    if (method == "cbsds") rep.groups = softmax_groups(model.schema);
  } else {  // bbsdh | cbsdh
    Eigen::MatrixXi hard = predict_hard_over(model.net, source);
    rep.matrix = hard.cast<double>();
    for (const auto& head : model.net.heads)
      rep.columns.push_back({true, head.classes});
    if (method == "cbsdh") {
      int col = 0;
      for (const auto& c : model.schema.concepts) {
        rep.groups.push_back({c.name, col, col + 1, c.cardinality});
        ++col;
      }
    }
  }
  return rep;
}

Representation reduce(const FittedModel& model, const std::string& method,
                      const datagen::LatentFactorDataset& ds,
                      std::span<const int> indices) {
  DatasetSource source(ds, indices);
  return reduce(model, method, source);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

void append_doubles(std::vector<double>& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
}

void append_doubles(std::vector<double>& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
}

class DoubleReader {
 public:
  explicit DoubleReader(std::vector<double> data) : data_(std::move(data)) {}

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = next();
    return m;
  }

  Eigen::VectorXd vector(Eigen::Index size) {
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = next();
    return v;
  }

  void expect_exhausted() const {
    if (pos_ != data_.size())
      throw std::runtime_error("weights.bin has trailing data");
  }

 private:
  double next() {
    if (pos_ >= data_.size()) throw std::runtime_error("weights.bin truncated");
    return data_[pos_++];
  }
  std::vector<double> data_;
  std::size_t pos_ = 0;
};

json train_config_to_json(const TrainConfig& c) {
  return {{"hidden", c.hidden},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  j.at("hidden").get_to(c.hidden);
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("patience").get_to(c.patience);
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("momentum").get_to(c.momentum);
  j.at("seed").get_to(c.seed);
  return c;
}

}  // namespace

void save_model(const FittedModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json meta;
  meta["type"] = model.type;
  meta["schema"] = model.schema;

  std::vector<double> weights;
  if (model.type == "pca") {
    meta["input_dims"] = model.pca.input_dims();
    meta["output_dims"] = model.pca.output_dims();
    meta["layout"] = "mean[d0], components[m x d0] row-major, evr[m]";
    append_doubles(weights, model.pca.mean);
    append_doubles(weights, model.pca.components);
    append_doubles(weights, model.pca.explained_variance_ratio);
  } else if (model.type == "srp") {
    meta["input_dims"] = model.srp.input_dims;
    meta["output_dims"] = model.srp.output_dims;
    meta["density"] = model.srp.density;
    meta["scale"] = model.srp.scale;
    meta["seed"] = model.srp.seed;
    meta["layout"] = "projection[m x d0] row-major dense";
    append_doubles(weights, Eigen::MatrixXd(model.srp.projection));
  } else if (model.type == "task" || model.type == "cbm") {
    const MlpClassifier& net = model.net;
    meta["input_dims"] = net.input_dims();
    meta["config"] = train_config_to_json(net.config);
    meta["epochs_trained"] = net.epochs_trained;
    json heads = json::array();
    for (const auto& h : net.heads)
      heads.push_back({{"name", h.name}, {"classes", h.classes}});
    meta["heads"] = heads;
    json accs = json::array();
    for (const auto& a : net.head_accuracies)
      accs.push_back({{"name", a.name},
                      {"train_accuracy", a.train},
                      {"validation_accuracy", a.validation}});
    meta["head_accuracies"] = accs;
    meta["has_label_head"] = net.has_label_head;
    if (net.has_label_head) {
      meta["label_train_accuracy"] = net.label_train_accuracy;
      meta["label_validation_accuracy"] = net.label_validation_accuracy;
    }
    meta["layout"] =
        "per trunk layer: W[in x out] row-major then b[out]; per head: W then b; "
        "label head W then b when present";
    for (std::size_t l = 0; l < net.trunk_weights.size(); ++l) {
      append_doubles(weights, net.trunk_weights[l]);
      append_doubles(weights, net.trunk_biases[l]);
    }
    for (std::size_t h = 0; h < net.head_weights.size(); ++h) {
      append_doubles(weights, net.head_weights[h]);
      append_doubles(weights, net.head_biases[h]);
    }
    if (net.has_label_head) {
      append_doubles(weights, net.label_weights);
      append_doubles(weights, net.label_bias);
    }
  } else {
    throw std::invalid_argument("save_model: unknown type '" + model.type + "'");
  }

  std::ofstream wf(dir / "weights.bin", std::ios::binary);
  if (!wf) throw std::runtime_error("cannot write weights in " + dir.string());
  wf.write(reinterpret_cast<const char*>(weights.data()),
           static_cast<std::streamsize>(weights.size() * sizeof(double)));

  std::ofstream mf(dir / "model.json");
  if (!mf) throw std::runtime_error("cannot write model.json in " + dir.string());
  mf << meta.dump(2) << "\n";
}

FittedModel load_model(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "model.json");
  if (!mf) throw std::runtime_error("missing model.json in " + dir.string());
  json meta;
  try {
    mf >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed model.json: " + std::string(e.what()));
  }

  std::ifstream wf(dir / "weights.bin", std::ios::binary | std::ios::ate);
  if (!wf) throw std::runtime_error("missing weights.bin in " + dir.string());
  const auto bytes = static_cast<std::size_t>(wf.tellg());
  if (bytes % sizeof(double) != 0)
    throw std::runtime_error("weights.bin size not a multiple of 8");
  std::vector<double> raw(bytes / sizeof(double));
  wf.seekg(0);
  wf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  if (!wf) throw std::runtime_error("weights.bin read failed");
  DoubleReader reader(std::move(raw));

  FittedModel model;
  model.type = meta.at("type").get<std::string>();
  model.schema = meta.at("schema").get<datagen::ConceptSchema>();

  if (model.type == "pca") {
    const auto d0 = meta.at("input_dims").get<Eigen::Index>();
    const auto m = meta.at("output_dims").get<Eigen::Index>();
    model.pca.mean = reader.vector(d0);
    model.pca.components = reader.matrix(m, d0);
    model.pca.explained_variance_ratio = reader.vector(m);
  } else if (model.type == "srp") {
    model.srp.input_dims = meta.at("input_dims").get<int>();
    model.srp.output_dims = meta.at("output_dims").get<int>();
    model.srp.density = meta.at("density").get<double>();
    model.srp.scale = meta.at("scale").get<double>();
    model.srp.seed = meta.at("seed").get<std::uint64_t>();
    Eigen::MatrixXd dense =
        reader.matrix(model.srp.output_dims, model.srp.input_dims);
    model.srp.projection = dense.sparseView();
    model.srp.projection.makeCompressed();
  } else if (model.type == "task" || model.type == "cbm") {
    MlpClassifier& net = model.net;
    net.config = train_config_from_json(meta.at("config"));
    net.epochs_trained = meta.at("epochs_trained").get<int>();
    for (const auto& h : meta.at("heads"))
      net.heads.push_back(
          {h.at("name").get<std::string>(), h.at("classes").get<int>()});
    for (const auto& a : meta.at("head_accuracies"))
      net.head_accuracies.push_back({a.at("name").get<std::string>(),
                                     a.at("train_accuracy").get<double>(),
                                     a.at("validation_accuracy").get<double>()});
    int fan_in = meta.at("input_dims").get<int>();
    for (int width : net.config.hidden) {
      net.trunk_weights.push_back(reader.matrix(fan_in, width));
      net.trunk_biases.push_back(reader.vector(width));
      fan_in = width;
    }
    for (const auto& h : net.heads) {
      net.head_weights.push_back(reader.matrix(fan_in, h.classes));
      net.head_biases.push_back(reader.vector(h.classes));
    }
    net.has_label_head = meta.at("has_label_head").get<bool>();
    if (net.has_label_head) {
      net.label_weights =
          reader.matrix(net.softmax_dims(), model.schema.num_task_classes);
      net.label_bias = reader.vector(model.schema.num_task_classes);
      net.label_train_accuracy = meta.at("label_train_accuracy").get<double>();
      net.label_validation_accuracy =
          meta.at("label_validation_accuracy").get<double>();
    }
  } else {
    throw std::runtime_error("load_model: unknown type '" + model.type + "'");
  }
  reader.expect_exhausted();
  return model;
}

}  // namespace shiftlens::models
