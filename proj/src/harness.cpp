#include "shiftlens/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "schema_json.hpp"
#include "shiftlens/datagen.hpp"
#include "shiftlens/rng.hpp"
#include "shiftlens/svg.hpp"
#include "shiftlens/thread_pool.hpp"

namespace shiftlens::harness {

using datagen::LatentFactorDataset;
using models::FittedModel;
using models::Representation;
using nlohmann::json;

namespace {

constexpr std::uint64_t kRunStream = 0x52554e53ull;  // run seeding domain

const std::set<std::string>& known_methods() {
  static const std::set<std::string> methods{"pca",   "srp",   "bbsds",
                                             "bbsdh", "cbsds", "cbsdh"};
  return methods;
}

bool is_concept_method(const std::string& m) { return m == "cbsds" || m == "cbsdh"; }
bool is_hard_method(const std::string& m) { return m == "bbsdh" || m == "cbsdh"; }

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset != "sprites" && dataset != "rooms")
    throw std::invalid_argument("config: unknown dataset '" + dataset + "'");
  if (dataset_n < 10) throw std::invalid_argument("config: dataset_n too small");
  if (methods.empty()) throw std::invalid_argument("config: no methods selected");
  for (const auto& m : methods)
    if (!known_methods().count(m))
      throw std::invalid_argument("config: unknown method '" + m + "'");
  if (sample_sizes.empty()) throw std::invalid_argument("config: no sample sizes");
  for (int s : sample_sizes)
    if (s < 2) throw std::invalid_argument("config: sample sizes must be >= 2");
  if (shift_specs.empty()) throw std::invalid_argument("config: no shift specs");
  for (const auto& s : shift_specs) s.validate();
  if (runs_per_cell < 1) throw std::invalid_argument("config: runs_per_cell >= 1");
  if (repetitions < 1) throw std::invalid_argument("config: repetitions >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("config: alpha must be in (0,1)");
  if (continuous_test != "ks" && continuous_test != "mmd")
    throw std::invalid_argument("config: continuous_test must be ks or mmd");
}

shifts::ShiftSpec concept_shift(const datagen::ConceptSchema& schema,
                                const std::string& concept_name,
                                shifts::ShiftIntensity intensity, double delta,
                                std::uint64_t seed) {
  const int c = schema.concept_index(concept_name);
  if (c < 0)
    throw std::invalid_argument("concept_shift: unknown concept '" + concept_name +
                                "'");
  const int card = schema.concepts[static_cast<std::size_t>(c)].cardinality;
  shifts::ShiftSpec spec;
  spec.kind = shifts::ShiftKind::Concept;
  spec.intensity = intensity;
  spec.delta = delta;
  spec.seed = seed;
  switch (intensity) {
    case shifts::ShiftIntensity::Small:
      spec.concept_targets.push_back(
          {concept_name, card - 1, shifts::ConceptMode::Remove});
      break;
    case shifts::ShiftIntensity::Medium:
      for (int v = card / 2; v < card; ++v)
        spec.concept_targets.push_back({concept_name, v, shifts::ConceptMode::Remove});
      break;
    default:
      spec.concept_targets.push_back(
          {concept_name, card - 1, shifts::ConceptMode::KeepOnly});
      break;
  }
  return spec;
}

ExperimentConfig desk_default_config(const std::string& dataset,
                                     std::uint64_t master_seed) {
  ExperimentConfig c;
  c.dataset = dataset;
  c.dataset_n = dataset == "rooms" ? 20000 : 100000;
  c.master_seed = master_seed;
  c.methods = models::all_methods();
  c.sample_sizes = {10, 20, 50, 100, 200, 500, 1000, 2000};
  c.train.seed = master_seed + 2;
  // Dense colored inputs destabilize SGD at the binary-image default rate.
  if (dataset == "rooms") c.train.learning_rate = 0.01;

  const auto schema = dataset == "rooms" ? datagen::rooms_schema()
                                         : datagen::sprites_schema();
  shifts::ShiftSpec none;
  none.kind = shifts::ShiftKind::None;
  none.seed = master_seed + 100;
  c.shift_specs.push_back(none);

  shifts::ShiftSpec gaussian;
  gaussian.kind = shifts::ShiftKind::Gaussian;
  gaussian.intensity = shifts::ShiftIntensity::Medium;
  gaussian.delta = 0.5;
  gaussian.seed = master_seed + 101;
  c.shift_specs.push_back(gaussian);

  shifts::ShiftSpec knockout;
  knockout.kind = shifts::ShiftKind::Knockout;
  knockout.intensity = shifts::ShiftIntensity::Medium;
  knockout.delta = 0.5;
  knockout.seed = master_seed + 102;
  c.shift_specs.push_back(knockout);

  const std::string concept_name = dataset == "rooms" ? "floor_hue" : "scale";
  c.shift_specs.push_back(concept_shift(schema, concept_name,
                                        shifts::ShiftIntensity::Large, 1.0,
                                        master_seed + 103));

  shifts::ShiftSpec translate;
  translate.kind = shifts::ShiftKind::Image;
  translate.image_ops = {shifts::ImageOp::Translate};
  translate.intensity = shifts::ShiftIntensity::Medium;
  translate.delta = 0.5;
  translate.seed = master_seed + 104;
  c.shift_specs.push_back(translate);
  return c;
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

json train_to_json(const models::TrainConfig& t) {
  return {{"hidden", t.hidden},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"momentum", t.momentum},
          {"seed", t.seed}};
}

models::TrainConfig train_from_json(const json& j) {
  models::TrainConfig t;
  if (j.contains("hidden")) j.at("hidden").get_to(t.hidden);
  if (j.contains("max_epochs")) j.at("max_epochs").get_to(t.max_epochs);
  if (j.contains("patience")) j.at("patience").get_to(t.patience);
  if (j.contains("batch_size")) j.at("batch_size").get_to(t.batch_size);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(t.learning_rate);
  if (j.contains("momentum")) j.at("momentum").get_to(t.momentum);
  if (j.contains("seed")) j.at("seed").get_to(t.seed);
  return t;
}

}  // namespace

std::string config_to_json_string(const ExperimentConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["dataset_n"] = c.dataset_n;
  j["master_seed"] = c.master_seed;
  j["methods"] = c.methods;
  j["continuous_test"] = c.continuous_test;
  j["sample_sizes"] = c.sample_sizes;
  json specs = json::array();
  for (const auto& s : c.shift_specs)
    specs.push_back(json::parse(shifts::to_json_string(s)));
  j["shifts"] = specs;
  j["runs_per_cell"] = c.runs_per_cell;
  j["repetitions"] = c.repetitions;
  j["alpha"] = c.alpha;
  j["mmd_permutations"] = c.mmd_permutations;
  j["css_df_normalize"] = c.css_df_normalize;
  j["train"] = train_to_json(c.train);
  j["pca_fit_samples"] = c.pca_fit_samples;
  j["pca_variance_target"] = c.pca_variance_target;
  j["split_ratios"] = {c.split_ratios.train, c.split_ratios.validation,
                       c.split_ratios.test};
  j["threads"] = c.threads;
  return j.dump(2);
}

ExperimentConfig config_from_json_string(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  j.at("dataset").get_to(c.dataset);
  j.at("dataset_n").get_to(c.dataset_n);
  j.at("master_seed").get_to(c.master_seed);
  j.at("methods").get_to(c.methods);
  if (j.contains("continuous_test")) j.at("continuous_test").get_to(c.continuous_test);
  j.at("sample_sizes").get_to(c.sample_sizes);
  for (const auto& s : j.at("shifts"))
    c.shift_specs.push_back(shifts::shift_spec_from_json_string(s.dump()));
  if (j.contains("runs_per_cell")) j.at("runs_per_cell").get_to(c.runs_per_cell);
  if (j.contains("repetitions")) j.at("repetitions").get_to(c.repetitions);
  if (j.contains("alpha")) j.at("alpha").get_to(c.alpha);
  if (j.contains("mmd_permutations"))
    j.at("mmd_permutations").get_to(c.mmd_permutations);
  if (j.contains("css_df_normalize"))
    j.at("css_df_normalize").get_to(c.css_df_normalize);
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("pca_fit_samples")) j.at("pca_fit_samples").get_to(c.pca_fit_samples);
  if (j.contains("pca_variance_target"))
    j.at("pca_variance_target").get_to(c.pca_variance_target);
  if (j.contains("split_ratios")) {
    auto r = j.at("split_ratios").get<std::vector<double>>();
    if (r.size() != 3) throw std::invalid_argument("split_ratios needs 3 entries");
    c.split_ratios = {r[0], r[1], r[2]};
  }
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot open config " + file.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json_string(ss.str());
}

// ---------------------------------------------------------------------------
// Model fitting with a disk cache

namespace {

std::uint64_t fnv64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string cache_key(const ExperimentConfig& c, const std::string& type) {
  std::ostringstream ss;
  ss << c.dataset << "|" << c.dataset_n << "|" << c.master_seed << "|" << type
     << "|" << c.pca_fit_samples << "|" << c.pca_variance_target << "|"
     << c.train.seed << "|" << c.train.learning_rate << "|" << c.train.momentum
     << "|" << c.train.batch_size << "|" << c.train.max_epochs << "|"
     << c.train.patience << "|";
  for (int h : c.train.hidden) ss << h << ",";
  ss << "|" << c.split_ratios.train << "," << c.split_ratios.validation << ","
     << c.split_ratios.test;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv64(ss.str())));
  return type + "-" + buf;
}

std::optional<FittedModel> try_load_cached(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "model.json")) return std::nullopt;
  try {
    return models::load_model(dir);
  } catch (const std::exception&) {
    return std::nullopt;  // stale or corrupt cache entry; refit
  }
}

}  // namespace

ModelBundle fit_models(const LatentFactorDataset& ds,
                       const datagen::SplitIndices& split,
                       const ExperimentConfig& config,
                       const std::filesystem::path& cache_dir) {
  ModelBundle bundle;
  const auto& methods = config.methods;
  auto wants = [&](const std::string& m) {
    return std::find(methods.begin(), methods.end(), m) != methods.end();
  };

  const bool need_pca = wants("pca") || wants("srp");  // srp copies pca's dims
  if (need_pca) {
    const auto dir = cache_dir / cache_key(config, "pca");
    if (auto cached = try_load_cached(dir)) {
      bundle.pca = std::move(*cached);
    } else {
      const int fit_n =
          std::min<int>(config.pca_fit_samples, static_cast<int>(split.train.size()));
      std::vector<int> fit_rows(split.train.begin(), split.train.begin() + fit_n);
      models::DatasetSource source(ds, fit_rows);
      FittedModel model;
      model.type = "pca";
      model.schema = ds.schema;
      model.pca = models::fit_pca_auto(source.materialize_all(),
                                       config.pca_variance_target);
      models::save_model(model, dir);
      bundle.pca = std::move(model);
    }
  }

  if (wants("srp")) {
    const auto dir = cache_dir / cache_key(config, "srp");
    if (auto cached = try_load_cached(dir)) {
      bundle.srp = std::move(*cached);
    } else {
      FittedModel model;
      model.type = "srp";
      model.schema = ds.schema;
      model.srp = models::fit_srp(ds.schema.pixels_per_image(),
                                  bundle.pca->pca.output_dims(),
                                  config.master_seed + 3);
      models::save_model(model, dir);
      bundle.srp = std::move(model);
    }
  }

  if (wants("bbsds") || wants("bbsdh")) {
    const auto dir = cache_dir / cache_key(config, "task");
    if (auto cached = try_load_cached(dir)) {
      bundle.task = std::move(*cached);
    } else {
      FittedModel model;
      model.type = "task";
      model.schema = ds.schema;
      model.net = models::train_task_classifier(ds, split, config.train);
      models::save_model(model, dir);
      bundle.task = std::move(model);
    }
  }

  if (wants("cbsds") || wants("cbsdh")) {
    const auto dir = cache_dir / cache_key(config, "cbm");
    if (auto cached = try_load_cached(dir)) {
      bundle.cbm = std::move(*cached);
    } else {
      FittedModel model;
      model.type = "cbm";
      model.schema = ds.schema;
      model.net = models::train_cbm(ds, split, config.train);
      models::save_model(model, dir);
      bundle.cbm = std::move(model);
    }
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Grid execution

namespace {

// Hard representation derived from the softmax representation: same forward
// pass, argmax per block with the lowest index winning ties.
Representation hard_from_soft(const Representation& soft,
                              const datagen::ConceptSchema& schema, bool per_concept) {
  Representation hard;
  const Eigen::Index n = soft.matrix.rows();
  if (!per_concept) {
    hard.matrix.resize(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < soft.matrix.cols(); ++c)
        if (soft.matrix(i, c) > soft.matrix(i, best)) best = c;
      hard.matrix(i, 0) = best;
    }
    hard.columns.push_back({true, static_cast<int>(soft.matrix.cols())});
    return hard;
  }
  const auto k = static_cast<Eigen::Index>(soft.groups.size());
  hard.matrix.resize(n, k);
  int col = 0;
  for (Eigen::Index g = 0; g < k; ++g) {
    const auto& group = soft.groups[static_cast<std::size_t>(g)];
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = group.begin;
      for (int c = group.begin + 1; c < group.end; ++c)
        if (soft.matrix(i, c) > soft.matrix(i, best)) best = c;
      hard.matrix(i, g) = best - group.begin;
    }
    hard.columns.push_back({true, group.cardinality});
    hard.groups.push_back({group.name, col, col + 1, group.cardinality});
    ++col;
  }
  (void)schema;
  return hard;
}

struct MethodPools {
  Representation source;  // validation split
  std::vector<Representation> target;  // one per shift spec
};

struct RunRecord {
  std::uint8_t detected = 0;
  double p = 1.0;
  std::vector<double> css;  // schema order, concept methods only
};

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double ci95_over_reps(const std::vector<double>& rep_means) {
  if (rep_means.size() < 2) return 0.0;
  const double mean = mean_of(rep_means);
  double ss = 0.0;
  for (double x : rep_means) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(rep_means.size() - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(rep_means.size()));
}

}  // namespace

ExperimentResults run_experiment(const ExperimentConfig& config,
                                 const std::filesystem::path& cache_dir) {
  config.validate();
  const int threads = config.threads > 0 ? config.threads : hardware_threads();

  LatentFactorDataset ds =
      datagen::generate(config.dataset, config.dataset_n, config.master_seed, threads);
  const auto split =
      datagen::split(ds.n, config.split_ratios, config.master_seed + 1);
  ModelBundle bundle = fit_models(ds, split, config, cache_dir);

  // Shift pools: apply each shift to the full test split once.
  LatentFactorDataset test_pool = datagen::gather(ds, split.test);
  std::vector<LatentFactorDataset> shifted_pools;
  shifted_pools.reserve(config.shift_specs.size());
  for (const auto& spec : config.shift_specs)
    shifted_pools.push_back(shifts::apply_shift(test_pool, spec));

  // Reduce the validation pool and every shifted pool once per model family;
  // per-run sampling then only gathers representation rows.
  std::vector<int> val_rows(split.validation.begin(), split.validation.end());
  auto reduce_family = [&](const FittedModel& model,
                           const std::string& method) -> MethodPools {
    MethodPools pools;
    pools.source = models::reduce(model, method, ds, val_rows);
    pools.target.reserve(shifted_pools.size());
    for (const auto& pool : shifted_pools) {
      std::vector<int> rows(static_cast<std::size_t>(pool.n));
      for (int i = 0; i < pool.n; ++i) rows[static_cast<std::size_t>(i)] = i;
      pools.target.push_back(models::reduce(model, method, pool, rows));
    }
    return pools;
  };

  std::map<std::string, MethodPools> pools_by_method;
  for (const auto& method : config.methods) {
    if (method == "pca") {
      pools_by_method["pca"] = reduce_family(*bundle.pca, "pca");
    } else if (method == "srp") {
      pools_by_method["srp"] = reduce_family(*bundle.srp, "srp");
    } else if (method == "bbsds" || method == "bbsdh") {
      if (!pools_by_method.count("bbsds"))
        pools_by_method["bbsds"] = reduce_family(*bundle.task, "bbsds");
    } else {
      if (!pools_by_method.count("cbsds"))
        pools_by_method["cbsds"] = reduce_family(*bundle.cbm, "cbsds");
    }
  }
  if (std::find(config.methods.begin(), config.methods.end(), "bbsdh") !=
      config.methods.end()) {
    const auto& soft = pools_by_method.at("bbsds");
    MethodPools hard;
    hard.source = hard_from_soft(soft.source, ds.schema, false);
    for (const auto& t : soft.target)
      hard.target.push_back(hard_from_soft(t, ds.schema, false));
    pools_by_method["bbsdh"] = std::move(hard);
  }
  if (std::find(config.methods.begin(), config.methods.end(), "cbsdh") !=
      config.methods.end()) {
    const auto& soft = pools_by_method.at("cbsds");
    MethodPools hard;
    hard.source = hard_from_soft(soft.source, ds.schema, true);
    for (const auto& t : soft.target)
      hard.target.push_back(hard_from_soft(t, ds.schema, true));
    pools_by_method["cbsdh"] = std::move(hard);
  }

  // Cell grid: shift x method x size, enumerated in config order.
  struct CellPlan {
    int shift_idx, method_idx, size_idx;
    std::size_t cell_id;
  };
  std::vector<CellPlan> plans;
  std::size_t cell_id = 0;
  for (int sh = 0; sh < static_cast<int>(config.shift_specs.size()); ++sh)
    for (int m = 0; m < static_cast<int>(config.methods.size()); ++m)
      for (int sz = 0; sz < static_cast<int>(config.sample_sizes.size()); ++sz)
        plans.push_back({sh, m, sz, cell_id++});

  const int total_runs = config.runs_per_cell * config.repetitions;
  const int val_pool_n = static_cast<int>(val_rows.size());

  // Preflight: target pools must cover every requested size.
  for (const auto& plan : plans) {
    const int pool_n = shifted_pools[static_cast<std::size_t>(plan.shift_idx)].n;
    const int size = config.sample_sizes[static_cast<std::size_t>(plan.size_idx)];
    if (size > pool_n)
      throw std::invalid_argument(
          "sample size " + std::to_string(size) + " exceeds the " +
          config.shift_specs[static_cast<std::size_t>(plan.shift_idx)].describe() +
          " test pool (" + std::to_string(pool_n) + ")");
  }

  std::vector<std::vector<RunRecord>> records(plans.size());
  for (auto& r : records) r.resize(static_cast<std::size_t>(total_runs));

  const Rng run_root = Rng(config.master_seed).fork(kRunStream);
  const detector::TestChoice continuous_choice =
      detector::test_choice_from(config.continuous_test);

  // Flat task list over (cell, run); each task writes its own slot.
  const std::size_t tasks = plans.size() * static_cast<std::size_t>(total_runs);
  parallel_for(tasks, threads, [&](std::size_t task) {
    const std::size_t plan_idx = task / static_cast<std::size_t>(total_runs);
    const int run = static_cast<int>(task % static_cast<std::size_t>(total_runs));
    const CellPlan& plan = plans[plan_idx];
    const std::string& method =
        config.methods[static_cast<std::size_t>(plan.method_idx)];
    const int size = config.sample_sizes[static_cast<std::size_t>(plan.size_idx)];
    const auto& pools = pools_by_method.at(method);
    const Representation& target_pool =
        pools.target[static_cast<std::size_t>(plan.shift_idx)];

    Rng rng = run_root.fork(plan.cell_id).fork(static_cast<std::uint64_t>(run));
    const int source_k = std::min(size, val_pool_n);
    auto source_rows = rng.sample_without_replacement(val_pool_n, source_k);
    auto target_rows =
        rng.sample_without_replacement(target_pool.samples(), size);

    Representation src = pools.source.take_rows(source_rows);
    Representation tgt = target_pool.take_rows(target_rows);

    detector::DetectOptions options;
    options.method_label = method;
    options.mmd_permutations = config.mmd_permutations;
    options.seed = rng.next_u64();
    options.css_df_normalize = config.css_df_normalize;
    const detector::TestChoice choice =
        is_hard_method(method) ? detector::TestChoice::Auto : continuous_choice;

    auto report = detector::detect(src, tgt, choice, config.alpha, options);

    RunRecord& rec = records[plan_idx][static_cast<std::size_t>(run)];
    rec.detected = report.shift_detected ? 1 : 0;
    rec.p = report.combined_p;
    if (is_concept_method(method)) {
      // Store CSS in schema order for stable aggregation.
      rec.css.assign(ds.schema.concepts.size(), 0.0);
      for (const auto& cr : report.per_concept) {
        const int idx = ds.schema.concept_index(cr.concept_name);
        if (idx >= 0) rec.css[static_cast<std::size_t>(idx)] = cr.css;
      }
    }
  });

  ExperimentResults results;
  results.config = config;
  auto summarize = [&](const std::optional<FittedModel>& model) {
    if (!model) return;
    ModelSummary s;
    s.type = model->type;
    if (model->type == "pca") {
      s.output_dims = model->pca.output_dims();
    } else if (model->type == "srp") {
      s.output_dims = model->srp.output_dims;
    } else {
      s.output_dims = model->net.softmax_dims();
      s.head_accuracies = model->net.head_accuracies;
      s.label_validation_accuracy = model->net.label_validation_accuracy;
    }
    results.model_summaries.push_back(std::move(s));
  };
  summarize(bundle.pca);
  summarize(bundle.srp);
  summarize(bundle.task);
  summarize(bundle.cbm);

  for (const auto& plan : plans) {
    const auto& spec = config.shift_specs[static_cast<std::size_t>(plan.shift_idx)];
    const std::string& method =
        config.methods[static_cast<std::size_t>(plan.method_idx)];
    const auto& runs = records[plan.cell_id];

    CellResult cell;
    cell.dataset = config.dataset;
    cell.method = method;
    cell.test = is_hard_method(method) ? "chi2" : config.continuous_test;
    cell.shift_kind = spec.describe();
    cell.intensity = spec.intensity_name();
    cell.delta = spec.delta;
    cell.is_shift = spec.kind != shifts::ShiftKind::None;
    cell.sample_size = config.sample_sizes[static_cast<std::size_t>(plan.size_idx)];
    cell.runs = total_runs;

    int correct = 0;
    std::vector<double> rep_means(static_cast<std::size_t>(config.repetitions), 0.0);
    for (int r = 0; r < total_runs; ++r) {
      const bool detected = runs[static_cast<std::size_t>(r)].detected != 0;
      const bool ok = cell.is_shift ? detected : !detected;
      if (ok) {
        ++correct;
        rep_means[static_cast<std::size_t>(r / config.runs_per_cell)] += 1.0;
      }
      cell.run_detected.push_back(runs[static_cast<std::size_t>(r)].detected);
      cell.run_p.push_back(runs[static_cast<std::size_t>(r)].p);
    }
    for (auto& m : rep_means) m /= static_cast<double>(config.runs_per_cell);
    cell.accuracy = static_cast<double>(correct) / static_cast<double>(total_runs);
    cell.ci95 = ci95_over_reps(rep_means);
    cell.mean_p = mean_of(cell.run_p);

    if (is_concept_method(method)) {
      const std::size_t k = ds.schema.concepts.size();
      cell.run_css.reserve(static_cast<std::size_t>(total_runs) * k);
      for (int r = 0; r < total_runs; ++r)
        for (std::size_t c = 0; c < k; ++c)
          cell.run_css.push_back(runs[static_cast<std::size_t>(r)].css[c]);
      for (std::size_t c = 0; c < k; ++c) {
        ConceptCssAggregate agg;
        agg.concept_name = ds.schema.concepts[c].name;
        std::vector<double> rep_css(static_cast<std::size_t>(config.repetitions), 0.0);
        double total = 0.0;
        for (int r = 0; r < total_runs; ++r) {
          const double v = runs[static_cast<std::size_t>(r)].css[c];
          total += v;
          rep_css[static_cast<std::size_t>(r / config.runs_per_cell)] += v;
        }
        for (auto& m : rep_css) m /= static_cast<double>(config.runs_per_cell);
        agg.mean_css = total / static_cast<double>(total_runs);
        agg.ci95 = ci95_over_reps(rep_css);
        cell.css.push_back(std::move(agg));
      }
    }
    results.cells.push_back(std::move(cell));
  }
  return results;
}

// ---------------------------------------------------------------------------
// Report emission

namespace {

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

json cell_to_json(const CellResult& c) {
  json j;
  j["dataset"] = c.dataset;
  j["method"] = c.method;
  j["test"] = c.test;
  j["shift_kind"] = c.shift_kind;
  j["intensity"] = c.intensity;
  j["delta"] = c.delta;
  j["is_shift"] = c.is_shift;
  j["sample_size"] = c.sample_size;
  j["runs"] = c.runs;
  j["accuracy"] = c.accuracy;
  j["ci95"] = c.ci95;
  j["mean_p"] = c.mean_p;
  j["run_detected"] = c.run_detected;
  j["run_p"] = c.run_p;
  if (!c.run_css.empty()) j["run_css"] = c.run_css;
  if (!c.css.empty()) {
    json css = json::array();
    for (const auto& a : c.css)
      css.push_back({{"concept", a.concept_name},
                     {"mean_css", a.mean_css},
                     {"ci95", a.ci95}});
    j["css"] = css;
  }
  return j;
}

CellResult cell_from_json(const json& j) {
  CellResult c;
  j.at("dataset").get_to(c.dataset);
  j.at("method").get_to(c.method);
  j.at("test").get_to(c.test);
  j.at("shift_kind").get_to(c.shift_kind);
  j.at("intensity").get_to(c.intensity);
  j.at("delta").get_to(c.delta);
  j.at("is_shift").get_to(c.is_shift);
  j.at("sample_size").get_to(c.sample_size);
  j.at("runs").get_to(c.runs);
  j.at("accuracy").get_to(c.accuracy);
  j.at("ci95").get_to(c.ci95);
  j.at("mean_p").get_to(c.mean_p);
  j.at("run_detected").get_to(c.run_detected);
  j.at("run_p").get_to(c.run_p);
  if (j.contains("run_css")) j.at("run_css").get_to(c.run_css);
  if (j.contains("css")) {
    for (const auto& a : j.at("css")) {
      ConceptCssAggregate agg;
      a.at("concept").get_to(agg.concept_name);
      a.at("mean_css").get_to(agg.mean_css);
      a.at("ci95").get_to(agg.ci95);
      c.css.push_back(std::move(agg));
    }
  }
  return c;
}

}  // namespace

void emit_reports(const ExperimentResults& results,
                  const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  const auto& cells = results.cells;
  if (cells.empty()) throw std::invalid_argument("emit_reports: no results");

  // accuracy.csv
  {
    std::ostringstream csv;
    csv << "# accuracy = correct decisions / runs; ci95 = 1.96*sd/sqrt(reps) "
           "over the per-repetition accuracy means\n";
    csv << "dataset,method,test,shift_kind,intensity,delta,sample_size,runs,"
           "accuracy,ci95,mean_p\n";
    for (const auto& c : cells) {
      csv << c.dataset << "," << c.method << "," << c.test << "," << c.shift_kind
          << "," << c.intensity << "," << fmt6(c.delta) << "," << c.sample_size
          << "," << c.runs << "," << fmt6(c.accuracy) << "," << fmt6(c.ci95)
          << "," << fmt6(c.mean_p) << "\n";
    }
    write_file(outdir / "accuracy.csv", csv.str());
  }

  // css.csv
  {
    std::ostringstream csv;
    csv << "dataset,method,shift_kind,intensity,delta,sample_size,concept,"
           "mean_css,ci95\n";
    for (const auto& c : cells)
      for (const auto& a : c.css)
        csv << c.dataset << "," << c.method << "," << c.shift_kind << ","
            << c.intensity << "," << fmt6(c.delta) << "," << c.sample_size << ","
            << a.concept_name << "," << fmt6(a.mean_css) << "," << fmt6(a.ci95)
            << "\n";
    write_file(outdir / "css.csv", csv.str());
  }

  // pvalues.csv
  {
    std::ostringstream csv;
    csv << "dataset,method,test,shift_kind,intensity,delta,sample_size,mean_p,"
           "median_p,min_p,max_p\n";
    for (const auto& c : cells) {
      std::vector<double> p = c.run_p;
      std::sort(p.begin(), p.end());
      const double median = p.empty() ? 0.0 : p[(p.size() - 1) / 2];
      const double lo = p.empty() ? 0.0 : p.front();
      const double hi = p.empty() ? 0.0 : p.back();
      csv << c.dataset << "," << c.method << "," << c.test << "," << c.shift_kind
          << "," << c.intensity << "," << fmt6(c.delta) << "," << c.sample_size
          << "," << fmt6(c.mean_p) << "," << fmt6(median) << "," << fmt6(lo)
          << "," << fmt6(hi) << "\n";
    }
    write_file(outdir / "pvalues.csv", csv.str());
  }

  // results.json (raw data for `report` re-emission)
  {
    json j;
    j["config"] = json::parse(config_to_json_string(results.config));
    json cell_array = json::array();
    for (const auto& c : cells) cell_array.push_back(cell_to_json(c));
    j["cells"] = cell_array;
    json summaries = json::array();
    for (const auto& s : results.model_summaries) {
      json sj;
      sj["type"] = s.type;
      sj["output_dims"] = s.output_dims;
      json accs = json::array();
      for (const auto& a : s.head_accuracies)
        accs.push_back({{"name", a.name},
                        {"train_accuracy", a.train},
                        {"validation_accuracy", a.validation}});
      sj["head_accuracies"] = accs;
      sj["label_validation_accuracy"] = s.label_validation_accuracy;
      summaries.push_back(sj);
    }
    j["models"] = summaries;
    write_file(outdir / "results.json", j.dump(2) + "\n");
  }

  // SVG accuracy charts: one per shift spec, accuracy vs sample size.
  std::vector<std::string> shift_kinds;
  for (const auto& c : cells)
    if (std::find(shift_kinds.begin(), shift_kinds.end(), c.shift_kind) ==
        shift_kinds.end())
      shift_kinds.push_back(c.shift_kind);

  for (const auto& kind : shift_kinds) {
    svg::LineChart chart;
    chart.title = results.config.dataset + ": " + kind;
    chart.x_label = "test sample size";
    chart.y_label = "detection accuracy";
    chart.log_x = true;
    chart.y_min = 0.0;
    chart.y_max = 1.0;
    for (const auto& method : results.config.methods) {
      svg::Series series;
      series.label = method;
      for (const auto& c : cells) {
        if (c.shift_kind != kind || c.method != method) continue;
        series.x.push_back(c.sample_size);
        series.y.push_back(c.accuracy);
        series.y_err.push_back(c.ci95);
      }
      if (!series.x.empty()) chart.series.push_back(std::move(series));
    }
    if (!chart.series.empty())
      write_file(outdir / ("accuracy_" + sanitize(kind) + ".svg"),
                 svg::render_line_chart(chart));
  }

  // CSS bar charts per shifted cell group, at the largest sample size.
  for (const auto& kind : shift_kinds) {
    int best_size = -1;
    for (const auto& c : cells)
      if (c.shift_kind == kind && !c.css.empty())
        best_size = std::max(best_size, c.sample_size);
    if (best_size < 0) continue;

    svg::BarChart chart;
    chart.title = results.config.dataset + ": CSS under " + kind + " (n=" +
                  std::to_string(best_size) + ")";
    chart.y_label = "concept shift score";
    std::vector<const CellResult*> concept_cells;
    for (const auto& c : cells)
      if (c.shift_kind == kind && c.sample_size == best_size && !c.css.empty())
        concept_cells.push_back(&c);
    if (concept_cells.empty()) continue;
    for (const auto* c : concept_cells) chart.series_labels.push_back(c->method);
    const auto& concepts = concept_cells.front()->css;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
      svg::BarGroup group;
      group.label = concepts[i].concept_name;
      for (const auto* c : concept_cells) {
        group.values.push_back(c->css[i].mean_css);
        group.errors.push_back(c->css[i].ci95);
      }
      chart.groups.push_back(std::move(group));
    }
    write_file(outdir / ("css_" + sanitize(kind) + ".svg"),
               svg::render_bar_chart(chart));
  }
}

ExperimentResults load_results(const std::filesystem::path& results_json) {
  std::ifstream f(results_json);
  if (!f) throw std::runtime_error("cannot open " + results_json.string());
  json j;
  f >> j;
  ExperimentResults results;
  results.config = config_from_json_string(j.at("config").dump());
  for (const auto& c : j.at("cells")) results.cells.push_back(cell_from_json(c));
  if (j.contains("models")) {
    for (const auto& sj : j.at("models")) {
      ModelSummary s;
      sj.at("type").get_to(s.type);
      sj.at("output_dims").get_to(s.output_dims);
      for (const auto& a : sj.at("head_accuracies"))
        s.head_accuracies.push_back({a.at("name").get<std::string>(),
                                     a.at("train_accuracy").get<double>(),
                                     a.at("validation_accuracy").get<double>()});
      sj.at("label_validation_accuracy").get_to(s.label_validation_accuracy);
      results.model_summaries.push_back(std::move(s));
    }
  }
  return results;
}

}  // namespace shiftlens::harness
