#include "shiftlens/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shiftlens/datagen.hpp"
#include "shiftlens/detector.hpp"
#include "shiftlens/harness.hpp"
#include "shiftlens/models.hpp"
#include "shiftlens/thread_pool.hpp"

namespace shiftlens::cli {

namespace {

namespace fs = std::filesystem;

int env_threads() {
  if (const char* value = std::getenv("SHIFTLENS_THREADS")) {
    const int n = std::atoi(value);
    if (n > 0) return n;
  }
  return hardware_threads();
}

std::vector<int> full_index(int n) {
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

struct GenDataArgs {
  std::string schema;
  int n = 0;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 1;
};

struct TrainArgs {
  std::string dataset_dir;
  std::string method;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<int> hidden{256, 256};
  int max_epochs = 200;
  int patience = 10;
  int batch_size = 128;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int pca_dims = 0;  // 0 = auto by variance target
  double variance_target = 0.80;
  int pca_samples = 2000;
};

struct DetectArgs {
  std::string source_dir;
  std::string target_dir;
  std::string model_dir;
  std::string method;
  std::string test = "auto";
  double alpha = 0.05;
  bool json = false;
  int mmd_permutations = 1000;
  std::uint64_t seed = 0;
};

int do_gen_data(const GenDataArgs& args, std::ostream& out) {
  auto ds = datagen::generate(args.schema, args.n, args.seed, args.threads);
  datagen::save_dataset(ds, args.out);
  out << "wrote " << ds.n << " " << args.schema << " samples to " << args.out
      << "\n";
  return 0;
}

int do_train(const TrainArgs& args, std::ostream& out) {
  auto ds = datagen::load_dataset(args.dataset_dir);
  auto split = datagen::split(ds.n, {}, args.seed + 1);

  models::FittedModel model;
  model.schema = ds.schema;
  if (args.method == "pca" || args.method == "srp") {
    const int fit_n =
        std::min<int>(args.pca_samples, static_cast<int>(split.train.size()));
    std::vector<int> rows(split.train.begin(), split.train.begin() + fit_n);
    models::DatasetSource source(ds, rows);
    auto pca = args.pca_dims > 0
                   ? models::fit_pca(source.materialize_all(), args.pca_dims)
                   : models::fit_pca_auto(source.materialize_all(),
                                          args.variance_target);
    if (args.method == "pca") {
      model.type = "pca";
      model.pca = std::move(pca);
      out << "pca: " << model.pca.output_dims() << " components\n";
    } else {
      model.type = "srp";
      model.srp = models::fit_srp(ds.schema.pixels_per_image(),
                                  pca.output_dims(), args.seed);
      out << "srp: " << model.srp.output_dims << " components (density "
          << model.srp.density << ")\n";
    }
  } else if (args.method == "task" || args.method == "cbm") {
    models::TrainConfig config;
    config.hidden = args.hidden;
    config.max_epochs = args.max_epochs;
    config.patience = args.patience;
    config.batch_size = args.batch_size;
    config.learning_rate = args.learning_rate;
    config.momentum = args.momentum;
    config.seed = args.seed;
    model.type = args.method;
    model.net = args.method == "task"
                    ? models::train_task_classifier(ds, split, config)
                    : models::train_cbm(ds, split, config);
    for (const auto& acc : model.net.head_accuracies)
      out << acc.name << ": train " << acc.train << ", validation "
          << acc.validation << "\n";
    if (model.net.has_label_head)
      out << "label head validation accuracy: "
          << model.net.label_validation_accuracy << "\n";
  } else {
    throw CLI::ValidationError("--method",
                               "expected one of pca|srp|task|cbm, got '" +
                                   args.method + "'");
  }
  models::save_model(model, args.out);
  out << "model saved to " << args.out << "\n";
  return 0;
}

detector::DetectionReport detect_from_dirs(const DetectArgs& args) {
  auto model = models::load_model(args.model_dir);
  if (!models::method_needs_model_type(args.method, model.type))
    throw CLI::ValidationError("--method", "method '" + args.method +
                                               "' cannot use a '" + model.type +
                                               "' model");
  auto source = datagen::load_dataset(args.source_dir);
  auto target = datagen::load_dataset(args.target_dir);
  if (source.schema.name != model.schema.name ||
      target.schema.name != model.schema.name)
    throw CLI::ValidationError("--source/--target",
                               "dataset schema does not match the model");

  auto src_rep = models::reduce(model, args.method, source, full_index(source.n));
  auto tgt_rep = models::reduce(model, args.method, target, full_index(target.n));

  detector::DetectOptions options;
  options.method_label = args.method;
  options.mmd_permutations = args.mmd_permutations;
  options.seed = args.seed;
  options.provenance["source"] = args.source_dir;
  options.provenance["target"] = args.target_dir;
  options.provenance["model"] = args.model_dir;
  return detector::detect(src_rep, tgt_rep,
                          detector::test_choice_from(args.test), args.alpha,
                          options);
}

int do_detect(const DetectArgs& args, std::ostream& out) {
  auto report = detect_from_dirs(args);
  if (args.json) {
    out << detector::report_to_json_string(report) << "\n";
  } else {
    out << "method: " << report.method << "  test: " << report.test_used
        << "  alpha: " << report.alpha << "\n"
        << "source n: " << report.source_n << "  target m: " << report.target_m
        << "\n"
        << "combined p: " << report.combined_p << "\n"
        << "shift detected: " << (report.shift_detected ? "yes" : "no") << "\n";
    for (const auto& c : report.per_concept) {
      char line[160];
      std::snprintf(line, sizeof(line),
                    "  %-12s statistic %10.4f  p %10.3g  css %.4f\n",
                    c.concept_name.c_str(), c.statistic, c.p_value, c.css);
      out << line;
    }
  }
  return report.shift_detected ? 3 : 0;
}

int do_explain(const DetectArgs& args, std::ostream& out) {
  auto report = detect_from_dirs(args);
  if (report.per_concept.empty())
    throw CLI::ValidationError("--method", "explain needs a concept method "
                                           "(cbsds or cbsdh)");
  if (args.json) {
    out << detector::report_to_json_string(report) << "\n";
    return 0;
  }
  out << "concept ranking by CSS (" << report.method << ", "
      << report.test_used << "):\n";
  out << "rank concept      statistic        p-value      css\n";
  int rank = 1;
  for (const auto& c : report.per_concept) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-4d %-12s %10.4f %12.4g %8.4f\n", rank++,
                  c.concept_name.c_str(), c.statistic, c.p_value, c.css);
    out << line;
  }
  out << (report.shift_detected ? "shift detected" : "no shift detected") << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"shiftlens: explainable dataset-shift detection"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a latent-factor dataset");
  gen_cmd->add_option("--schema", gen.schema, "sprites or rooms")
      ->required()
      ->check(CLI::IsMember({"sprites", "rooms"}));
  gen_cmd->add_option("--n", gen.n, "number of samples")
      ->required()
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--threads", gen.threads, "worker threads");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "fit a dimensionality reducer");
  train_cmd->add_option("--dataset", train.dataset_dir, "dataset directory")
      ->required();
  train_cmd->add_option("--method", train.method, "pca | srp | task | cbm")
      ->required()
      ->check(CLI::IsMember({"pca", "srp", "task", "cbm"}));
  train_cmd->add_option("--out", train.out, "model output directory")->required();
  train_cmd->add_option("--seed", train.seed, "training seed");
  train_cmd->add_option("--hidden", train.hidden, "hidden layer widths");
  train_cmd->add_option("--epochs", train.max_epochs, "max epochs");
  train_cmd->add_option("--patience", train.patience, "early stopping patience");
  train_cmd->add_option("--batch-size", train.batch_size, "minibatch size");
  train_cmd->add_option("--lr", train.learning_rate, "learning rate");
  train_cmd->add_option("--momentum", train.momentum, "SGD momentum");
  train_cmd->add_option("--pca-dims", train.pca_dims,
                        "PCA/SRP output dims (0 = cover variance target)");
  train_cmd->add_option("--variance", train.variance_target,
                        "PCA cumulative variance target");
  train_cmd->add_option("--pca-samples", train.pca_samples,
                        "training samples used for the PCA fit");

  DetectArgs detect;
  auto* detect_cmd =
      app.add_subcommand("detect", "two-sample shift detection between datasets");
  detect_cmd->add_option("--source", detect.source_dir, "source dataset dir")
      ->required();
  detect_cmd->add_option("--target", detect.target_dir, "target dataset dir")
      ->required();
  detect_cmd->add_option("--model", detect.model_dir, "fitted model dir")
      ->required();
  detect_cmd->add_option("--method", detect.method,
                         "pca | srp | bbsds | bbsdh | cbsds | cbsdh")
      ->required()
      ->check(CLI::IsMember(models::all_methods()));
  detect_cmd->add_option("--test", detect.test, "auto | ks | mmd | chi2")
      ->check(CLI::IsMember({"auto", "ks", "mmd", "chi2"}));
  detect_cmd->add_option("--alpha", detect.alpha, "significance level");
  detect_cmd->add_flag("--json", detect.json, "emit the report as JSON");
  detect_cmd->add_option("--mmd-permutations", detect.mmd_permutations,
                         "permutations for the MMD test");
  detect_cmd->add_option("--seed", detect.seed, "seed for permutation draws");

  DetectArgs explain;
  explain.method = "cbsds";
  auto* explain_cmd =
      app.add_subcommand("explain", "rank concepts by concept shift score");
  explain_cmd->add_option("--source", explain.source_dir, "source dataset dir")
      ->required();
  explain_cmd->add_option("--target", explain.target_dir, "target dataset dir")
      ->required();
  explain_cmd->add_option("--model", explain.model_dir, "fitted cbm model dir")
      ->required();
  explain_cmd->add_option("--method", explain.method, "cbsds | cbsdh")
      ->check(CLI::IsMember({"cbsds", "cbsdh"}));
  explain_cmd->add_option("--alpha", explain.alpha, "significance level");
  explain_cmd->add_flag("--json", explain.json, "emit the report as JSON");
  explain_cmd->add_option("--seed", explain.seed, "seed for permutation draws");

  std::string exp_config, exp_out, exp_dataset = "sprites";
  std::uint64_t exp_seed = 7;
  int exp_threads = 0;
  auto* exp_cmd = app.add_subcommand("experiment", "run an experiment grid");
  exp_cmd->add_option("--config", exp_config,
                      "config JSON (omit for the desk-scale default grid)");
  exp_cmd->add_option("--out", exp_out, "output directory")->required();
  exp_cmd->add_option("--dataset", exp_dataset, "dataset for the default grid")
      ->check(CLI::IsMember({"sprites", "rooms"}));
  exp_cmd->add_option("--seed", exp_seed, "master seed for the default grid");
  exp_cmd->add_option("--threads", exp_threads,
                      "worker threads (default: SHIFTLENS_THREADS or hardware)");

  std::string report_dir;
  auto* report_cmd =
      app.add_subcommand("report", "re-emit CSV/SVG reports from results.json");
  report_cmd->add_option("--results", report_dir,
                         "directory containing results.json")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return 2;
  }

  try {
    if (gen_cmd->parsed()) return do_gen_data(gen, out);
    if (train_cmd->parsed()) return do_train(train, out);
    if (detect_cmd->parsed()) return do_detect(detect, out);
    if (explain_cmd->parsed()) return do_explain(explain, out);
    if (exp_cmd->parsed()) {
      harness::ExperimentConfig config;
      if (!exp_config.empty()) {
        config = harness::load_config(exp_config);
      } else {
        config = harness::desk_default_config(exp_dataset, exp_seed);
      }
      if (exp_threads > 0)
        config.threads = exp_threads;
      else if (config.threads == 0)
        config.threads = env_threads();
      const fs::path outdir(exp_out);
      fs::create_directories(outdir);
      {
        std::ofstream snapshot(outdir / "config.json");
        snapshot << harness::config_to_json_string(config) << "\n";
      }
      auto results = harness::run_experiment(config, outdir / "cache");
      harness::emit_reports(results, outdir);
      out << "wrote " << results.cells.size() << " cells to " << exp_out << "\n";
      return 0;
    }
    if (report_cmd->parsed()) {
      const fs::path dir(report_dir);
      auto results = harness::load_results(dir / "results.json");
      harness::emit_reports(results, dir);
      out << "reports regenerated in " << report_dir << "\n";
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    err << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "no subcommand\n";
  return 2;
}

}  // namespace shiftlens::cli
