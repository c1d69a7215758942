#include "basgcn/harness.hpp"

#include "basgcn/parallel.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace basgcn {
namespace {

std::vector<int> class_labels(const GraphDataset& ds) {
  std::vector<int> out;
  out.reserve(ds.graphs.size());
  for (const auto& g : ds.graphs) out.push_back(class_index(ds, g.graph_label));
  return out;
}

double sample_stderr(std::span<const double> values) {
  const auto n = values.size();
  if (n < 2) return 0;
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n));
}

struct FitOutcome {
  FoldResult result;
  std::unique_ptr<BasgcnModel<double>> model;
};

// Trains a fresh model on the training indices and evaluates on the test
// indices. Labels flow through the guard: the test fold is forbidden until
// evaluation starts.
FitOutcome fit_and_evaluate(const ExperimentConfig& cfg, const GraphDataset& ds,
                            const std::vector<GridTensors<double>>& tensors,
                            std::span<const int> train_idx, std::span<const int> test_idx,
                            int repeat, int fold) {
  const auto start = std::chrono::steady_clock::now();
  LabelGuard guard(class_labels(ds));
  guard.forbid(test_idx);

  BasgcnConfig model_cfg = cfg.model;
  model_cfg.seed = mix_seed(cfg.model.seed, 0x7A00u + static_cast<std::uint64_t>(repeat) * 1000u +
                                                static_cast<std::uint64_t>(fold));
  FitOutcome out;
  out.model = std::make_unique<BasgcnModel<double>>(
      model_cfg, static_cast<int>(ds.label_alphabet.size()), static_cast<int>(ds.class_alphabet.size()));

  std::vector<const GridTensors<double>*> train_tensors;
  std::vector<int> train_labels;
  train_tensors.reserve(train_idx.size());
  train_labels.reserve(train_idx.size());
  for (int i : train_idx) {
    train_tensors.push_back(&tensors[i]);
    train_labels.push_back(guard.label(i));
  }

  out.result.repeat = repeat;
  out.result.fold = fold;
  out.result.epochs = cfg.model.epochs;
  out.result.loss_trace.reserve(cfg.model.epochs);
  for (int epoch = 0; epoch < cfg.model.epochs; ++epoch) {
    out.result.loss_trace.push_back(
        out.model->train_epoch(train_tensors, train_labels, cfg.model.batch_size));
  }

  guard.allow_all();
  int correct = 0;
  for (int i : test_idx) {
    if (out.model->predict(tensors[i]).class_index == guard.label(i)) ++correct;
  }
  out.result.accuracy = test_idx.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_idx.size());
  out.result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<GridTensors<double>> tensors_for(const GridSet& set, EdgeMode mode) {
  std::vector<GridTensors<double>> out;
  out.reserve(set.grids.size());
  for (const auto& g : set.grids) out.push_back(make_grid_tensors(g, mode));
  return out;
}

void split_indices(const std::vector<int>& fold_of, int fold, std::vector<int>& train_idx,
                   std::vector<int>& test_idx) {
  train_idx.clear();
  test_idx.clear();
  for (int i = 0; i < static_cast<int>(fold_of.size()); ++i) {
    (fold_of[i] == fold ? test_idx : train_idx).push_back(i);
  }
  if (test_idx.empty() || train_idx.empty()) {
    throw std::runtime_error("fold " + std::to_string(fold) + " has an empty train or test side");
  }
}

}  // namespace

std::vector<int> stratified_folds(std::span<const int> class_indices, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("stratified_folds: need at least 2 folds");
  const int n = static_cast<int>(class_indices.size());
  int num_classes = 0;
  for (int c : class_indices) num_classes = std::max(num_classes, c + 1);
  std::vector<std::vector<int>> by_class(num_classes);
  for (int i = 0; i < n; ++i) by_class[class_indices[i]].push_back(i);

  std::mt19937_64 rng(mix_seed(seed, 0xF01Du));
  std::vector<int> fold_of(n, -1);
  int next_fold = 0;  // carried across classes to balance fold sizes
  for (auto& members : by_class) {
    for (int i = static_cast<int>(members.size()) - 1; i > 0; --i) {
      int j = static_cast<int>(uniform_unit(rng) * (i + 1));
      if (j > i) j = i;
      std::swap(members[i], members[j]);
    }
    for (int idx : members) {
      fold_of[idx] = next_fold;
      next_fold = (next_fold + 1) % folds;
    }
  }
  return fold_of;
}

CvReport summarize(std::vector<FoldResult> rows) {
  CvReport report;
  report.rows = std::move(rows);
  if (report.rows.empty()) return report;

  std::vector<double> accs;
  accs.reserve(report.rows.size());
  int max_repeat = 0;
  for (const auto& r : report.rows) {
    accs.push_back(r.accuracy);
    max_repeat = std::max(max_repeat, r.repeat);
  }
  report.mean_accuracy = 0;
  for (double a : accs) report.mean_accuracy += a;
  report.mean_accuracy /= static_cast<double>(accs.size());
  report.stderr_over_rows = sample_stderr(accs);

  report.repeat_means.assign(max_repeat + 1, 0);
  std::vector<int> counts(max_repeat + 1, 0);
  for (const auto& r : report.rows) {
    report.repeat_means[r.repeat] += r.accuracy;
    ++counts[r.repeat];
  }
  for (std::size_t i = 0; i < report.repeat_means.size(); ++i) {
    if (counts[i] > 0) report.repeat_means[i] /= counts[i];
  }
  report.stderr_over_repeats = sample_stderr(report.repeat_means);
  return report;
}

GraphDataset load_dataset(const ExperimentConfig& cfg) {
  std::filesystem::path root = cfg.data_dir;
  if (root.empty()) {
    if (const char* env = std::getenv("BASGCN_DATA")) root = env;
    else root = "data";
  }
  return load_tu_dataset(root / cfg.dataset, cfg.dataset);
}

std::pair<GridSet, bool> prepare_grids(const ExperimentConfig& cfg, const GraphDataset& ds) {
  GridParams params{cfg.model.grid_size, cfg.model.levels, cfg.model.seed};
  const std::uint64_t fp = grid_fingerprint(ds, params);
  std::filesystem::path cache_file;
  if (!cfg.cache_dir.empty()) {
    std::filesystem::create_directories(cfg.cache_dir);
    std::ostringstream name;
    name << ds.name << "_m" << params.grid_size << "_l" << params.levels << "_s" << params.seed
         << ".grids";
    cache_file = cfg.cache_dir / name.str();
    if (std::filesystem::exists(cache_file)) {
      return {read_grid_cache(cache_file, fp), true};
    }
  }
  GridSet set = build_grid_set(ds, params, cfg.threads);
  if (!cache_file.empty()) write_grid_cache(cache_file, set);
  return {std::move(set), false};
}

CvReport run_cross_validation(const ExperimentConfig& cfg, const GraphDataset& ds) {
  if (ds.graphs.empty()) throw std::runtime_error("cross-validation: empty dataset");
  const auto labels = class_labels(ds);

  std::vector<GridTensors<double>> shared_tensors;
  std::vector<MatrixX<double>> dbs;
  if (cfg.prototypes == PrototypeMode::transductive) {
    shared_tensors = tensors_for(prepare_grids(cfg, ds).first, cfg.mode);
  } else {
    dbs = dataset_db_representations(ds, cfg.model.levels, cfg.threads);
  }

  std::vector<std::vector<int>> assignments(cfg.repeats);
  for (int r = 0; r < cfg.repeats; ++r) {
    assignments[r] = stratified_folds(labels, cfg.folds, mix_seed(cfg.model.seed, 0x5EEDu + r));
  }

  const int tasks = cfg.repeats * cfg.folds;
  std::vector<FoldResult> rows(tasks);
  parallel_for(tasks, cfg.threads, [&](int task) {
    const int repeat = task / cfg.folds;
    const int fold = task % cfg.folds;
    std::vector<int> train_idx, test_idx;
    split_indices(assignments[repeat], fold, train_idx, test_idx);

    const std::vector<GridTensors<double>>* tensors = &shared_tensors;
    std::vector<GridTensors<double>> local;
    if (cfg.prototypes == PrototypeMode::inductive) {
      GridParams params{cfg.model.grid_size, cfg.model.levels,
                        mix_seed(cfg.model.seed, 0xF17u + static_cast<std::uint64_t>(task))};
      GridSet set = build_grid_set(ds, params, 1, train_idx, &dbs);
      local = tensors_for(set, cfg.mode);
      tensors = &local;
    }
    rows[task] = fit_and_evaluate(cfg, ds, *tensors, train_idx, test_idx, repeat, fold).result;
  });
  return summarize(std::move(rows));
}

FoldResult train_single(const ExperimentConfig& cfg, const GraphDataset& ds, int test_fold,
                        bool save_checkpoint) {
  const auto labels = class_labels(ds);
  const auto fold_of = stratified_folds(labels, cfg.folds, mix_seed(cfg.model.seed, 0x5EEDu));
  std::vector<int> train_idx, test_idx;
  split_indices(fold_of, test_fold, train_idx, test_idx);

  std::vector<GridTensors<double>> tensors;
  if (cfg.prototypes == PrototypeMode::transductive) {
    tensors = tensors_for(prepare_grids(cfg, ds).first, cfg.mode);
  } else {
    auto dbs = dataset_db_representations(ds, cfg.model.levels, cfg.threads);
    GridParams params{cfg.model.grid_size, cfg.model.levels, mix_seed(cfg.model.seed, 0xF17u)};
    tensors = tensors_for(build_grid_set(ds, params, cfg.threads, train_idx, &dbs), cfg.mode);
  }

  FitOutcome outcome = fit_and_evaluate(cfg, ds, tensors, train_idx, test_idx, 0, test_fold);
  if (save_checkpoint) {
    std::filesystem::create_directories(cfg.out_dir);
    outcome.model->save(cfg.out_dir / (cfg.dataset + "_fold" + std::to_string(test_fold) + ".ckpt"));
  }
  return outcome.result;
}

void write_results_csv(const std::filesystem::path& path, std::span<const FoldResult> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open results csv for writing: " + path.string());
  out << "repeat,fold,accuracy,epochs,seconds\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%d,%.6f\n", r.repeat, r.fold, r.accuracy, r.epochs,
                  r.seconds);
    out << buf;
  }
}

std::vector<FoldResult> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results csv: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("repeat,fold,accuracy", 0) != 0) {
    throw std::runtime_error("unrecognized results csv header: " + path.string());
  }
  std::vector<FoldResult> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    FoldResult r;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    if (!(ss >> r.repeat >> r.fold >> r.accuracy >> r.epochs >> r.seconds)) {
      throw std::runtime_error("malformed results row in " + path.string() + ": " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary_json(const std::filesystem::path& path, const ExperimentConfig& cfg,
                        const CvReport& report) {
  nlohmann::json j;
  j["dataset"] = cfg.dataset;
  j["mode"] = to_string(cfg.mode);
  j["prototypes"] = to_string(cfg.prototypes);
  j["folds"] = cfg.folds;
  j["repeats"] = cfg.repeats;
  j["model"] = {
      {"m", cfg.model.grid_size},         {"levels", cfg.model.levels},
      {"layers", cfg.model.conv_layers},  {"filters", cfg.model.conv_filters},
      {"epochs", cfg.model.epochs},       {"batch_size", cfg.model.batch_size},
      {"lr", cfg.model.learning_rate},    {"dropout", cfg.model.dropout_rate},
      {"seed", cfg.model.seed},
  };
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    j["rows"].push_back({{"repeat", r.repeat},
                         {"fold", r.fold},
                         {"accuracy", r.accuracy},
                         {"epochs", r.epochs},
                         {"seconds", r.seconds},
                         {"loss_trace", r.loss_trace}});
  }
  j["mean_accuracy"] = report.mean_accuracy;
  j["stderr_over_rows"] = report.stderr_over_rows;
  j["repeat_means"] = report.repeat_means;
  j["stderr_over_repeats"] = report.stderr_over_repeats;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open summary json for writing: " + path.string());
  out << j.dump(2) << "\n";
}

std::string render_report(const CvReport& report, const std::string& title) {
  std::ostringstream out;
  out << "== " << title << " ==\n";
  out << "repeat  fold  accuracy  seconds\n";
  char buf[120];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%6d  %4d  %8.4f  %7.1f\n", r.repeat, r.fold, r.accuracy,
                  r.seconds);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "mean accuracy: %.4f\n", report.mean_accuracy);
  out << buf;
  std::snprintf(buf, sizeof buf, "std error over folds: %.4f\n", report.stderr_over_rows);
  out << buf;
  std::snprintf(buf, sizeof buf, "std error over repeat means: %.4f\n", report.stderr_over_repeats);
  out << buf;
  return out.str();
}

std::string render_mode_comparison(const CvReport& directed, const CvReport& undirected,
                                   const std::string& dataset) {
  std::ostringstream out;
  out << "== " << dataset << ": directed vs undirected grids ==\n";
  char buf[120];
  std::snprintf(buf, sizeof buf, "%-12s  %-13s  %s\n", "mode", "mean accuracy", "std error");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-12s  %13.4f  %9.4f\n", "directed", directed.mean_accuracy,
                directed.stderr_over_rows);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-12s  %13.4f  %9.4f\n", "undirected", undirected.mean_accuracy,
                undirected.stderr_over_rows);
  out << buf;
  return out.str();
}

std::vector<std::pair<int, CvReport>> sweep_grid_sizes(const ExperimentConfig& cfg,
                                                       const GraphDataset& ds,
                                                       std::span<const int> ms) {
  std::vector<std::pair<int, CvReport>> out;
  out.reserve(ms.size());
  for (int m : ms) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.model.grid_size = m;
    out.emplace_back(m, run_cross_validation(run_cfg, ds));
  }
  return out;
}

std::filesystem::path results_csv_path(const ExperimentConfig& cfg) {
  return cfg.out_dir / ("results_" + cfg.dataset + "_" + to_string(cfg.mode) + ".csv");
}

std::filesystem::path summary_json_path(const ExperimentConfig& cfg) {
  return cfg.out_dir / ("summary_" + cfg.dataset + "_" + to_string(cfg.mode) + ".json");
}

}  // namespace basgcn
