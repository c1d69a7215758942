#include "basgcn/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace basgcn;

struct CliValues {
  std::string config_file;
  std::string dataset;
  std::string data_dir;
  std::string cache_dir;
  std::string out_dir;
  int m = 0;
  int levels = 0;
  std::string mode;
  std::string prototypes;
  int epochs = 0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  int fold = 0;
  int m_start = 16, m_end = 64, m_step = 8;
};

// Defaults, then config file, then explicitly passed flags.
ExperimentConfig merge_config(const CLI::App& app, const CliValues& v) {
  ExperimentConfig cfg;
  cfg.cache_dir = "cache";
  if (app.count("--config")) load_config_file(cfg, v.config_file);
  if (app.count("--dataset")) cfg.dataset = v.dataset;
  if (app.count("--data-dir")) cfg.data_dir = v.data_dir;
  if (app.count("--cache-dir")) cfg.cache_dir = v.cache_dir;
  if (app.count("--out-dir")) cfg.out_dir = v.out_dir;
  if (app.count("--m")) apply_config_entry(cfg, "m", std::to_string(v.m));
  if (app.count("--levels")) apply_config_entry(cfg, "levels", std::to_string(v.levels));
  if (app.count("--mode")) apply_config_entry(cfg, "mode", v.mode);
  if (app.count("--prototypes")) apply_config_entry(cfg, "prototypes", v.prototypes);
  if (app.count("--epochs")) apply_config_entry(cfg, "epochs", std::to_string(v.epochs));
  if (app.count("--batch-size")) apply_config_entry(cfg, "batch_size", std::to_string(v.batch_size));
  if (app.count("--seed")) apply_config_entry(cfg, "seed", std::to_string(v.seed));
  if (app.count("--threads")) apply_config_entry(cfg, "threads", std::to_string(v.threads));
  if (cfg.dataset.empty()) throw std::runtime_error("no dataset given (use --dataset or a config file)");
  return cfg;
}

int cmd_prepare(const ExperimentConfig& cfg) {
  GraphDataset ds = load_dataset(cfg);
  auto [set, cache_hit] = prepare_grids(cfg, ds);
  std::cout << "dataset " << ds.name << ": " << ds.graphs.size() << " graphs, "
            << ds.class_alphabet.size() << " classes, " << ds.label_alphabet.size()
            << " vertex labels\n";
  std::cout << "grids: M=" << set.grid_size << " L=" << set.levels << " channels=" << set.channels
            << (cache_hit ? " (cache hit)" : " (built and cached)") << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, int fold) {
  GraphDataset ds = load_dataset(cfg);
  FoldResult r = train_single(cfg, ds, fold);
  std::cout << "fold " << r.fold << ": accuracy " << r.accuracy << " after " << r.epochs
            << " epochs (" << r.seconds << " s)\n";
  std::cout << "checkpoint: "
            << (cfg.out_dir / (cfg.dataset + "_fold" + std::to_string(fold) + ".ckpt")).string()
            << "\n";
  return 0;
}

int cmd_cv(const ExperimentConfig& cfg) {
  GraphDataset ds = load_dataset(cfg);
  CvReport report = run_cross_validation(cfg, ds);
  std::filesystem::create_directories(cfg.out_dir);
  write_results_csv(results_csv_path(cfg), report.rows);
  write_summary_json(summary_json_path(cfg), cfg, report);
  std::cout << render_report(report, cfg.dataset + " (" + to_string(cfg.mode) + ")");
  std::cout << "results: " << results_csv_path(cfg).string() << "\n";
  return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
  bool any = false;
  std::optional<CvReport> directed, undirected;
  for (EdgeMode mode : {EdgeMode::directed, EdgeMode::undirected}) {
    ExperimentConfig view = cfg;
    view.mode = mode;
    auto path = results_csv_path(view);
    if (!std::filesystem::exists(path)) continue;
    any = true;
    CvReport report = summarize(read_results_csv(path));
    std::cout << render_report(report, cfg.dataset + " (" + std::string(to_string(mode)) + ")");
    (mode == EdgeMode::directed ? directed : undirected) = std::move(report);
  }
  if (directed && undirected) {
    std::cout << render_mode_comparison(*directed, *undirected, cfg.dataset);
  }
  if (!any) {
    throw std::runtime_error("no results found under " + cfg.out_dir.string() + " for " + cfg.dataset);
  }
  return 0;
}

int cmd_sweep_m(const ExperimentConfig& cfg, int m_start, int m_end, int m_step) {
  if (m_step < 1 || m_end < m_start) throw std::runtime_error("bad sweep range");
  GraphDataset ds = load_dataset(cfg);
  std::vector<int> ms;
  for (int m = m_start; m <= m_end; m += m_step) ms.push_back(m);
  auto runs = sweep_grid_sizes(cfg, ds, ms);
  std::filesystem::create_directories(cfg.out_dir);
  auto path = cfg.out_dir / ("sweep_m_" + cfg.dataset + ".csv");
  std::ofstream out(path, std::ios::trunc);
  out << "m,mean_accuracy,stderr\n";
  std::cout << "m     mean accuracy  std error\n";
  char buf[100];
  for (const auto& [m, report] : runs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", m, report.mean_accuracy,
                  report.stderr_over_rows);
    out << buf;
    std::snprintf(buf, sizeof buf, "%-5d %13.4f  %9.4f\n", m, report.mean_accuracy,
                  report.stderr_over_rows);
    std::cout << buf;
  }
  std::cout << "sweep results: " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Backtrackless aligned-grid graph classification"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  CliValues v;

  app.add_option("--config", v.config_file, "key = value config file");
  app.add_option("--dataset", v.dataset, "dataset name (TU flat-file layout)");
  app.add_option("--data-dir", v.data_dir, "data root containing <dataset>/ (default $BASGCN_DATA or ./data)");
  app.add_option("--cache-dir", v.cache_dir, "grid cache directory (default ./cache)");
  app.add_option("--out-dir", v.out_dir, "output directory for results");
  app.add_option("--m", v.m, "aligned grid size (prototypes per level)");
  app.add_option("--levels", v.levels, "alignment depth levels");
  app.add_option("--mode", v.mode, "directed | undirected");
  app.add_option("--prototypes", v.prototypes, "transductive | inductive");
  app.add_option("--epochs", v.epochs, "training epochs");
  app.add_option("--batch-size", v.batch_size, "mini-batch size");
  app.add_option("--seed", v.seed, "master seed");
  app.add_option("--threads", v.threads, "worker thread cap");

  auto* prepare = app.add_subcommand("prepare", "build and cache aligned grids");
  auto* train = app.add_subcommand("train", "train one model on a single fold split");
  train->add_option("--fold", v.fold, "test fold index (default 0)");
  auto* cv = app.add_subcommand("cv", "run stratified cross-validation");
  auto* report = app.add_subcommand("report", "render cached results");
  auto* sweep = app.add_subcommand("sweep-m", "cross-validate over a range of grid sizes");
  sweep->add_option("--m-start", v.m_start, "first grid size (default 16)");
  sweep->add_option("--m-end", v.m_end, "last grid size (default 64)");
  sweep->add_option("--m-step", v.m_step, "grid size step (default 8)");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = merge_config(app, v);
    if (prepare->parsed()) return cmd_prepare(cfg);
    if (train->parsed()) return cmd_train(cfg, v.fold);
    if (cv->parsed()) return cmd_cv(cfg);
    if (report->parsed()) return cmd_report(cfg);
    if (sweep->parsed()) return cmd_sweep_m(cfg, v.m_start, v.m_end, v.m_step);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
