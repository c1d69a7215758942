#pragma once

#include "basgcn/grid_cache.hpp"
#include "basgcn/model.hpp"
#include "basgcn/tu_loader.hpp"

#include <optional>

namespace basgcn {

enum class PrototypeMode { transductive, inductive };

inline const char* to_string(PrototypeMode m) {
  return m == PrototypeMode::transductive ? "transductive" : "inductive";
}

struct ExperimentConfig {
  std::string dataset;
  std::filesystem::path data_dir;
  std::filesystem::path cache_dir;  // empty disables the grid cache
  std::filesystem::path out_dir = "results";
  BasgcnConfig model;
  int folds = 10;
  int repeats = 1;
  int threads = 1;
  PrototypeMode prototypes = PrototypeMode::transductive;
  EdgeMode mode = EdgeMode::directed;
};

// Config files are plain "key = value" lines; '#' starts a comment. Keys
// mirror the CLI flags:
//   dataset, data_dir, cache_dir, out_dir     strings / paths
//   m, levels, layers, filters                grid and network sizes
//   epochs, batch_size, folds, repeats        training protocol
//   lr, dropout                               reals
//   seed                                      unsigned integer
//   threads                                   worker cap
//   mode                                      directed | undirected
//   prototypes                                transductive | inductive
// Unknown keys and malformed values raise std::runtime_error.
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

// Class-stratified fold assignment: within every class, shuffled indices are
// dealt round-robin, so per-class counts differ by at most one across folds.
std::vector<int> stratified_folds(std::span<const int> class_indices, int folds, std::uint64_t seed);

// Gate in front of the class labels. Test-fold labels are forbidden during
// training and reading one throws; evaluation lifts the gate. Keeps the
// transductive protocol honest by construction.
class LabelGuard {
 public:
  explicit LabelGuard(std::vector<int> labels)
      : labels_(std::move(labels)), forbidden_(labels_.size(), 0) {}
  void forbid(std::span<const int> indices) {
    for (int i : indices) forbidden_.at(i) = 1;
  }
  void allow_all() { std::fill(forbidden_.begin(), forbidden_.end(), 0); }
  int label(int index) const {
    if (forbidden_.at(index)) {
      throw std::logic_error("label of graph " + std::to_string(index) +
                             " read while it belongs to a test fold");
    }
    return labels_[index];
  }
  int size() const { return static_cast<int>(labels_.size()); }

 private:
  std::vector<int> labels_;
  std::vector<char> forbidden_;
};

struct FoldResult {
  int repeat = 0;
  int fold = 0;
  double accuracy = 0;
  int epochs = 0;
  double seconds = 0;
  std::vector<double> loss_trace;
};

struct CvReport {
  std::vector<FoldResult> rows;
  double mean_accuracy = 0;
  double stderr_over_rows = 0;      // standard error across all repeat x fold rows
  std::vector<double> repeat_means;
  double stderr_over_repeats = 0;   // standard error across per-repeat means
};

// Aggregates recomputed from rows (mean and both standard errors).
CvReport summarize(std::vector<FoldResult> rows);

// Loads the dataset named by the config from data_dir.
GraphDataset load_dataset(const ExperimentConfig& cfg);

// Grid preprocessing with optional cache; returns the set and whether it was
// served from the cache.
std::pair<GridSet, bool> prepare_grids(const ExperimentConfig& cfg, const GraphDataset& ds);

// Full cross-validation protocol: per repeat a fresh stratified split, per
// fold an independently seeded model trained on the other folds. Transductive
// prototype fitting uses every graph's structure (never test labels);
// inductive refits prototypes per fold from training graphs only. Fold tasks
// run in parallel up to cfg.threads.
CvReport run_cross_validation(const ExperimentConfig& cfg, const GraphDataset& ds);

// Trains one model with the given fold as test set; writes a checkpoint to
// out_dir when save_checkpoint is set.
FoldResult train_single(const ExperimentConfig& cfg, const GraphDataset& ds, int test_fold,
                        bool save_checkpoint = true);

// CSV persistence: columns repeat,fold,accuracy,epochs,seconds.
void write_results_csv(const std::filesystem::path& path, std::span<const FoldResult> rows);
std::vector<FoldResult> read_results_csv(const std::filesystem::path& path);

void write_summary_json(const std::filesystem::path& path, const ExperimentConfig& cfg,
                        const CvReport& report);

// Text table over result rows plus aggregate lines.
std::string render_report(const CvReport& report, const std::string& title);

// Side-by-side table of two mode runs over the same protocol.
std::string render_mode_comparison(const CvReport& directed, const CvReport& undirected,
                                   const std::string& dataset);

// Runs cross-validation for every grid size in ms; returns (M, report) pairs.
std::vector<std::pair<int, CvReport>> sweep_grid_sizes(const ExperimentConfig& cfg,
                                                       const GraphDataset& ds,
                                                       std::span<const int> ms);

std::filesystem::path results_csv_path(const ExperimentConfig& cfg);
std::filesystem::path summary_json_path(const ExperimentConfig& cfg);

}  // namespace basgcn
