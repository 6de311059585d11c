#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsedet/scene.hpp"
#include "sparsedet/teacher.hpp"

namespace sparsedet {

/// The strategy grid of the comparison harness: the supervised baseline, the
/// plain top-k distillation baseline, and class-aware assignment under the
/// three prompt modes.
enum class Strategy {
  kSupervisedOnly,
  kGlobalTopk,
  kClaNoPrompt,
  kClaPredictor,
  kClaGtPrompt,
};

const char* strategy_name(Strategy s);
std::vector<Strategy> all_strategies();

/// Applies a strategy to a base training config (assignment, prompt mode,
/// and for the supervised baseline a full-length burn-in).
TrainConfig config_for(Strategy strategy, const TrainConfig& base);

struct CompareSetup {
  const std::vector<Scene>& corpus;
  const std::vector<Scene>& eval_corpus;
  FeatureLayout layout;
  std::vector<std::string> category_names;
  TrainConfig base;            // per-job seed and strategy fields are overridden
  double mock_accuracy = 0.9;  // predictor strategy uses a seeded mock
  bool at_least_one_per_class = false;
};

struct CompareJob {
  Strategy strategy = Strategy::kSupervisedOnly;
  double rate = 0.05;
  uint64_t seed = 1;
};

struct CompareResult {
  Strategy strategy = Strategy::kSupervisedOnly;
  double rate = 0.0;
  uint64_t seed = 0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double map5095 = 0.0;
  std::vector<EvalSnapshot> snapshots;
};

/// One training run: sparsify at the job's rate, mock prompts refined with
/// the annotations, train with the strategy's config, evaluate the final
/// teacher on the held-out corpus. Annotations and prompts depend only on
/// (rate, seed) so strategies compare against identical supervision.
CompareResult run_compare_job(const CompareSetup& setup, const CompareJob& job);

/// Full grid, optionally with a bounded worker pool. Results are ordered by
/// (strategy, rate, seed) regardless of the number of jobs.
std::vector<CompareResult> run_compare_grid(const CompareSetup& setup,
                                            const std::vector<Strategy>& strategies,
                                            const std::vector<double>& rates,
                                            const std::vector<uint64_t>& seeds,
                                            int jobs);

/// Mean AP50 over seeds for one (strategy, rate) cell of the grid.
double mean_ap50(const std::vector<CompareResult>& results, Strategy strategy,
                 double rate);

std::string compare_table_text(const std::vector<CompareResult>& results,
                               const std::vector<Strategy>& strategies,
                               const std::vector<double>& rates);
std::string compare_table_csv(const std::vector<CompareResult>& results);

}  // namespace sparsedet
