#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sparsedet/assign.hpp"
#include "sparsedet/eval.hpp"
#include "sparsedet/loss.hpp"
#include "sparsedet/model.hpp"
#include "sparsedet/prompt.hpp"
#include "sparsedet/scene.hpp"

namespace sparsedet {

enum class AssignmentStrategy { kCla, kGlobalTopk };
enum class PromptMode { kNoPrompt, kPredictor, kGtPrompt };
enum class Phase { kBurnIn, kMutual };

struct ViewConfig {
  double noise_sigma = 0.1;
  double flip_prob = 0.5;
};

struct TrainConfig {
  int total_iters = 12000;
  int burn_in_iters = 6400;
  int batch_size = 4;
  double ema_momentum = 0.999;
  double unsup_weight = 1.0;
  AssignmentStrategy assignment = AssignmentStrategy::kCla;
  PromptMode prompt_mode = PromptMode::kPredictor;
  AhrConfig ahr{.mode = AhrMode::kStandardFocal};  // trainable default; see FORMATS.md
  ClaConfig cla;
  SgdConfig optimizer;
  ViewConfig views;
  DecodeConfig decode;
  int hidden_dim = 0;
  double init_scale = 0.01;
  int eval_interval = 100;
  int log_interval = 20;
  int checkpoint_interval = 0;  // 0 disables periodic checkpoints
  uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct TrainState {
  ModelParams student;
  ModelParams teacher;
  ModelParams velocity;
  int64_t iteration = 0;
  Phase phase = Phase::kBurnIn;
};

/// teacher' = m * teacher + (1 - m) * student, elementwise.
/// Throws std::invalid_argument on shape mismatch or m outside [0, 1].
ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double m);

struct BranchViews {
  Grid3<double> teacher_view;  // raw raster
  Grid3<double> student_view;  // seeded noise, optionally mirrored
  bool flipped = false;
};

/// Weak/strong view pair for one scene; bitwise reproducible for a given
/// seed. The caller folds the iteration into the seed to refresh noise
/// across visits.
BranchViews branch_views(const Scene& scene, const FeatureLayout& layout,
                         const ViewConfig& cfg, uint64_t seed);

/// Immutable per-run inputs. Annotations are parallel to the corpus;
/// prompts are keyed by scene id and only consulted in predictor mode.
struct TrainData {
  const std::vector<Scene>& corpus;
  const std::vector<SparseAnnotations>& annotations;
  const std::map<int, ClassPrompt>& prompts;
  FeatureLayout layout;
};

struct StepStats {
  double sup_cls = 0.0;
  double sup_quality = 0.0;
  double sup_reg = 0.0;
  double unsup = 0.0;
  size_t selected_total = 0;
  int annotated_scenes = 0;
};

struct EvalSnapshot {
  int64_t iter = 0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double map5095 = 0.0;
};

struct RunResult {
  TrainState final_state;  // final_state.teacher is the model of record
  std::vector<std::string> metrics_lines;  // JSON lines, one per log/eval event
  std::vector<EvalSnapshot> snapshots;
};

/// One optimization step over a batch of scene indices. Handles the
/// burn-in -> mutual handoff (teacher initialized from the student exactly at
/// burn_in_iters), the supervised branch on annotated scenes, the
/// distillation branch in the mutual phase, one SGD step and one EMA update.
/// Throws NumericalError when a loss goes non-finite.
StepStats train_step(TrainState& state, const TrainData& data,
                     const std::vector<int>& batch, const TrainConfig& cfg,
                     const std::function<void(int scene_id, const SelectionSet&)>&
                         selection_observer = nullptr);

class Trainer {
 public:
  /// eval_corpus supplies full ground truth for snapshot evaluation; when
  /// null the training corpus's own ground truth is used.
  Trainer(const TrainData& data, const std::vector<Scene>* eval_corpus,
          const TrainConfig& cfg);

  /// Starts from a checkpointed state instead of fresh initialization.
  void restore(const TrainState& state);

  /// Runs to total_iters. on_checkpoint (optional) fires every
  /// checkpoint_interval iterations and once at the end.
  RunResult run(const std::function<void(const TrainState&)>& on_checkpoint = nullptr,
                const std::function<void(int scene_id, const SelectionSet&)>&
                    selection_observer = nullptr);

  const TrainState& state() const { return state_; }
  const std::vector<std::string>& metrics_lines() const { return metrics_lines_; }

  /// Scene indices for one iteration: epoch-shuffled, seed-derived,
  /// stateless in the iteration so resumed runs reproduce exactly.
  std::vector<int> batch_for(int64_t iter) const;

  /// AP of the phase-appropriate model (student during burn-in, teacher
  /// after) on the evaluation corpus.
  MapReport evaluate() const;

 private:
  void log_step(const StepStats& stats);
  void log_eval(const MapReport& report);

  const TrainData& data_;
  const std::vector<Scene>* eval_corpus_;
  TrainConfig cfg_;
  TrainState state_;
  std::vector<std::string> metrics_lines_;
  std::vector<EvalSnapshot> snapshots_;
};

/// Convenience wrapper: fresh Trainer, full run. Returns the teacher as the
/// final model together with the metrics log.
RunResult run_training(const TrainData& data, const std::vector<Scene>* eval_corpus,
                       const TrainConfig& cfg);

}  // namespace sparsedet
