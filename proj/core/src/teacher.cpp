#include "sparsedet/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sparsedet/errors.hpp"
#include "sparsedet/rng.hpp"

namespace sparsedet {

namespace {

constexpr uint64_t kTagInit = 0x1417;
constexpr uint64_t kTagShuffle = 0x5bff1e;
constexpr uint64_t kTagView = 0x71e35;

void add_scaled(OutputGrads& acc, const OutputGrads& g, double scale) {
  for (size_t i = 0; i < acc.d_class_logits.data.size(); ++i) {
    acc.d_class_logits.data[i] += scale * g.d_class_logits.data[i];
  }
  for (size_t i = 0; i < acc.d_quality_logit.data.size(); ++i) {
    acc.d_quality_logit.data[i] += scale * g.d_quality_logit.data[i];
  }
  for (size_t i = 0; i < acc.d_regression.data.size(); ++i) {
    acc.d_regression.data[i] += scale * g.d_regression.data[i];
  }
}

void scale_grads(OutputGrads& g, double scale) {
  for (double& v : g.d_class_logits.data) v *= scale;
  for (double& v : g.d_quality_logit.data) v *= scale;
  for (double& v : g.d_regression.data) v *= scale;
}

Grid3<double> flip_grid3_x(const Grid3<double>& g) {
  Grid3<double> out(g.h, g.w, g.c);
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      for (int k = 0; k < g.c; ++k) out.at(y, x, k) = g.at(y, g.w - 1 - x, k);
    }
  }
  return out;
}

SelectionSet flip_selection_x(const SelectionSet& sel, int grid_w) {
  SelectionSet out;
  for (const SelectionEntry& e : sel.entries()) {
    out.insert({e.y, grid_w - 1 - e.x, e.class_id, e.score, e.tags});
  }
  return out;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.total_iters < 0 || cfg.burn_in_iters < 0 || cfg.burn_in_iters > cfg.total_iters) {
    throw std::invalid_argument("TrainConfig: need 0 <= burn_in_iters <= total_iters");
  }
  if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (cfg.ema_momentum < 0.0 || cfg.ema_momentum > 1.0) {
    throw std::invalid_argument("TrainConfig: ema_momentum must be in [0, 1]");
  }
  if (cfg.unsup_weight < 0.0) throw std::invalid_argument("TrainConfig: unsup_weight must be >= 0");
  if (cfg.eval_interval < 1 || cfg.log_interval < 1) {
    throw std::invalid_argument("TrainConfig: intervals must be >= 1");
  }
}

ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double m) {
  if (teacher.shape() != student.shape()) {
    throw std::invalid_argument("ema_update: shape mismatch");
  }
  if (m < 0.0 || m > 1.0) {
    throw std::invalid_argument("ema_update: momentum must be in [0, 1]");
  }
  ModelParams out = teacher;
  auto& t = out.flat();
  const auto& s = student.flat();
  for (size_t i = 0; i < t.size(); ++i) {
    // equal elements stay put so the fixed point is exact for every m
    if (t[i] != s[i]) t[i] = m * t[i] + (1.0 - m) * s[i];
  }
  return out;
}

BranchViews branch_views(const Scene& scene, const FeatureLayout& layout,
                         const ViewConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  BranchViews views;
  views.teacher_view = scene.features;
  views.flipped = rng.uniform() < cfg.flip_prob;
  views.student_view =
      views.flipped ? flip_features_x(scene.features, layout) : scene.features;
  if (cfg.noise_sigma > 0.0) {
    for (double& v : views.student_view.data) v += rng.normal(0.0, cfg.noise_sigma);
  }
  return views;
}

StepStats train_step(TrainState& state, const TrainData& data,
                     const std::vector<int>& batch, const TrainConfig& cfg,
                     const std::function<void(int scene_id, const SelectionSet&)>&
                         selection_observer) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

  // Phase handoff happens exactly once, at burn_in_iters.
  if (state.phase == Phase::kBurnIn && state.iteration >= cfg.burn_in_iters) {
    state.teacher = state.student;
    state.phase = Phase::kMutual;
  }
  const bool mutual = state.phase == Phase::kMutual;

  StepStats stats;
  ModelParams grads(state.student.shape());
  const double batch_scale = 1.0 / static_cast<double>(batch.size());

  for (int idx : batch) {
    const Scene& scene = data.corpus.at(idx);
    const SparseAnnotations& ann = data.annotations.at(idx);
    const bool annotated = !ann.kept.empty();
    const bool run_unsup = mutual && cfg.unsup_weight > 0.0;
    if (!annotated && !run_unsup) continue;  // nothing supervises this scene yet

    const BranchViews views =
        branch_views(scene, data.layout, cfg.views,
                     derive_seed(cfg.seed, kTagView, static_cast<uint64_t>(scene.id),
                                 static_cast<uint64_t>(state.iteration)));

    ForwardCache cache;
    const DenseOutput student_out = forward(state.student, views.student_view, &cache);
    OutputGrads scene_grads = OutputGrads::zeros(scene.grid_h, scene.grid_w,
                                                 scene.num_classes);

    if (annotated) {
      const std::vector<Instance> view_ann =
          views.flipped ? flip_instances_x(ann.kept, scene.grid_w) : ann.kept;
      const Grid3<uint8_t> mask =
          gt_pixel_mask(view_ann, scene.grid_h, scene.grid_w, scene.num_classes);
      const LossResult sup = supervised_loss(student_out, view_ann, mask, cfg.ahr);
      if (!std::isfinite(sup.loss)) {
        throw NumericalError("train_step: non-finite supervised loss at iter " +
                             std::to_string(state.iteration));
      }
      stats.sup_cls += sup.cls * batch_scale;
      stats.sup_quality += sup.quality * batch_scale;
      stats.sup_reg += sup.regression * batch_scale;
      ++stats.annotated_scenes;
      add_scaled(scene_grads, sup.grads, 1.0);
    }

    if (run_unsup) {
      const DenseOutput teacher_out = forward(state.teacher, views.teacher_view);
      const Grid3<double> scores = joint_confidence(teacher_out);
      const std::vector<PixelCandidate> candidates = make_candidates(scores);
      const size_t total_pairs = candidates.size();

      PromptClasses prompt;
      switch (cfg.prompt_mode) {
        case PromptMode::kNoPrompt:
          prompt = std::nullopt;
          break;
        case PromptMode::kGtPrompt:
          prompt = class_set(scene.instances);
          break;
        case PromptMode::kPredictor: {
          auto it = data.prompts.find(scene.id);
          if (it == data.prompts.end()) {
            throw std::invalid_argument("train_step: missing prompt for scene " +
                                        std::to_string(scene.id));
          }
          prompt = it->second.classes;
          break;
        }
      }

      SelectionSet selected;
      if (cfg.assignment == AssignmentStrategy::kGlobalTopk) {
        selected = assign_global_topk(candidates, effective_k(cfg.cla, total_pairs));
      } else if (annotated) {
        const Grid3<uint8_t> raw_mask =
            gt_pixel_mask(ann.kept, scene.grid_h, scene.grid_w, scene.num_classes);
        selected = assign_sparse(candidates, prompt, cfg.cla, total_pairs,
                                 gt_selection(raw_mask));
      } else {
        selected = assign_unlabeled(candidates, prompt, cfg.cla, total_pairs);
      }
      if (selection_observer) selection_observer(scene.id, selected);
      stats.selected_total += selected.size();

      // Teacher works in raw coordinates; mirror its outputs onto a flipped
      // student view.
      const Grid3<double>& s_scores = views.flipped ? flip_grid3_x(scores) : scores;
      const SelectionSet& s_selected =
          views.flipped ? flip_selection_x(selected, scene.grid_w) : selected;

      const LossResult dl = distill_loss(student_out, s_scores, s_selected, cfg.ahr);
      if (!std::isfinite(dl.loss)) {
        throw NumericalError("train_step: non-finite distillation loss at iter " +
                             std::to_string(state.iteration));
      }
      stats.unsup += dl.loss * batch_scale;
      add_scaled(scene_grads, dl.grads, cfg.unsup_weight);
    }

    scale_grads(scene_grads, batch_scale);
    backward(state.student, views.student_view, cache, scene_grads, grads);
  }

  sgd_step(state.student, grads, state.velocity, cfg.optimizer);
  if (mutual) {
    state.teacher = ema_update(state.teacher, state.student, cfg.ema_momentum);
  }
  ++state.iteration;
  return stats;
}

Trainer::Trainer(const TrainData& data, const std::vector<Scene>* eval_corpus,
                 const TrainConfig& cfg)
    : data_(data), eval_corpus_(eval_corpus), cfg_(cfg) {
  validate(cfg_);
  if (data.corpus.size() != data.annotations.size()) {
    throw std::invalid_argument("Trainer: corpus/annotation length mismatch");
  }
  for (size_t i = 0; i < data.corpus.size(); ++i) {
    if (data.corpus[i].id != data.annotations[i].scene_id) {
      throw std::invalid_argument("Trainer: corpus/annotation scene id mismatch");
    }
  }
  if (cfg.prompt_mode == PromptMode::kPredictor) {
    for (const Scene& scene : data.corpus) {
      if (data.prompts.find(scene.id) == data.prompts.end()) {
        throw std::invalid_argument("Trainer: predictor mode but no prompt for scene " +
                                    std::to_string(scene.id));
      }
    }
  }

  const ModelShape shape{data.layout.dim(),
                         data.corpus.empty() ? 0 : data.corpus.front().num_classes,
                         cfg.hidden_dim};
  state_.student = ModelParams::random_init(shape, derive_seed(cfg.seed, kTagInit),
                                            cfg.init_scale);
  state_.teacher = state_.student;
  state_.velocity = ModelParams(shape);
  state_.iteration = 0;
  state_.phase = Phase::kBurnIn;
}

void Trainer::restore(const TrainState& state) { state_ = state; }

std::vector<int> Trainer::batch_for(int64_t iter) const {
  const int64_t n = static_cast<int64_t>(data_.corpus.size());
  std::vector<int> batch;
  batch.reserve(cfg_.batch_size);
  int64_t cached_epoch = -1;
  std::vector<int> perm;
  for (int j = 0; j < cfg_.batch_size; ++j) {
    const int64_t draw = iter * cfg_.batch_size + j;
    const int64_t epoch = draw / n;
    if (epoch != cached_epoch) {
      perm.resize(n);
      for (int64_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
      Rng rng(derive_seed(cfg_.seed, kTagShuffle, static_cast<uint64_t>(epoch)));
      for (int64_t i = n - 1; i > 0; --i) {
        std::swap(perm[i], perm[rng.uniform_int(0, static_cast<int>(i))]);
      }
      cached_epoch = epoch;
    }
    batch.push_back(perm[draw % n]);
  }
  return batch;
}

MapReport Trainer::evaluate() const {
  const std::vector<Scene>& eval_scenes =
      eval_corpus_ != nullptr ? *eval_corpus_ : data_.corpus;
  const ModelParams& model =
      state_.phase == Phase::kBurnIn ? state_.student : state_.teacher;

  std::vector<Detection> dets;
  for (const Scene& scene : eval_scenes) {
    const DenseOutput out = forward(model, scene.features);
    for (Detection& d : decode(out, scene.id, cfg_.decode)) dets.push_back(d);
  }
  const int C = eval_scenes.empty() ? 0 : eval_scenes.front().num_classes;
  return map_report(dets, gt_boxes(eval_scenes), C);
}

void Trainer::log_step(const StepStats& stats) {
  nlohmann::json rec{
      {"iter", state_.iteration},
      {"phase", state_.phase == Phase::kBurnIn ? "burn-in" : "mutual"},
      {"sup_cls", stats.sup_cls},
      {"sup_quality", stats.sup_quality},
      {"sup_reg", stats.sup_reg},
      {"unsup", stats.unsup},
      {"selected", stats.selected_total},
      {"annotated_scenes", stats.annotated_scenes},
  };
  metrics_lines_.push_back(rec.dump());
}

void Trainer::log_eval(const MapReport& report) {
  nlohmann::json rec{
      {"iter", state_.iteration},
      {"event", "eval"},
      {"ap50", report.ap50},
      {"ap75", report.ap75},
      {"map5095", report.map5095},
  };
  metrics_lines_.push_back(rec.dump());
  snapshots_.push_back({state_.iteration, report.ap50, report.ap75, report.map5095});
}

RunResult Trainer::run(const std::function<void(const TrainState&)>& on_checkpoint,
                       const std::function<void(int scene_id, const SelectionSet&)>&
                           selection_observer) {
  while (state_.iteration < cfg_.total_iters) {
    const std::vector<int> batch = batch_for(state_.iteration);
    const StepStats stats = train_step(state_, data_, batch, cfg_, selection_observer);
    if (state_.iteration % cfg_.log_interval == 0 || state_.iteration == cfg_.total_iters) {
      log_step(stats);
    }
    if (state_.iteration % cfg_.eval_interval == 0 || state_.iteration == cfg_.total_iters) {
      log_eval(evaluate());
    }
    if (on_checkpoint && cfg_.checkpoint_interval > 0 &&
        state_.iteration % cfg_.checkpoint_interval == 0) {
      on_checkpoint(state_);
    }
  }

  // A run that never left burn-in still hands its trained student over as
  // the model of record.
  if (state_.phase == Phase::kBurnIn) {
    state_.teacher = state_.student;
    state_.phase = Phase::kMutual;
  }
  if (on_checkpoint) on_checkpoint(state_);

  RunResult result;
  result.final_state = state_;
  result.metrics_lines = metrics_lines_;
  result.snapshots = snapshots_;
  return result;
}

RunResult run_training(const TrainData& data, const std::vector<Scene>* eval_corpus,
                       const TrainConfig& cfg) {
  Trainer trainer(data, eval_corpus, cfg);
  return trainer.run();
}

}  // namespace sparsedet
