#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "sparsedet/common.hpp"
#include "sparsedet/model.hpp"

namespace sparsedet {

/// One (cell, class) pair with its joint confidence score.
struct PixelCandidate {
  int y = 0;
  int x = 0;
  int class_id = 0;
  double score = 0.0;
};

/// Which selection stage(s) produced an entry.
enum SelectionTag : uint8_t {
  kTagFg = 1,
  kTagConf = 2,
  kTagPerClass = 4,
  kTagGt = 8,
};

struct SelectionEntry {
  int y = 0;
  int x = 0;
  int class_id = 0;
  double score = 0.0;
  uint8_t tags = 0;

  friend bool operator==(const SelectionEntry& a, const SelectionEntry& b) {
    return a.y == b.y && a.x == b.x && a.class_id == b.class_id;
  }
};

/// Duplicate-free set of (y, x, class) triples kept in (y, x, class) order.
/// Inserting an existing triple merges tags and keeps the larger score, which
/// realizes the union-with-dedup contract of the selection equations.
class SelectionSet {
 public:
  void insert(const SelectionEntry& e);
  void merge(const SelectionSet& other);
  bool contains(int y, int x, int class_id) const;

  const std::vector<SelectionEntry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  bool operator==(const SelectionSet& o) const;

 private:
  std::vector<SelectionEntry> entries_;  // sorted by (y, x, class_id)
};

/// thr filters the prompt-guided stage; k is the global top-k budget with 0
/// meaning "1% of all (cell, class) pairs"; k_j is the per-class budget.
struct ClaConfig {
  double thr = 0.5;
  int k = 0;
  int k_j = 10;
};

/// Resolves the auto top-k budget for a grid.
int effective_k(const ClaConfig& cfg, size_t total_pairs);

/// A prompt is a set of class ids; nullopt disables prompt filtering
/// entirely (the "no-prompt" ablation).
using PromptClasses = std::optional<std::set<int>>;

/// Candidates for every (cell, class) pair of a score raster.
std::vector<PixelCandidate> make_candidates(const Grid3<double>& scores);

/// Pixels whose argmax class is in the prompt and whose score exceeds thr.
/// The per-cell argmax is computed over the candidates present for that cell
/// (ties toward the lower class id). Skipped entirely without a prompt.
SelectionSet select_fg(const std::vector<PixelCandidate>& candidates,
                       const PromptClasses& prompt, double thr);

/// k highest-scoring (cell, class) pairs; ties break by (y, x, class).
SelectionSet select_topk(const std::vector<PixelCandidate>& candidates, int k);

/// Per-class top k_j over each prompt class, or over every class present in
/// the candidates when no prompt is given.
SelectionSet select_per_class(const std::vector<PixelCandidate>& candidates,
                              const PromptClasses& prompt, int k_j);

/// Union of the three stages, deduplicated.
SelectionSet assign_unlabeled(const std::vector<PixelCandidate>& candidates,
                              const PromptClasses& prompt, const ClaConfig& cfg,
                              size_t total_pairs);

/// assign_unlabeled plus the annotated ground-truth pixels.
SelectionSet assign_sparse(const std::vector<PixelCandidate>& candidates,
                           const PromptClasses& prompt, const ClaConfig& cfg,
                           size_t total_pairs, const SelectionSet& gt_pixels);

/// The plain top-k baseline, exposed as a named strategy.
SelectionSet assign_global_topk(const std::vector<PixelCandidate>& candidates, int k);

/// Annotated cells as a selection set (score 1, tag gt).
SelectionSet gt_selection(const Grid3<uint8_t>& gt_mask);

}  // namespace sparsedet
