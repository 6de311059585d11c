#include "sparsedet/assign.hpp"

#include <algorithm>
#include <map>
#include <tuple>

namespace sparsedet {

namespace {

std::tuple<int, int, int> key(const SelectionEntry& e) {
  return {e.y, e.x, e.class_id};
}

bool candidate_less(const PixelCandidate& a, const PixelCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tuple(a.y, a.x, a.class_id) < std::tuple(b.y, b.x, b.class_id);
}

SelectionEntry entry_from(const PixelCandidate& c, uint8_t tag) {
  return {c.y, c.x, c.class_id, c.score, tag};
}

}  // namespace

void SelectionSet::insert(const SelectionEntry& e) {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), e,
                             [](const SelectionEntry& a, const SelectionEntry& b) {
                               return key(a) < key(b);
                             });
  if (it != entries_.end() && key(*it) == key(e)) {
    it->tags |= e.tags;
    it->score = std::max(it->score, e.score);
    return;
  }
  entries_.insert(it, e);
}

void SelectionSet::merge(const SelectionSet& other) {
  for (const SelectionEntry& e : other.entries_) insert(e);
}

bool SelectionSet::contains(int y, int x, int class_id) const {
  SelectionEntry probe{y, x, class_id, 0.0, 0};
  auto it = std::lower_bound(entries_.begin(), entries_.end(), probe,
                             [](const SelectionEntry& a, const SelectionEntry& b) {
                               return key(a) < key(b);
                             });
  return it != entries_.end() && key(*it) == key(probe);
}

bool SelectionSet::operator==(const SelectionSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (!(key(entries_[i]) == key(o.entries_[i]))) return false;
  }
  return true;
}

int effective_k(const ClaConfig& cfg, size_t total_pairs) {
  if (cfg.k > 0) return cfg.k;
  return std::max<int>(1, static_cast<int>(total_pairs / 100));
}

std::vector<PixelCandidate> make_candidates(const Grid3<double>& scores) {
  std::vector<PixelCandidate> out;
  out.reserve(scores.size());
  for (int y = 0; y < scores.h; ++y) {
    for (int x = 0; x < scores.w; ++x) {
      for (int c = 0; c < scores.c; ++c) {
        out.push_back({y, x, c, scores.at(y, x, c)});
      }
    }
  }
  return out;
}

SelectionSet select_fg(const std::vector<PixelCandidate>& candidates,
                       const PromptClasses& prompt, double thr) {
  SelectionSet out;
  if (!prompt.has_value()) return out;  // no-prompt mode skips this stage

  // Per-cell argmax class over the candidates present for that cell.
  std::map<std::pair<int, int>, PixelCandidate> best;
  for (const PixelCandidate& c : candidates) {
    auto [it, inserted] = best.try_emplace({c.y, c.x}, c);
    if (!inserted) {
      const PixelCandidate& cur = it->second;
      if (c.score > cur.score || (c.score == cur.score && c.class_id < cur.class_id)) {
        it->second = c;
      }
    }
  }
  for (const auto& [cell, c] : best) {
    if (prompt->count(c.class_id) > 0 && c.score > thr) {
      out.insert(entry_from(c, kTagFg));
    }
  }
  return out;
}

SelectionSet select_topk(const std::vector<PixelCandidate>& candidates, int k) {
  std::vector<PixelCandidate> sorted = candidates;
  std::sort(sorted.begin(), sorted.end(), candidate_less);
  SelectionSet out;
  const size_t n = std::min<size_t>(k, sorted.size());
  for (size_t i = 0; i < n; ++i) out.insert(entry_from(sorted[i], kTagConf));
  return out;
}

SelectionSet select_per_class(const std::vector<PixelCandidate>& candidates,
                              const PromptClasses& prompt, int k_j) {
  std::set<int> classes;
  if (prompt.has_value() && !prompt->empty()) {
    classes = *prompt;
  } else {
    for (const PixelCandidate& c : candidates) classes.insert(c.class_id);
  }

  SelectionSet out;
  std::vector<PixelCandidate> pool;
  for (int cls : classes) {
    pool.clear();
    for (const PixelCandidate& c : candidates) {
      if (c.class_id == cls) pool.push_back(c);
    }
    std::sort(pool.begin(), pool.end(), candidate_less);
    const size_t n = std::min<size_t>(k_j, pool.size());
    for (size_t i = 0; i < n; ++i) out.insert(entry_from(pool[i], kTagPerClass));
  }
  return out;
}

SelectionSet assign_unlabeled(const std::vector<PixelCandidate>& candidates,
                              const PromptClasses& prompt, const ClaConfig& cfg,
                              size_t total_pairs) {
  SelectionSet out = select_fg(candidates, prompt, cfg.thr);
  out.merge(select_topk(candidates, effective_k(cfg, total_pairs)));
  out.merge(select_per_class(candidates, prompt, cfg.k_j));
  return out;
}

SelectionSet assign_sparse(const std::vector<PixelCandidate>& candidates,
                           const PromptClasses& prompt, const ClaConfig& cfg,
                           size_t total_pairs, const SelectionSet& gt_pixels) {
  SelectionSet out = assign_unlabeled(candidates, prompt, cfg, total_pairs);
  out.merge(gt_pixels);
  return out;
}

SelectionSet assign_global_topk(const std::vector<PixelCandidate>& candidates, int k) {
  return select_topk(candidates, k);
}

SelectionSet gt_selection(const Grid3<uint8_t>& gt_mask) {
  SelectionSet out;
  for (int y = 0; y < gt_mask.h; ++y) {
    for (int x = 0; x < gt_mask.w; ++x) {
      for (int c = 0; c < gt_mask.c; ++c) {
        if (gt_mask.at(y, x, c) != 0) out.insert({y, x, c, 1.0, kTagGt});
      }
    }
  }
  return out;
}

}  // namespace sparsedet
